//! Single-run orchestration: data preparation, the training loop,
//! evaluation, and embedding export.
//!
//! The loop is fully deterministic given the config: data generation, model
//! init, and batch order each draw from their own seeded stream, so two
//! runs with the same config produce identical parameters and metrics
//! (wall-clock timing aside).  Every logged step re-checks the run's core
//! invariants — class weights on the simplex, losses finite, the reported
//! total consistent with its parts — and aborts loudly rather than continue
//! from corrupt state.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::autodiff::{Tape, Tensor, Var};
use crate::data::{
    generate_synthetic, load_csv, make_batches, CsvSchema, Dataset,
};
use crate::error::{Result, SanError};
use crate::harness::config::{DataSource, RunConfig};
use crate::harness::metrics::MetricsRow;
use crate::losses::{
    san_objective, BatchSplit, ClassWeightState, InstanceWeighting, LossBreakdown, WeightMode,
};
use crate::model::{build_model_with_heads, SanModel};
use crate::optim::{lambda_schedule, lr_schedule, progress, SgdMomentum, Variant};
use crate::Real;

// ── data preparation ─────────────────────────────────────────────────────

/// Materialized data for one run.
pub struct PreparedData {
    /// Labeled source training set.
    pub source: Dataset,
    /// Unlabeled target training set.
    pub target: Dataset,
    /// True labels of the target training rows, when known (synthetic
    /// data).  Never shown to training; used for embedding export.
    pub target_labels: Option<Vec<usize>>,
    /// Evaluation inputs (the target set itself, or a separate eval CSV).
    pub eval_x: Tensor,
    /// Evaluation labels; `None` leaves accuracy columns as NaN.
    pub eval_labels: Option<Vec<usize>>,
    pub num_classes: usize,
}

/// Load or generate the datasets a config describes.
pub fn prepare_data(cfg: &RunConfig) -> Result<PreparedData> {
    match &cfg.data {
        DataSource::Synthetic(spec) => {
            let d = generate_synthetic(spec, cfg.seed)?;
            Ok(PreparedData {
                eval_x: d.target.x.clone(),
                eval_labels: Some(d.target_labels.clone()),
                target_labels: Some(d.target_labels),
                num_classes: spec.source_classes,
                source: d.source,
                target: d.target,
            })
        }
        DataSource::Files {
            source,
            target,
            target_eval,
            has_header,
        } => {
            let source = load_csv(
                source,
                CsvSchema {
                    has_header: *has_header,
                    labeled: true,
                },
            )?;
            let target = load_csv(
                target,
                CsvSchema {
                    has_header: *has_header,
                    labeled: false,
                },
            )?;
            if source.dim() != target.dim() {
                return Err(SanError::ShapeMismatch {
                    op: "prepare_data",
                    lhs: source.x.shape.clone(),
                    rhs: target.x.shape.clone(),
                });
            }
            let num_classes = source.num_classes()?;
            let (eval_x, eval_labels) = match target_eval {
                Some(path) => {
                    let eval = load_csv(
                        path,
                        CsvSchema {
                            has_header: *has_header,
                            labeled: true,
                        },
                    )?;
                    if eval.dim() != source.dim() {
                        return Err(SanError::ShapeMismatch {
                            op: "prepare_data",
                            lhs: eval.x.shape.clone(),
                            rhs: source.x.shape.clone(),
                        });
                    }
                    (eval.x.clone(), eval.labels)
                }
                None => (target.x.clone(), None),
            };
            if let Some(labels) = &eval_labels {
                if let Some((row, &label)) =
                    labels.iter().enumerate().find(|(_, &l)| l >= num_classes)
                {
                    return Err(SanError::LabelOutOfRange {
                        label,
                        classes: num_classes,
                        row,
                    });
                }
            }
            Ok(PreparedData {
                source,
                target,
                target_labels: None,
                eval_x,
                eval_labels,
                num_classes,
            })
        }
    }
}

// ── evaluation ───────────────────────────────────────────────────────────

/// Accuracy summary of one prediction set.
#[derive(Debug, Clone)]
pub struct EvalReport {
    /// Fraction of correct predictions; NaN without labels.
    pub accuracy: Real,
    /// Accuracy per true class; NaN for classes with no examples.
    pub per_class_accuracy: Vec<Real>,
    /// Number of evaluation examples per true class.
    pub per_class_counts: Vec<usize>,
}

/// Score predictions against (optional) labels.
pub fn accuracy_report(
    preds: &[usize],
    labels: Option<&[usize]>,
    num_classes: usize,
) -> Result<EvalReport> {
    let Some(labels) = labels else {
        return Ok(EvalReport {
            accuracy: Real::NAN,
            per_class_accuracy: vec![Real::NAN; num_classes],
            per_class_counts: vec![0; num_classes],
        });
    };
    if preds.len() != labels.len() {
        return Err(SanError::ShapeMismatch {
            op: "accuracy_report",
            lhs: vec![preds.len()],
            rhs: vec![labels.len()],
        });
    }
    if labels.is_empty() {
        return Err(SanError::Empty {
            what: "evaluation labels",
        });
    }
    let mut counts = vec![0usize; num_classes];
    let mut correct = vec![0usize; num_classes];
    for (row, (&pred, &label)) in preds.iter().zip(labels).enumerate() {
        if label >= num_classes {
            return Err(SanError::LabelOutOfRange {
                label,
                classes: num_classes,
                row,
            });
        }
        counts[label] += 1;
        if pred == label {
            correct[label] += 1;
        }
    }
    let total_correct: usize = correct.iter().sum();
    let per_class_accuracy = counts
        .iter()
        .zip(&correct)
        .map(|(&n, &c)| if n == 0 { Real::NAN } else { c as Real / n as Real })
        .collect();
    Ok(EvalReport {
        accuracy: total_correct as Real / labels.len() as Real,
        per_class_accuracy,
        per_class_counts: counts,
    })
}

/// Run the classifier on `x` and score it against `labels`.
pub fn evaluate(
    model: &SanModel,
    x: &Tensor,
    labels: Option<&[usize]>,
    num_classes: usize,
) -> Result<EvalReport> {
    accuracy_report(&model.predict(x)?, labels, num_classes)
}

// ── the training loop ────────────────────────────────────────────────────

/// A finished training run.
pub struct TrainOutcome {
    pub model: SanModel,
    pub records: Vec<MetricsRow>,
    pub final_eval: EvalReport,
    pub final_class_weights: Vec<Real>,
    pub num_classes: usize,
}

/// What the objective looks like for a given variant: which critics are
/// active, how they are weighted, and whether the entropy term is on.
struct VariantPlan<'a> {
    head_weights: Vec<Real>,
    domain_probs: &'a [Var],
    weighting: InstanceWeighting<'a>,
    entropy_coef: Real,
}

fn plan_variant<'a>(
    variant: Variant,
    cfg_entropy_coef: Real,
    detach: bool,
    state: &ClassWeightState,
    domain_probs: &'a [Var],
    class_probs_value: &'a Tensor,
) -> VariantPlan<'a> {
    let heads = domain_probs.len();
    match variant {
        Variant::San => VariantPlan {
            head_weights: state.weights().to_vec(),
            domain_probs,
            weighting: if detach {
                InstanceWeighting::Detached(class_probs_value)
            } else {
                InstanceWeighting::Live
            },
            entropy_coef: cfg_entropy_coef,
        },
        Variant::SanEntropy => VariantPlan {
            head_weights: state.weights().to_vec(),
            domain_probs,
            weighting: if detach {
                InstanceWeighting::Detached(class_probs_value)
            } else {
                InstanceWeighting::Live
            },
            entropy_coef: 0.0,
        },
        Variant::SanSelective => VariantPlan {
            head_weights: vec![1.0 / heads as Real; heads],
            domain_probs,
            weighting: InstanceWeighting::Uniform(1.0),
            entropy_coef: cfg_entropy_coef,
        },
        Variant::Dann => VariantPlan {
            head_weights: vec![1.0; heads],
            domain_probs,
            weighting: InstanceWeighting::Uniform(1.0),
            entropy_coef: 0.0,
        },
        Variant::SourceOnly => VariantPlan {
            head_weights: Vec::new(),
            domain_probs: &[],
            weighting: InstanceWeighting::Uniform(1.0),
            entropy_coef: 0.0,
        },
    }
}

fn check_finite(breakdown: &LossBreakdown, step: usize) -> Result<()> {
    let checks = [
        ("label loss", breakdown.label_loss),
        ("entropy loss", breakdown.entropy_loss),
        ("domain loss", breakdown.domain_loss),
        ("total loss", breakdown.total),
    ];
    for (what, v) in checks {
        if !v.is_finite() {
            return Err(SanError::NonFinite {
                what: what.into(),
                step,
            });
        }
    }
    Ok(())
}

fn check_logged_invariants(
    step: usize,
    weights: &[Real],
    class_probs: &Tensor,
    lambda: Real,
    entropy_coef: Real,
    breakdown: &LossBreakdown,
) -> Result<()> {
    for row in 0..class_probs.rows() {
        let row_sum: Real = class_probs.row(row).iter().sum();
        if (row_sum - 1.0).abs() > 1e-9 {
            return Err(SanError::Invariant {
                what: format!("class probability row {row} sums to {row_sum}, expected 1"),
                step,
            });
        }
    }
    let sum: Real = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(SanError::Invariant {
            what: format!("class weights sum to {sum}, expected 1"),
            step,
        });
    }
    if let Some(w) = weights.iter().find(|&&w| !(-1e-9..=1.0 + 1e-9).contains(&w)) {
        return Err(SanError::Invariant {
            what: format!("class weight {w} outside [0, 1]"),
            step,
        });
    }
    if !(0.0..1.0).contains(&lambda) {
        return Err(SanError::Invariant {
            what: format!("lambda {lambda} outside [0, 1)"),
            step,
        });
    }
    let reconstructed = breakdown.label_loss + entropy_coef * breakdown.entropy_loss
        - lambda * breakdown.domain_loss;
    if (breakdown.total - reconstructed).abs() > 1e-9 {
        return Err(SanError::Invariant {
            what: format!(
                "reported total {} disagrees with its parts {}",
                breakdown.total, reconstructed
            ),
            step,
        });
    }
    Ok(())
}

/// Train one model according to `cfg`.
pub fn run_experiment(cfg: &RunConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let data = prepare_data(cfg)?;
    let num_classes = data.num_classes;
    let heads = cfg.variant.num_heads(num_classes);

    let mut model = build_model_with_heads(
        data.source.dim(),
        &cfg.hidden_dims,
        cfg.feature_dim,
        num_classes,
        heads,
        cfg.disc_hidden,
        cfg.seed,
    )?;
    let mut optimizer = SgdMomentum::new(&model, &cfg.train);
    let mut weight_state =
        ClassWeightState::new(num_classes, cfg.train.ema_decay, cfg.weight_mode)?;
    let all_target_rows: Vec<usize> = (0..data.target.len()).collect();

    let started = Instant::now();
    let mut records = Vec::new();
    let mut step = 0usize;
    let mut epoch = 0u64;

    'training: loop {
        if cfg.weight_mode == WeightMode::FullTargetRecompute {
            let (_, probs) = model.infer(&data.target.x)?;
            weight_state.update_from_rows(&probs, &all_target_rows)?;
        }
        let batches = make_batches(&data.source, &data.target, cfg.batch_size, cfg.seed, epoch)?;
        for batch in &batches {
            if step == cfg.total_steps {
                break 'training;
            }
            let p = progress(step, cfg.total_steps)?;
            let lr = lr_schedule(&cfg.train, p)?;
            let lambda = match cfg.variant {
                Variant::SourceOnly => 0.0,
                _ => lambda_schedule(&cfg.train, p)?,
            };

            let mut tape = Tape::new();
            let fwd = model.forward(&mut tape, &batch.x, lambda)?;
            let class_probs_value = tape.value(fwd.class_probs).clone();

            let source_rows = batch.source_rows();
            let target_rows = batch.target_rows();
            let domain_labels = batch.domain_labels();
            if cfg.weight_mode == WeightMode::PerBatchEma {
                weight_state.update_from_rows(&class_probs_value, &target_rows)?;
            }

            let plan = plan_variant(
                cfg.variant,
                cfg.train.entropy_coef,
                cfg.train.detach_instance_weights,
                &weight_state,
                &fwd.domain_probs,
                &class_probs_value,
            );
            let split = BatchSplit {
                source_rows: &source_rows,
                target_rows: &target_rows,
                source_labels: &batch.source_labels,
                domain_labels: &domain_labels,
            };
            let objective = san_objective(
                &mut tape,
                fwd.class_probs,
                plan.domain_probs,
                &split,
                &plan.head_weights,
                plan.weighting,
                lambda,
                plan.entropy_coef,
            )?;
            check_finite(&objective.breakdown, step + 1)?;

            let grads = tape.backward(objective.descent)?;
            optimizer.step(&mut model, &grads, &fwd.param_vars, lr)?;
            step += 1;

            if step % cfg.eval_every == 0 || step == cfg.total_steps {
                check_logged_invariants(
                    step,
                    weight_state.weights(),
                    &class_probs_value,
                    lambda,
                    plan.entropy_coef,
                    &objective.breakdown,
                )?;
                if !model.params().into_iter().all(|t| t.all_finite()) {
                    return Err(SanError::NonFinite {
                        what: "model parameters".into(),
                        step,
                    });
                }
                let eval = evaluate(&model, &data.eval_x, data.eval_labels.as_deref(), num_classes)?;
                records.push(MetricsRow {
                    step,
                    p,
                    lr,
                    lambda,
                    label_loss: objective.breakdown.label_loss,
                    entropy_loss: objective.breakdown.entropy_loss,
                    domain_loss: objective.breakdown.domain_loss,
                    total_loss: objective.breakdown.total,
                    target_accuracy: eval.accuracy,
                    per_class_accuracy: eval.per_class_accuracy,
                    class_weights: weight_state.weights().to_vec(),
                    wall_clock_ms: started.elapsed().as_millis(),
                });
            }
        }
        epoch += 1;
    }

    let final_eval = evaluate(&model, &data.eval_x, data.eval_labels.as_deref(), num_classes)?;
    Ok(TrainOutcome {
        model,
        records,
        final_eval,
        final_class_weights: weight_state.weights().to_vec(),
        num_classes,
    })
}

// ── embedding export ─────────────────────────────────────────────────────

/// Write feature-space embeddings of both domains as CSV with columns
/// `f_0..f_{D-1},label,domain,predicted` (label −1 when unknown, domain 0
/// for source and 1 for target).  Returns the number of data rows written.
pub fn export_embeddings(
    model: &SanModel,
    source: &Dataset,
    target: &Dataset,
    target_labels: Option<&[usize]>,
    path: &Path,
) -> Result<usize> {
    if let Some(l) = target_labels {
        if l.len() != target.len() {
            return Err(SanError::ShapeMismatch {
                op: "export_embeddings",
                lhs: vec![l.len()],
                rhs: vec![target.len()],
            });
        }
    }
    let mut out = String::new();
    let cols: Vec<String> = (0..model.feature_dim).map(|j| format!("f_{j}")).collect();
    let _ = writeln!(out, "{},label,domain,predicted", cols.join(","));

    let mut rows = 0usize;
    for (data, domain) in [(source, 0usize), (target, 1usize)] {
        let (features, probs) = model.infer(&data.x)?;
        let preds = probs.argmax_rows();
        for i in 0..data.len() {
            let label: i64 = match domain {
                0 => data.labels.as_ref().map_or(-1, |l| l[i] as i64),
                _ => target_labels.map_or(-1, |l| l[i] as i64),
            };
            let feat = features
                .row(i)
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",");
            let _ = writeln!(out, "{feat},{label},{domain},{}", preds[i]);
            rows += 1;
        }
    }
    std::fs::write(path, out).map_err(|e| SanError::io(path.display().to_string(), e))?;
    Ok(rows)
}
