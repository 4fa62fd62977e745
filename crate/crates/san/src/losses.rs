//! Loss terms and their assembly into the training objective.
//!
//! The objective has three parts:
//!
//! * **label loss** — cross entropy of the predictor on labeled source rows;
//! * **entropy loss** — mean prediction entropy on unlabeled target rows,
//!   which pushes the classifier toward confident target decisions;
//! * **domain losses** — one two-way cross entropy per discriminator, where
//!   each sample's contribution to head `k` is weighted by the classifier's
//!   (detached) probability that the sample belongs to class `k`, and each
//!   head's loss is further weighted by the average of those probabilities
//!   over target samples.
//!
//! The weighting is what makes the network *selective*: heads for classes
//! the target does not contain receive almost no signal, so the feature
//! extractor is never asked to align target data with outlier classes.
//!
//! Sign convention: the returned `descent` scalar is the thing a plain
//! gradient-descent step minimizes.  Discriminator parameters descend their
//! own cross entropy (they learn to tell the domains apart) while the
//! feature extractor receives that gradient through the reversal point and
//! therefore *maximizes* domain confusion.  The reported `total` instead
//! follows the min–max objective value, with the domain term entering
//! negatively scaled by `lambda`.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Result, SanError};
use crate::Real;

// ── class-weight tracking ────────────────────────────────────────────────

/// How the per-class weights follow the classifier's target predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightMode {
    /// Exponential moving average of per-batch target column means.
    PerBatchEma,
    /// Overwrite with column means over the full target set (the caller
    /// decides when, typically once per epoch).
    FullTargetRecompute,
}

/// Running estimate of how much target probability mass each source class
/// carries.  Starts uniform; always sums to 1.
#[derive(Debug, Clone)]
pub struct ClassWeightState {
    weights: Vec<Real>,
    decay: Real,
    mode: WeightMode,
}

impl ClassWeightState {
    pub fn new(num_classes: usize, decay: Real, mode: WeightMode) -> Result<Self> {
        if num_classes == 0 {
            return Err(SanError::Config("num_classes must be positive".into()));
        }
        if !(0.0..1.0).contains(&decay) {
            return Err(SanError::Config(format!(
                "EMA decay must lie in [0, 1), got {decay}"
            )));
        }
        Ok(ClassWeightState {
            weights: vec![1.0 / num_classes as Real; num_classes],
            decay,
            mode,
        })
    }

    pub fn weights(&self) -> &[Real] {
        &self.weights
    }

    pub fn mode(&self) -> WeightMode {
        self.mode
    }

    /// Fold the class probabilities of the given (target) rows into the
    /// state.  An empty row set leaves the state unchanged.
    pub fn update_from_rows(&mut self, class_probs: &Tensor, rows: &[usize]) -> Result<()> {
        if rows.is_empty() {
            return Ok(());
        }
        let k = self.weights.len();
        if class_probs.shape.len() != 2 || class_probs.cols() != k {
            return Err(SanError::ShapeMismatch {
                op: "class_weights",
                lhs: class_probs.shape.clone(),
                rhs: vec![rows.len(), k],
            });
        }
        let mut mean = vec![0.0; k];
        for &r in rows {
            if r >= class_probs.rows() {
                return Err(SanError::Config(format!(
                    "class_weights row {r} out of range for {} rows",
                    class_probs.rows()
                )));
            }
            for (j, &p) in class_probs.row(r).iter().enumerate() {
                mean[j] += p;
            }
        }
        let inv = 1.0 / rows.len() as Real;
        for v in &mut mean {
            *v *= inv;
        }
        match self.mode {
            WeightMode::PerBatchEma => {
                for (w, m) in self.weights.iter_mut().zip(&mean) {
                    *w = self.decay * *w + (1.0 - self.decay) * m;
                }
            }
            WeightMode::FullTargetRecompute => self.weights = mean,
        }
        Ok(())
    }
}

// ── individual loss terms ────────────────────────────────────────────────

/// Cross entropy of the predictor on the source rows of a mixed batch.
pub fn label_loss(
    tape: &mut Tape,
    class_probs: Var,
    source_rows: &[usize],
    source_labels: &[usize],
) -> Result<Var> {
    if source_rows.is_empty() {
        return Err(SanError::Empty {
            what: "source batch",
        });
    }
    if source_rows.len() != source_labels.len() {
        return Err(SanError::ShapeMismatch {
            op: "label_loss",
            lhs: vec![source_rows.len()],
            rhs: vec![source_labels.len()],
        });
    }
    let picked = tape.select_rows(class_probs, source_rows)?;
    tape.cross_entropy(picked, source_labels)
}

/// Mean prediction entropy over the target rows of a mixed batch.
///
/// Returns the loss var plus a flag that is true when there were no target
/// rows (the loss is then a constant zero and the caller may want to warn).
pub fn entropy_loss(
    tape: &mut Tape,
    class_probs: Var,
    target_rows: &[usize],
) -> Result<(Var, bool)> {
    if target_rows.is_empty() {
        return Ok((tape.constant(0.0), true));
    }
    let picked = tape.select_rows(class_probs, target_rows)?;
    Ok((tape.entropy(picked)?, false))
}

/// Per-head domain losses with fixed (non-differentiated) instance weights.
///
/// `instance_weights` is an `m × K` matrix whose column `k` weights each
/// sample's contribution to head `k`; for the selective network it is the
/// detached class-probability matrix.  Head `k`'s loss is
/// `(1/m) Σ_i  weights[i][k] · nll(domain_probs_k[i], domain_labels[i])`.
pub fn instance_weighted_domain_loss(
    tape: &mut Tape,
    domain_probs: &[Var],
    instance_weights: &Tensor,
    domain_labels: &[usize],
) -> Result<Vec<Var>> {
    let m = domain_labels.len();
    if m == 0 {
        return Err(SanError::Empty {
            what: "domain batch",
        });
    }
    if instance_weights.shape.len() != 2
        || instance_weights.rows() != m
        || instance_weights.cols() != domain_probs.len()
    {
        return Err(SanError::ShapeMismatch {
            op: "instance_weighted_domain_loss",
            lhs: instance_weights.shape.clone(),
            rhs: vec![m, domain_probs.len()],
        });
    }
    let mut out = Vec::with_capacity(domain_probs.len());
    for (k, &dp) in domain_probs.iter().enumerate() {
        let shape = tape.value(dp).shape.clone();
        if shape != [m, 2] {
            return Err(SanError::ShapeMismatch {
                op: "instance_weighted_domain_loss",
                lhs: shape,
                rhs: vec![m, 2],
            });
        }
        let col: Vec<Real> = (0..m).map(|i| instance_weights.at(i, k)).collect();
        out.push(tape.weighted_cross_entropy(dp, domain_labels, &col, m as Real)?);
    }
    Ok(out)
}

/// Per-head domain losses where the instance weights stay on the tape, so
/// gradients flow through the classifier probabilities as well.  Only used
/// behind an explicit config switch; the detached form above is the default.
pub fn live_weighted_domain_loss(
    tape: &mut Tape,
    domain_probs: &[Var],
    class_probs: Var,
    domain_labels: &[usize],
) -> Result<Vec<Var>> {
    let m = domain_labels.len();
    if m == 0 {
        return Err(SanError::Empty {
            what: "domain batch",
        });
    }
    let inv_m = 1.0 / m as Real;
    let mut out = Vec::with_capacity(domain_probs.len());
    for (k, &dp) in domain_probs.iter().enumerate() {
        let w = tape.select_column(class_probs, k)?;
        let nll = tape.nll_rows(dp, domain_labels)?;
        let weighted = tape.mul(w, nll)?;
        let total = tape.sum(weighted);
        out.push(tape.scale(total, inv_m));
    }
    Ok(out)
}

// ── the combined objective ───────────────────────────────────────────────

/// Where the per-sample weights for the domain losses come from.
pub enum InstanceWeighting<'a> {
    /// Fixed `m × K` weight matrix (the detached classifier probabilities).
    Detached(&'a Tensor),
    /// Weights read live from the tape; gradients flow through them.
    Live,
    /// Every sample weights every head by the same constant.
    Uniform(Real),
}

/// Scalar summary of one objective evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub label_loss: Real,
    pub entropy_loss: Real,
    /// Class-weighted sum of the per-head losses.
    pub domain_loss: Real,
    /// Instance-weighted loss of each head, before class weighting.
    pub per_class_domain_loss: Vec<Real>,
    /// Min–max objective value:
    /// `label + entropy_coef·entropy − lambda·domain`.
    pub total: Real,
}

/// Result of assembling the objective on a tape.
pub struct Objective {
    /// Scalar to run backward on: minimizing it takes one simultaneous
    /// min–max step (the reversal point flips the domain gradient for the
    /// feature extractor).
    pub descent: Var,
    pub breakdown: LossBreakdown,
    /// True when the batch had no target rows and the entropy term was
    /// replaced by a constant zero.
    pub entropy_was_empty: bool,
}

/// Inputs describing how a mixed batch is split between the domains.
#[derive(Debug, Clone)]
pub struct BatchSplit<'a> {
    /// Row indices of source samples within the batch.
    pub source_rows: &'a [usize],
    /// Row indices of target samples within the batch.
    pub target_rows: &'a [usize],
    /// Class labels for the source rows (aligned with `source_rows`).
    pub source_labels: &'a [usize],
    /// Domain flag per batch row: 0 = source, 1 = target.
    pub domain_labels: &'a [usize],
}

/// Assemble the full objective on the tape.
///
/// `domain_probs` may be empty (no adversarial term — the source-only
/// baseline).  `class_weights` must have one entry per head.  `lambda` only
/// affects the *reported* total here; its effect on gradients is realized
/// by the gradient-reversal op inside the model forward, and the same value
/// must be passed to both.
#[allow(clippy::too_many_arguments)]
pub fn san_objective(
    tape: &mut Tape,
    class_probs: Var,
    domain_probs: &[Var],
    split: &BatchSplit,
    class_weights: &[Real],
    instance_weighting: InstanceWeighting,
    lambda: Real,
    entropy_coef: Real,
) -> Result<Objective> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(SanError::Config(format!(
            "lambda must be finite and non-negative, got {lambda}"
        )));
    }
    if entropy_coef < 0.0 || !entropy_coef.is_finite() {
        return Err(SanError::Config(format!(
            "entropy_coef must be finite and non-negative, got {entropy_coef}"
        )));
    }
    if class_weights.len() != domain_probs.len() {
        return Err(SanError::ShapeMismatch {
            op: "san_objective class weights",
            lhs: vec![class_weights.len()],
            rhs: vec![domain_probs.len()],
        });
    }

    let label = label_loss(tape, class_probs, split.source_rows, split.source_labels)?;
    let (entropy, entropy_was_empty) = entropy_loss(tape, class_probs, split.target_rows)?;

    let per_class_vars = if domain_probs.is_empty() {
        Vec::new()
    } else {
        match instance_weighting {
            InstanceWeighting::Detached(w) => {
                instance_weighted_domain_loss(tape, domain_probs, w, split.domain_labels)?
            }
            InstanceWeighting::Live => {
                live_weighted_domain_loss(tape, domain_probs, class_probs, split.domain_labels)?
            }
            InstanceWeighting::Uniform(c) => {
                let m = split.domain_labels.len();
                let ones = Tensor::matrix(m, domain_probs.len(), vec![c; m * domain_probs.len()])?;
                instance_weighted_domain_loss(tape, domain_probs, &ones, split.domain_labels)?
            }
        }
    };

    // descent scalar: label + coef·entropy + Σ_k w_k·head_k
    let mut descent = label;
    if entropy_coef > 0.0 && !entropy_was_empty {
        let scaled = tape.scale(entropy, entropy_coef);
        descent = tape.add(descent, scaled)?;
    }
    for (&w, &head) in class_weights.iter().zip(per_class_vars.iter()) {
        let scaled = tape.scale(head, w);
        descent = tape.add(descent, scaled)?;
    }

    let label_v = tape.value(label).data[0];
    let entropy_v = tape.value(entropy).data[0];
    let per_class: Vec<Real> = per_class_vars
        .iter()
        .map(|&v| tape.value(v).data[0])
        .collect();
    let domain_v: Real = class_weights
        .iter()
        .zip(per_class.iter())
        .map(|(w, l)| w * l)
        .sum();
    let total = label_v + entropy_coef * entropy_v - lambda * domain_v;

    Ok(Objective {
        descent,
        breakdown: LossBreakdown {
            label_loss: label_v,
            entropy_loss: entropy_v,
            domain_loss: domain_v,
            per_class_domain_loss: per_class,
            total,
        },
        entropy_was_empty,
    })
}
