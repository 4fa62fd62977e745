//! Training schedules, variants, and the SGD-with-momentum optimizer.
//!
//! Both schedules are driven by normalized training progress `p ∈ [0, 1]`:
//! the learning rate anneals as `eta0 / (1 + alpha·p)^beta`, and the
//! adversarial strength ramps as `2 / (1 + exp(-gamma·p)) − 1`, so training
//! starts with the domain critics effectively disabled (lambda = 0) and
//! approaches full strength near the end.
//!
//! Parameters split into two groups: layers reused from a generic backbone
//! train at the base rate, while newly initialized layers (the classifier
//! head and the domain critics) train ten times faster by default.

use std::fmt;
use std::str::FromStr;

use crate::autodiff::{Gradients, Var};
use crate::error::{Result, SanError};
use crate::model::{ParamGroup, SanModel};
use crate::Real;

// ── configuration ────────────────────────────────────────────────────────

/// Optimizer and objective hyperparameters with standard defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Initial learning rate.
    pub eta0: Real,
    /// Learning-rate annealing strength.
    pub alpha: Real,
    /// Learning-rate annealing exponent.
    pub beta: Real,
    /// Heavy-ball momentum coefficient.
    pub momentum: Real,
    /// Steepness of the adversarial-strength ramp.
    pub gamma_ramp: Real,
    /// Weight of the target-entropy term in the objective.
    pub entropy_coef: Real,
    /// Learning-rate multiplier for newly initialized layers.
    pub new_layer_lr_multiplier: Real,
    /// Decay of the running class-weight average.
    pub ema_decay: Real,
    /// When true (the default), the per-sample weights on the domain losses
    /// are constants; when false, gradients flow through them into the
    /// classifier.
    pub detach_instance_weights: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            eta0: 0.001,
            alpha: 10.0,
            beta: 0.75,
            momentum: 0.9,
            gamma_ramp: 10.0,
            entropy_coef: 1.0,
            new_layer_lr_multiplier: 10.0,
            ema_decay: 0.9,
            detach_instance_weights: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("eta0", self.eta0),
            ("new_layer_lr_multiplier", self.new_layer_lr_multiplier),
        ];
        for (name, v) in positive {
            if !v.is_finite() || v <= 0.0 {
                return Err(SanError::Config(format!(
                    "{name} must be finite and positive, got {v}"
                )));
            }
        }
        let non_negative = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma_ramp", self.gamma_ramp),
            ("entropy_coef", self.entropy_coef),
        ];
        for (name, v) in non_negative {
            if !v.is_finite() || v < 0.0 {
                return Err(SanError::Config(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        for (name, v) in [("momentum", self.momentum), ("ema_decay", self.ema_decay)] {
            if !v.is_finite() || !(0.0..1.0).contains(&v) {
                return Err(SanError::Config(format!(
                    "{name} must lie in [0, 1), got {v}"
                )));
            }
        }
        Ok(())
    }
}

// ── variants ─────────────────────────────────────────────────────────────

/// Which objective the trainer assembles.
///
/// The two `San*` ablations are named for the ingredient they *remove*:
/// `SanSelective` drops the selective weighting (all critics weighted
/// equally, every sample counted fully) and `SanEntropy` drops the entropy
/// term.  `Dann` is the classic single-critic adversarial baseline and
/// `SourceOnly` trains the classifier on source data alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    San,
    SanSelective,
    SanEntropy,
    Dann,
    SourceOnly,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::San,
        Variant::SanSelective,
        Variant::SanEntropy,
        Variant::Dann,
        Variant::SourceOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::San => "SAN",
            Variant::SanSelective => "SAN_selective",
            Variant::SanEntropy => "SAN_entropy",
            Variant::Dann => "DANN",
            Variant::SourceOnly => "source_only",
        }
    }

    /// Number of domain critics the model carries under this variant.
    pub fn num_heads(self, num_classes: usize) -> usize {
        match self {
            Variant::Dann => 1,
            // The source-only baseline keeps the full structure (untrained)
            // so checkpoints stay shape-compatible across variants.
            _ => num_classes,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = SanError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        match norm.as_str() {
            "san" => Ok(Variant::San),
            "san_selective" => Ok(Variant::SanSelective),
            "san_entropy" => Ok(Variant::SanEntropy),
            "dann" => Ok(Variant::Dann),
            "source_only" => Ok(Variant::SourceOnly),
            _ => Err(SanError::Config(format!(
                "unknown variant {s:?}; expected one of SAN, SAN_selective, \
                 SAN_entropy, DANN, source_only"
            ))),
        }
    }
}

// ── schedules ────────────────────────────────────────────────────────────

fn check_progress(p: Real) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(SanError::Config(format!(
            "training progress must lie in [0, 1], got {p}"
        )));
    }
    Ok(())
}

/// Normalized training progress for a given step.
pub fn progress(step: usize, total_steps: usize) -> Result<Real> {
    if total_steps == 0 {
        return Err(SanError::Config("total_steps must be positive".into()));
    }
    if step > total_steps {
        return Err(SanError::Config(format!(
            "step {step} exceeds total_steps {total_steps}"
        )));
    }
    Ok(step as Real / total_steps as Real)
}

/// Annealed learning rate `eta0 / (1 + alpha·p)^beta`.
pub fn lr_schedule(cfg: &TrainConfig, p: Real) -> Result<Real> {
    check_progress(p)?;
    Ok(cfg.eta0 / (1.0 + cfg.alpha * p).powf(cfg.beta))
}

/// Adversarial strength ramp `2 / (1 + exp(-gamma·p)) − 1`, from exactly 0
/// at the start of training toward 1.
pub fn lambda_schedule(cfg: &TrainConfig, p: Real) -> Result<Real> {
    check_progress(p)?;
    Ok(2.0 / (1.0 + (-cfg.gamma_ramp * p).exp()) - 1.0)
}

// ── optimizer ────────────────────────────────────────────────────────────

/// Heavy-ball SGD over a model's parameters:
/// `v ← momentum·v + g`, `θ ← θ − lr_eff·v`, where `lr_eff` is the base
/// rate for backbone parameters and `lr · new_layer_lr_multiplier` for the
/// classifier and critic parameters.
pub struct SgdMomentum {
    velocities: Vec<Vec<Real>>,
    momentum: Real,
    new_layer_lr_multiplier: Real,
}

impl SgdMomentum {
    pub fn new(model: &SanModel, cfg: &TrainConfig) -> Self {
        SgdMomentum {
            velocities: model
                .params()
                .into_iter()
                .map(|t| vec![0.0; t.numel()])
                .collect(),
            momentum: cfg.momentum,
            new_layer_lr_multiplier: cfg.new_layer_lr_multiplier,
        }
    }

    /// Apply one update.  `param_vars` must list the tape handles of the
    /// model parameters in canonical order (as produced by the forward
    /// pass).  A parameter the loss never touched keeps a zero gradient but
    /// its velocity still decays.
    pub fn step(
        &mut self,
        model: &mut SanModel,
        grads: &Gradients,
        param_vars: &[Var],
        lr: Real,
    ) -> Result<()> {
        if !lr.is_finite() || lr < 0.0 {
            return Err(SanError::Config(format!(
                "learning rate must be finite and non-negative, got {lr}"
            )));
        }
        let groups = model.param_groups();
        let params = model.params_mut();
        if params.len() != self.velocities.len()
            || params.len() != param_vars.len()
            || params.len() != groups.len()
        {
            return Err(SanError::ShapeMismatch {
                op: "optimizer step",
                lhs: vec![params.len(), param_vars.len()],
                rhs: vec![self.velocities.len(), groups.len()],
            });
        }
        for (((tensor, group), &var), vel) in params
            .into_iter()
            .zip(groups)
            .zip(param_vars)
            .zip(self.velocities.iter_mut())
        {
            if tensor.numel() != vel.len() {
                return Err(SanError::ShapeMismatch {
                    op: "optimizer step",
                    lhs: tensor.shape.clone(),
                    rhs: vec![vel.len()],
                });
            }
            let eff = match group {
                ParamGroup::Feature => lr,
                ParamGroup::NewLayer => lr * self.new_layer_lr_multiplier,
            };
            match grads.get(var) {
                Some(g) => {
                    for ((p, v), &gi) in tensor.data.iter_mut().zip(vel.iter_mut()).zip(g) {
                        *v = self.momentum * *v + gi;
                        *p -= eff * *v;
                    }
                }
                None => {
                    for (p, v) in tensor.data.iter_mut().zip(vel.iter_mut()) {
                        *v *= self.momentum;
                        *p -= eff * *v;
                    }
                }
            }
        }
        Ok(())
    }
}
