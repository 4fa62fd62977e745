//! The selective adversarial network: feature extractor, label predictor,
//! and one domain discriminator per source class.
//!
//! The feature extractor and predictor form an ordinary classifier.  For
//! adversarial alignment the features additionally pass through a single
//! gradient-reversal point and fan out into `K` independent two-way
//! discriminators, one per source class.  The reversal is applied once and
//! shared by every head, so the feature extractor sees the summed reversed
//! signal of all discriminators.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Result, SanError};
use crate::Real;

/// Weight/bias pair for one affine layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    /// `(fan_in × fan_out)` weight matrix.
    pub weight: Tensor,
    /// Length `fan_out` bias.
    pub bias: Tensor,
}

/// One two-way domain discriminator: affine → relu → affine → softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discriminator {
    pub hidden: Affine,
    pub output: Affine,
}

/// Parameter group tag used by the optimizer: layers trained from scratch
/// (predictor and discriminators) run at a higher learning rate than the
/// feature extractor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Feature,
    NewLayer,
}

/// The complete model.  All fields are public: tests and tooling are
/// expected to poke at parameters directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanModel {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub disc_hidden: usize,
    pub seed: u64,
    /// Affine+relu pairs mapping input → feature space.
    pub feature_layers: Vec<Affine>,
    /// Affine+softmax label predictor over the source classes.
    pub predictor: Affine,
    /// Two-way discriminators fed from the shared gradient-reversal point.
    /// One per source class for the selective variants; a single head for
    /// plain domain-adversarial training.
    pub discriminators: Vec<Discriminator>,
}

/// Handles produced by one recorded forward pass.
pub struct ForwardPass {
    /// Feature-space activations, `m × feature_dim`.
    pub features: Var,
    /// Class probabilities, `m × num_classes` (rows sum to 1).
    pub class_probs: Var,
    /// Domain probabilities per discriminator, each `m × 2`.
    pub domain_probs: Vec<Var>,
    /// Tape handles for every parameter, aligned with
    /// [`SanModel::params`] / [`SanModel::params_mut`].
    pub param_vars: Vec<Var>,
}

fn seeded_affine(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Affine {
    // Fan-in-scaled uniform init for weights; biases start at zero.
    let bound = 1.0 / (fan_in as Real).sqrt();
    let data: Vec<Real> = (0..fan_in * fan_out)
        .map(|_| rng.gen_range(-bound..bound))
        .collect();
    Affine {
        weight: Tensor {
            shape: vec![fan_in, fan_out],
            data,
            requires_grad: true,
        },
        bias: Tensor {
            shape: vec![fan_out],
            data: vec![0.0; fan_out],
            requires_grad: true,
        },
    }
}

/// Build a model with one discriminator per class (the selective layout).
pub fn build_model(
    input_dim: usize,
    hidden_dims: &[usize],
    feature_dim: usize,
    num_classes: usize,
    disc_hidden: usize,
    seed: u64,
) -> Result<SanModel> {
    build_model_with_heads(
        input_dim,
        hidden_dims,
        feature_dim,
        num_classes,
        num_classes,
        disc_hidden,
        seed,
    )
}

/// Build a model with an explicit discriminator count.  `num_heads` equal to
/// `num_classes` gives the selective layout; `1` gives the classic
/// single-discriminator layout used by the DANN baseline.
pub fn build_model_with_heads(
    input_dim: usize,
    hidden_dims: &[usize],
    feature_dim: usize,
    num_classes: usize,
    num_heads: usize,
    disc_hidden: usize,
    seed: u64,
) -> Result<SanModel> {
    for (name, v) in [
        ("input_dim", input_dim),
        ("feature_dim", feature_dim),
        ("num_classes", num_classes),
        ("num_heads", num_heads),
        ("disc_hidden", disc_hidden),
    ] {
        if v == 0 {
            return Err(SanError::Config(format!("{name} must be positive")));
        }
    }
    if hidden_dims.iter().any(|&d| d == 0) {
        return Err(SanError::Config(
            "hidden_dims entries must be positive".into(),
        ));
    }

    // One generator in a fixed draw order makes init reproducible and keeps
    // the feature/predictor parameters independent of the head count.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);

    let mut dims = vec![input_dim];
    dims.extend_from_slice(hidden_dims);
    dims.push(feature_dim);
    let feature_layers: Vec<Affine> = dims
        .windows(2)
        .map(|w| seeded_affine(&mut rng, w[0], w[1]))
        .collect();

    let predictor = seeded_affine(&mut rng, feature_dim, num_classes);

    let discriminators: Vec<Discriminator> = (0..num_heads)
        .map(|_| Discriminator {
            hidden: seeded_affine(&mut rng, feature_dim, disc_hidden),
            output: seeded_affine(&mut rng, disc_hidden, 2),
        })
        .collect();

    Ok(SanModel {
        input_dim,
        hidden_dims: hidden_dims.to_vec(),
        feature_dim,
        num_classes,
        disc_hidden,
        seed,
        feature_layers,
        predictor,
        discriminators,
    })
}

impl SanModel {
    /// Parameters in canonical order: feature layers (weight, bias), then
    /// predictor, then each discriminator (hidden, output).
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for l in &self.feature_layers {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out.push(&self.predictor.weight);
        out.push(&self.predictor.bias);
        for d in &self.discriminators {
            out.push(&d.hidden.weight);
            out.push(&d.hidden.bias);
            out.push(&d.output.weight);
            out.push(&d.output.bias);
        }
        out
    }

    /// Mutable view of the parameters, same order as [`SanModel::params`].
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for l in &mut self.feature_layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out.push(&mut self.predictor.weight);
        out.push(&mut self.predictor.bias);
        for d in &mut self.discriminators {
            out.push(&mut d.hidden.weight);
            out.push(&mut d.hidden.bias);
            out.push(&mut d.output.weight);
            out.push(&mut d.output.bias);
        }
        out
    }

    /// Group tag per parameter, aligned with [`SanModel::params`].
    pub fn param_groups(&self) -> Vec<ParamGroup> {
        let mut out = vec![ParamGroup::Feature; self.feature_layers.len() * 2];
        out.extend(vec![
            ParamGroup::NewLayer;
            2 + self.discriminators.len() * 4
        ]);
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.numel()).sum()
    }

    /// Record a full forward pass on `tape`.
    ///
    /// `x` is an `m × input_dim` batch; `lambda` is the gradient-reversal
    /// strength for the discriminator branch (0 disconnects the feature
    /// extractor from the domain losses without disabling the heads).
    pub fn forward(&self, tape: &mut Tape, x: &Tensor, lambda: Real) -> Result<ForwardPass> {
        if x.shape.len() != 2 || x.shape[1] != self.input_dim {
            return Err(SanError::ShapeMismatch {
                op: "model forward",
                lhs: x.shape.clone(),
                rhs: vec![x.shape.first().copied().unwrap_or(0), self.input_dim],
            });
        }
        let mut param_vars = Vec::with_capacity(self.params().len());

        let xv = tape.input(x);
        let mut h = xv;
        for layer in &self.feature_layers {
            let w = tape.param(&layer.weight);
            let b = tape.param(&layer.bias);
            param_vars.push(w);
            param_vars.push(b);
            let a = tape.affine(h, w, b)?;
            h = tape.relu(a);
        }
        let features = h;

        let pw = tape.param(&self.predictor.weight);
        let pb = tape.param(&self.predictor.bias);
        param_vars.push(pw);
        param_vars.push(pb);
        let logits = tape.affine(features, pw, pb)?;
        let class_probs = tape.softmax_rows(logits)?;

        // One shared reversal point; all heads read from it.
        let reversed = tape.grad_reverse(features, lambda)?;
        let mut domain_probs = Vec::with_capacity(self.discriminators.len());
        for disc in &self.discriminators {
            let hw = tape.param(&disc.hidden.weight);
            let hb = tape.param(&disc.hidden.bias);
            let ow = tape.param(&disc.output.weight);
            let ob = tape.param(&disc.output.bias);
            param_vars.extend_from_slice(&[hw, hb, ow, ob]);
            let a = tape.affine(reversed, hw, hb)?;
            let z = tape.relu(a);
            let logits = tape.affine(z, ow, ob)?;
            domain_probs.push(tape.softmax_rows(logits)?);
        }

        Ok(ForwardPass {
            features,
            class_probs,
            domain_probs,
            param_vars,
        })
    }

    /// Inference-only pass: features and class probabilities, no gradients,
    /// discriminators skipped.
    pub fn infer(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut tape = Tape::new();
        let xv = tape.input(x);
        let mut h = xv;
        for layer in &self.feature_layers {
            let w = tape.input(&layer.weight);
            let b = tape.input(&layer.bias);
            let a = tape.affine(h, w, b)?;
            h = tape.relu(a);
        }
        let pw = tape.input(&self.predictor.weight);
        let pb = tape.input(&self.predictor.bias);
        let logits = tape.affine(h, pw, pb)?;
        let probs = tape.softmax_rows(logits)?;
        Ok((tape.value(h).clone(), tape.value(probs).clone()))
    }

    /// Hard class predictions (per-row argmax; ties go to the lowest index).
    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        let (_, probs) = self.infer(x)?;
        Ok(probs.argmax_rows())
    }

    /// Serialize the model (dims, seed, and all parameters) to a JSON file.
    /// Round-trips bit-exactly for finite parameters.
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| SanError::Checkpoint(e.to_string()))?;
        fs::write(path, json).map_err(|e| SanError::io(path.display().to_string(), e))
    }

    /// Load a model previously written by [`SanModel::save_checkpoint`].
    pub fn load_checkpoint(path: &Path) -> Result<SanModel> {
        let text =
            fs::read_to_string(path).map_err(|e| SanError::io(path.display().to_string(), e))?;
        let model: SanModel =
            serde_json::from_str(&text).map_err(|e| SanError::Checkpoint(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    /// Consistency check used after deserialization.
    pub fn validate(&self) -> Result<()> {
        let mut dims = vec![self.input_dim];
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(self.feature_dim);
        if self.feature_layers.len() + 1 != dims.len() {
            return Err(SanError::Checkpoint(format!(
                "expected {} feature layers, found {}",
                dims.len() - 1,
                self.feature_layers.len()
            )));
        }
        for (i, layer) in self.feature_layers.iter().enumerate() {
            if layer.weight.shape != [dims[i], dims[i + 1]] || layer.bias.shape != [dims[i + 1]] {
                return Err(SanError::Checkpoint(format!(
                    "feature layer {i} has shape {:?}, expected {:?}",
                    layer.weight.shape,
                    [dims[i], dims[i + 1]]
                )));
            }
        }
        if self.predictor.weight.shape != [self.feature_dim, self.num_classes] {
            return Err(SanError::Checkpoint(format!(
                "predictor shape {:?} does not match feature_dim×num_classes",
                self.predictor.weight.shape
            )));
        }
        for (k, d) in self.discriminators.iter().enumerate() {
            if d.hidden.weight.shape != [self.feature_dim, self.disc_hidden]
                || d.output.weight.shape != [self.disc_hidden, 2]
            {
                return Err(SanError::Checkpoint(format!(
                    "discriminator {k} has inconsistent shapes"
                )));
            }
        }
        if !self.params().iter().all(|t| t.all_finite()) {
            return Err(SanError::Checkpoint("non-finite parameter".into()));
        }
        Ok(())
    }
}
