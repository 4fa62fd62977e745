//! Shared helpers for the integration suites: a tiny deterministic RNG,
//! finite-difference gradient checking, and independent loop-based
//! re-implementations of every quantity the library computes.  The oracles
//! deliberately avoid the library's tensor kernels so that an agreement
//! check actually means two separate derivations agree.

#![allow(dead_code)]

pub mod grad;

use san::model::SanModel;
use san::{Real, Tape, Var, LOG_EPS};

// ── deterministic scalar RNG ─────────────────────────────────────────────

/// xorshift64* generator; good enough to scatter test inputs and fully
/// independent of the library's seeded streams.
pub struct TestRng(pub u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        TestRng(seed.max(1))
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x.wrapping_mul(0x2545_f491_4f6c_dd1d)
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform(&mut self, lo: Real, hi: Real) -> Real {
        let unit = (self.next_u64() >> 11) as Real / (1u64 << 53) as Real;
        lo + unit * (hi - lo)
    }

    pub fn fill(&mut self, n: usize, lo: Real, hi: Real) -> Vec<Real> {
        (0..n).map(|_| self.uniform(lo, hi)).collect()
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }
}

/// Random rows that lie strictly inside the probability simplex.
pub fn random_prob_rows(rng: &mut TestRng, rows: usize, cols: usize) -> Vec<Vec<Real>> {
    (0..rows)
        .map(|_| {
            let raw: Vec<Real> = (0..cols).map(|_| rng.uniform(0.05, 1.0)).collect();
            let total: Real = raw.iter().sum();
            raw.into_iter().map(|v| v / total).collect()
        })
        .collect()
}

// ── finite-difference gradient checking ──────────────────────────────────

pub const FD_STEP: Real = 1e-5;

/// Relative error with an absolute floor, so comparisons near zero do not
/// blow up the ratio.
pub fn rel_err(a: Real, b: Real) -> Real {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Check the tape gradient of one parameter against central finite
/// differences, entry by entry.
///
/// `build` must reconstruct the whole graph from scratch for the given
/// parameter data and return `(parameter var, scalar loss var)`; it is
/// called `2·n + 1` times.  Returns the number of entries checked.
pub fn check_param_grads(
    what: &str,
    x0: &[Real],
    tol: Real,
    mut build: impl FnMut(&mut Tape, &[Real]) -> (Var, Var),
) -> usize {
    let mut tape = Tape::new();
    let (pv, loss) = build(&mut tape, x0);
    assert!(
        tape.value(loss).is_scalar(),
        "{what}: gradient check needs a scalar loss, got shape {:?}",
        tape.value(loss).shape
    );
    let grads = tape
        .backward(loss)
        .unwrap_or_else(|e| panic!("{what}: backward failed: {e}"));
    let analytic = grads
        .get(pv)
        .unwrap_or_else(|| panic!("{what}: parameter received no gradient"))
        .to_vec();
    assert_eq!(
        analytic.len(),
        x0.len(),
        "{what}: gradient length {} does not match parameter length {}",
        analytic.len(),
        x0.len()
    );

    let mut eval = |x: &[Real]| -> Real {
        let mut tape = Tape::new();
        let (_, loss) = build(&mut tape, x);
        tape.value(loss).data[0]
    };
    for i in 0..x0.len() {
        let mut xp = x0.to_vec();
        xp[i] += FD_STEP;
        let mut xm = x0.to_vec();
        xm[i] -= FD_STEP;
        let fd = (eval(&xp) - eval(&xm)) / (2.0 * FD_STEP);
        let err = rel_err(analytic[i], fd);
        assert!(
            err < tol,
            "{what}: entry {i}: analytic {:.12e} vs finite difference {:.12e} (rel err {err:.3e})",
            analytic[i],
            fd
        );
    }
    x0.len()
}

// ── flat parameter views of a model ──────────────────────────────────────

/// All model parameters concatenated in canonical order.
pub fn flat_params(model: &SanModel) -> Vec<Real> {
    model
        .params()
        .into_iter()
        .flat_map(|t| t.data.iter().copied())
        .collect()
}

/// Overwrite the model's parameters from a flat vector (canonical order).
pub fn set_flat_params(model: &mut SanModel, flat: &[Real]) {
    let mut offset = 0;
    for t in model.params_mut() {
        let n = t.data.len();
        t.data.copy_from_slice(&flat[offset..offset + n]);
        offset += n;
    }
    assert_eq!(offset, flat.len(), "flat parameter vector has wrong length");
}

/// Number of leading entries of the flat vector that belong to the feature
/// extractor (the remainder belongs to the predictor and discriminators).
pub fn feature_param_len(model: &SanModel) -> usize {
    model
        .feature_layers
        .iter()
        .map(|l| l.weight.data.len() + l.bias.data.len())
        .sum()
}

// ── loop oracles ─────────────────────────────────────────────────────────

/// Independent re-implementations used to cross-check the library.  All of
/// them work on plain `Vec<Vec<Real>>` rows with explicit index loops.
pub mod oracle {
    use super::LOG_EPS;
    use san::model::{Affine, SanModel};
    use san::Real;

    fn clamped_ln(p: Real) -> Real {
        p.max(LOG_EPS).ln()
    }

    /// Row-wise softmax with the max-subtraction stabilizer.
    pub fn softmax(rows: &[Vec<Real>]) -> Vec<Vec<Real>> {
        rows.iter()
            .map(|row| {
                let hi = row.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
                let exps: Vec<Real> = row.iter().map(|&v| (v - hi).exp()).collect();
                let total: Real = exps.iter().sum();
                exps.into_iter().map(|e| e / total).collect()
            })
            .collect()
    }

    /// Mean negative log-likelihood of the labeled entries.
    pub fn label_loss(probs: &[Vec<Real>], labels: &[usize]) -> Real {
        assert_eq!(probs.len(), labels.len());
        let total: Real = probs
            .iter()
            .zip(labels)
            .map(|(row, &l)| -clamped_ln(row[l]))
            .sum();
        total / probs.len() as Real
    }

    /// Mean Shannon entropy over rows.
    pub fn mean_entropy(probs: &[Vec<Real>]) -> Real {
        let total: Real = probs
            .iter()
            .map(|row| -row.iter().map(|&p| p * clamped_ln(p)).sum::<Real>())
            .sum();
        total / probs.len() as Real
    }

    /// Per-head instance-weighted domain loss.  `head_probs[k]` holds the
    /// m×2 domain probabilities of head `k`; `instance_weights[i][k]` is the
    /// weight of row `i` on head `k`; every head is normalized by the full
    /// batch size m.
    pub fn weighted_domain_losses(
        head_probs: &[Vec<Vec<Real>>],
        instance_weights: &[Vec<Real>],
        domain_labels: &[usize],
    ) -> Vec<Real> {
        let m = domain_labels.len();
        head_probs
            .iter()
            .enumerate()
            .map(|(k, probs)| {
                assert_eq!(probs.len(), m);
                let mut total = 0.0;
                for i in 0..m {
                    total -= instance_weights[i][k] * clamped_ln(probs[i][domain_labels[i]]);
                }
                total / m as Real
            })
            .collect()
    }

    /// One step of the exponential moving average over class-probability
    /// column means.
    pub fn ema_update(prev: &[Real], target_probs: &[Vec<Real>], decay: Real) -> Vec<Real> {
        let k = prev.len();
        let mut mean = vec![0.0; k];
        for row in target_probs {
            for (j, &p) in row.iter().enumerate() {
                mean[j] += p;
            }
        }
        for v in &mut mean {
            *v /= target_probs.len() as Real;
        }
        prev.iter()
            .zip(&mean)
            .map(|(&w, &m)| decay * w + (1.0 - decay) * m)
            .collect()
    }

    /// Annealed learning rate.
    pub fn lr(eta0: Real, alpha: Real, beta: Real, p: Real) -> Real {
        eta0 / (1.0 + alpha * p).powf(beta)
    }

    /// Adversarial ramp-up coefficient.
    pub fn lambda(gamma: Real, p: Real) -> Real {
        2.0 / (1.0 + (-gamma * p).exp()) - 1.0
    }

    /// Heavy-ball update applied in place: `v ← m·v + g`, `θ ← θ − lr·v`.
    pub fn sgd_step(
        params: &mut [Vec<Real>],
        velocities: &mut [Vec<Real>],
        grads: &[Option<Vec<Real>>],
        momentum: Real,
        rates: &[Real],
    ) {
        for (i, p) in params.iter_mut().enumerate() {
            for j in 0..p.len() {
                let g = grads[i].as_ref().map_or(0.0, |g| g[j]);
                velocities[i][j] = momentum * velocities[i][j] + g;
                p[j] -= rates[i] * velocities[i][j];
            }
        }
    }

    fn affine_rows(x: &[Vec<Real>], layer: &Affine) -> Vec<Vec<Real>> {
        let (din, dout) = (layer.weight.shape[0], layer.weight.shape[1]);
        x.iter()
            .map(|row| {
                assert_eq!(row.len(), din);
                (0..dout)
                    .map(|j| {
                        let mut acc = layer.bias.data[j];
                        for (i, &v) in row.iter().enumerate() {
                            acc += v * layer.weight.data[i * dout + j];
                        }
                        acc
                    })
                    .collect()
            })
            .collect()
    }

    fn relu_rows(x: Vec<Vec<Real>>) -> Vec<Vec<Real>> {
        x.into_iter()
            .map(|row| row.into_iter().map(|v| v.max(0.0)).collect())
            .collect()
    }

    /// Full forward pass recomputed with index loops from the model's raw
    /// parameter tensors: features, class probabilities, and the domain
    /// probabilities of every head.
    pub fn forward(
        model: &SanModel,
        x: &[Vec<Real>],
    ) -> (Vec<Vec<Real>>, Vec<Vec<Real>>, Vec<Vec<Vec<Real>>>) {
        let mut h = x.to_vec();
        for layer in &model.feature_layers {
            h = relu_rows(affine_rows(&h, layer));
        }
        let features = h;
        let class_probs = softmax(&affine_rows(&features, &model.predictor));
        let domain_probs = model
            .discriminators
            .iter()
            .map(|d| {
                let z = relu_rows(affine_rows(&features, &d.hidden));
                softmax(&affine_rows(&z, &d.output))
            })
            .collect();
        (features, class_probs, domain_probs)
    }
}

// ── misc ─────────────────────────────────────────────────────────────────

/// Rows of a row-major tensor as vectors (test-side convenience).
pub fn tensor_rows(t: &san::Tensor) -> Vec<Vec<Real>> {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

pub fn assert_close(what: &str, got: Real, want: Real, tol: Real) {
    assert!(
        (got - want).abs() <= tol,
        "{what}: got {got:.15e}, want {want:.15e} (diff {:.3e}, tol {tol:.1e})",
        (got - want).abs()
    );
}
