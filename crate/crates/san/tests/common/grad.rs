//! Finite-difference builders for every differentiable tape operation and
//! for the assembled training objective.  Each function runs one randomized
//! instance and returns the number of scalar gradient entries it verified.

use san::losses::{san_objective, BatchSplit, InstanceWeighting};
use san::model::build_model_with_heads;
use san::{Real, Tape, Tensor, Var};

use super::{check_param_grads, feature_param_len, flat_params, set_flat_params, TestRng};

/// Tolerance for plain operation checks (f64 central differences are good
/// to ~1e-10 here; 1e-6 leaves generous slack).
pub const OP_TOL: Real = 1e-6;

fn mat(rows: usize, cols: usize, data: Vec<Real>) -> Tensor {
    Tensor::matrix(rows, cols, data).expect("test matrix shape")
}

/// Reduce `v` to a scalar with a fixed random linear functional, so the op
/// under test sees a non-uniform upstream gradient.
fn reduce(tape: &mut Tape, v: Var, coeffs: &Tensor) -> Var {
    let c = tape.input(coeffs);
    let prod = tape.mul(v, c).expect("reduce mul");
    tape.sum(prod)
}

pub fn matmul_left(rng: &mut TestRng, m: usize, k: usize, n: usize) -> usize {
    let a0 = rng.fill(m * k, -1.5, 1.5);
    let b = mat(k, n, rng.fill(k * n, -1.5, 1.5));
    let c = mat(m, n, rng.fill(m * n, -2.0, 2.0));
    check_param_grads("matmul lhs", &a0, OP_TOL, |tape, x| {
        let a = tape.param(&mat(m, k, x.to_vec()));
        let bv = tape.input(&b);
        let y = tape.matmul(a, bv).expect("matmul");
        (a, reduce(tape, y, &c))
    })
}

pub fn matmul_right(rng: &mut TestRng, m: usize, k: usize, n: usize) -> usize {
    let a = mat(m, k, rng.fill(m * k, -1.5, 1.5));
    let b0 = rng.fill(k * n, -1.5, 1.5);
    let c = mat(m, n, rng.fill(m * n, -2.0, 2.0));
    check_param_grads("matmul rhs", &b0, OP_TOL, |tape, x| {
        let av = tape.input(&a);
        let bv = tape.param(&mat(k, n, x.to_vec()));
        let y = tape.matmul(av, bv).expect("matmul");
        (bv, reduce(tape, y, &c))
    })
}

/// Checks x, w, and b of one affine layer; returns the combined count.
pub fn affine_all(rng: &mut TestRng, m: usize, din: usize, dout: usize) -> usize {
    let x = mat(m, din, rng.fill(m * din, -1.5, 1.5));
    let w = mat(din, dout, rng.fill(din * dout, -1.5, 1.5));
    let b = Tensor::vector(rng.fill(dout, -0.5, 0.5)).unwrap();
    let c = mat(m, dout, rng.fill(m * dout, -2.0, 2.0));

    let mut checked = 0;
    checked += check_param_grads("affine input", &x.data.clone(), OP_TOL, |tape, v| {
        let xv = tape.param(&mat(m, din, v.to_vec()));
        let wv = tape.input(&w);
        let bv = tape.input(&b);
        let y = tape.affine(xv, wv, bv).expect("affine");
        (xv, reduce(tape, y, &c))
    });
    checked += check_param_grads("affine weight", &w.data.clone(), OP_TOL, |tape, v| {
        let xv = tape.input(&x);
        let wv = tape.param(&mat(din, dout, v.to_vec()));
        let bv = tape.input(&b);
        let y = tape.affine(xv, wv, bv).expect("affine");
        (wv, reduce(tape, y, &c))
    });
    checked += check_param_grads("affine bias", &b.data.clone(), OP_TOL, |tape, v| {
        let xv = tape.input(&x);
        let wv = tape.input(&w);
        let bv = tape.param(&Tensor::vector(v.to_vec()).unwrap());
        let y = tape.affine(xv, wv, bv).expect("affine");
        (bv, reduce(tape, y, &c))
    });
    checked
}

/// Inputs are kept well away from the kink at zero.
pub fn relu(rng: &mut TestRng, m: usize, n: usize) -> usize {
    let x0: Vec<Real> = (0..m * n)
        .map(|_| {
            let sign = if rng.uniform(0.0, 1.0) < 0.5 { -1.0 } else { 1.0 };
            sign * rng.uniform(0.2, 1.5)
        })
        .collect();
    let c = mat(m, n, rng.fill(m * n, -2.0, 2.0));
    check_param_grads("relu", &x0, OP_TOL, |tape, x| {
        let xv = tape.param(&mat(m, n, x.to_vec()));
        let y = tape.relu(xv);
        (xv, reduce(tape, y, &c))
    })
}

/// Softmax through the entropy reduction: exercises the full Jacobian,
/// including cross-terms between columns.
pub fn softmax_entropy(rng: &mut TestRng, m: usize, n: usize) -> usize {
    let x0 = rng.fill(m * n, -2.0, 2.0);
    check_param_grads("softmax via entropy", &x0, OP_TOL, |tape, x| {
        let xv = tape.param(&mat(m, n, x.to_vec()));
        let p = tape.softmax_rows(xv).expect("softmax");
        let h = tape.entropy(p).expect("entropy");
        (xv, h)
    })
}

/// Softmax through the label loss: the standard classifier composite.
pub fn softmax_nll(rng: &mut TestRng, m: usize, n: usize) -> usize {
    let x0 = rng.fill(m * n, -2.0, 2.0);
    let labels: Vec<usize> = (0..m).map(|_| rng.below(n)).collect();
    check_param_grads("softmax via label loss", &x0, OP_TOL, |tape, x| {
        let xv = tape.param(&mat(m, n, x.to_vec()));
        let p = tape.softmax_rows(xv).expect("softmax");
        let l = tape.cross_entropy(p, &labels).expect("cross entropy");
        (xv, l)
    })
}

/// Cross entropy with the probabilities as the direct parameter.
pub fn cross_entropy(rng: &mut TestRng, m: usize, n: usize) -> usize {
    let x0 = rng.fill(m * n, 0.05, 0.95);
    let labels: Vec<usize> = (0..m).map(|_| rng.below(n)).collect();
    check_param_grads("cross entropy", &x0, OP_TOL, |tape, x| {
        let xv = tape.param(&mat(m, n, x.to_vec()));
        let l = tape.cross_entropy(xv, &labels).expect("cross entropy");
        (xv, l)
    })
}

pub fn weighted_cross_entropy(rng: &mut TestRng, m: usize, n: usize) -> usize {
    let x0 = rng.fill(m * n, 0.05, 0.95);
    let labels: Vec<usize> = (0..m).map(|_| rng.below(n)).collect();
    let weights = rng.fill(m, 0.1, 2.0);
    let denom = rng.uniform(1.0, 8.0);
    check_param_grads("weighted cross entropy", &x0, OP_TOL, |tape, x| {
        let xv = tape.param(&mat(m, n, x.to_vec()));
        let l = tape
            .weighted_cross_entropy(xv, &labels, &weights, denom)
            .expect("weighted cross entropy");
        (xv, l)
    })
}

pub fn nll_rows(rng: &mut TestRng, m: usize, n: usize) -> usize {
    let x0 = rng.fill(m * n, 0.05, 0.95);
    let labels: Vec<usize> = (0..m).map(|_| rng.below(n)).collect();
    let c = Tensor::vector(rng.fill(m, -2.0, 2.0)).unwrap();
    check_param_grads("per-row nll", &x0, OP_TOL, |tape, x| {
        let xv = tape.param(&mat(m, n, x.to_vec()));
        let v = tape.nll_rows(xv, &labels).expect("nll rows");
        (xv, reduce(tape, v, &c))
    })
}

pub fn entropy(rng: &mut TestRng, m: usize, n: usize) -> usize {
    let x0 = rng.fill(m * n, 0.05, 0.95);
    check_param_grads("entropy", &x0, OP_TOL, |tape, x| {
        let xv = tape.param(&mat(m, n, x.to_vec()));
        let h = tape.entropy(xv).expect("entropy");
        (xv, h)
    })
}

/// The selection includes repeated rows, so accumulation into a source row
/// that is gathered twice is covered.
pub fn select_rows(rng: &mut TestRng, m: usize, n: usize) -> usize {
    let x0 = rng.fill(m * n, -1.5, 1.5);
    let rows: Vec<usize> = (0..m + 2).map(|_| rng.below(m)).collect();
    let c = mat(rows.len(), n, rng.fill(rows.len() * n, -2.0, 2.0));
    check_param_grads("select rows", &x0, OP_TOL, |tape, x| {
        let xv = tape.param(&mat(m, n, x.to_vec()));
        let y = tape.select_rows(xv, &rows).expect("select rows");
        (xv, reduce(tape, y, &c))
    })
}

pub fn select_column(rng: &mut TestRng, m: usize, n: usize) -> usize {
    let x0 = rng.fill(m * n, -1.5, 1.5);
    let col = rng.below(n);
    let c = Tensor::vector(rng.fill(m, -2.0, 2.0)).unwrap();
    check_param_grads("select column", &x0, OP_TOL, |tape, x| {
        let xv = tape.param(&mat(m, n, x.to_vec()));
        let y = tape.select_column(xv, col).expect("select column");
        (xv, reduce(tape, y, &c))
    })
}

/// Checks both factors of the elementwise product.
pub fn mul_both(rng: &mut TestRng, m: usize, n: usize) -> usize {
    let a = mat(m, n, rng.fill(m * n, -1.5, 1.5));
    let b = mat(m, n, rng.fill(m * n, -1.5, 1.5));
    let mut checked = 0;
    checked += check_param_grads("mul lhs", &a.data.clone(), OP_TOL, |tape, x| {
        let av = tape.param(&mat(m, n, x.to_vec()));
        let bv = tape.input(&b);
        let y = tape.mul(av, bv).expect("mul");
        (av, tape.sum(y))
    });
    checked += check_param_grads("mul rhs", &b.data.clone(), OP_TOL, |tape, x| {
        let av = tape.input(&a);
        let bv = tape.param(&mat(m, n, x.to_vec()));
        let y = tape.mul(av, bv).expect("mul");
        (bv, tape.sum(y))
    });
    checked
}

pub fn add_both(rng: &mut TestRng, m: usize, n: usize) -> usize {
    let a = mat(m, n, rng.fill(m * n, -1.5, 1.5));
    let b = mat(m, n, rng.fill(m * n, -1.5, 1.5));
    let c = mat(m, n, rng.fill(m * n, -2.0, 2.0));
    let mut checked = 0;
    checked += check_param_grads("add lhs", &a.data.clone(), OP_TOL, |tape, x| {
        let av = tape.param(&mat(m, n, x.to_vec()));
        let bv = tape.input(&b);
        let y = tape.add(av, bv).expect("add");
        (av, reduce(tape, y, &c))
    });
    checked += check_param_grads("add rhs", &b.data.clone(), OP_TOL, |tape, x| {
        let av = tape.input(&a);
        let bv = tape.param(&mat(m, n, x.to_vec()));
        let y = tape.add(av, bv).expect("add");
        (bv, reduce(tape, y, &c))
    });
    checked
}

pub fn scale(rng: &mut TestRng, m: usize, n: usize) -> usize {
    let x0 = rng.fill(m * n, -1.5, 1.5);
    let k = rng.uniform(-3.0, 3.0);
    let c = mat(m, n, rng.fill(m * n, -2.0, 2.0));
    check_param_grads("scale", &x0, OP_TOL, |tape, x| {
        let xv = tape.param(&mat(m, n, x.to_vec()));
        let y = tape.scale(xv, k);
        (xv, reduce(tape, y, &c))
    })
}

pub fn sum(rng: &mut TestRng, m: usize, n: usize) -> usize {
    let x0 = rng.fill(m * n, -1.5, 1.5);
    let c = mat(m, n, rng.fill(m * n, -2.0, 2.0));
    check_param_grads("sum", &x0, OP_TOL, |tape, x| {
        let xv = tape.param(&mat(m, n, x.to_vec()));
        let weighted = reduce(tape, xv, &c);
        // A second pure-sum stage on top of a 1×1 value still exercises the
        // broadcast of the seed gradient.
        (xv, tape.sum(weighted))
    })
}

/// Gradient reversal deliberately disagrees with a finite difference of its
/// (identity) forward value: the analytic gradient must equal `-lambda`
/// times the value slope.  Returns the number of entries verified.
pub fn grad_reverse_relation(rng: &mut TestRng, m: usize, n: usize, lambda: Real) -> usize {
    let x0 = rng.fill(m * n, -1.5, 1.5);
    let c = mat(m, n, rng.fill(m * n, -2.0, 2.0));

    let mut tape = Tape::new();
    let xv = tape.param(&mat(m, n, x0.clone()));
    let r = tape.grad_reverse(xv, lambda).expect("grad reverse");
    let loss = reduce(&mut tape, r, &c);
    let grads = tape.backward(loss).expect("backward");
    let analytic = grads.get(xv).expect("gradient").to_vec();

    let eval = |x: &[Real]| -> Real {
        let mut tape = Tape::new();
        let xv = tape.param(&mat(m, n, x.to_vec()));
        let r = tape.grad_reverse(xv, lambda).expect("grad reverse");
        let loss = reduce(&mut tape, r, &c);
        tape.value(loss).data[0]
    };
    for i in 0..x0.len() {
        let mut xp = x0.clone();
        xp[i] += super::FD_STEP;
        let mut xm = x0.clone();
        xm[i] -= super::FD_STEP;
        let value_slope = (eval(&xp) - eval(&xm)) / (2.0 * super::FD_STEP);
        let err = super::rel_err(analytic[i], -lambda * value_slope);
        assert!(
            err < OP_TOL,
            "grad reverse: entry {i}: analytic {:.12e} vs -lambda * value slope {:.12e} (rel err {err:.3e})",
            analytic[i],
            -lambda * value_slope
        );
    }
    x0.len()
}

/// Full-objective gradient check over every model parameter.
///
/// The reversal layer makes the recorded graph descend a different function
/// for the feature extractor than for the heads: feature parameters follow
/// `label + coef·entropy − λ·domain` while predictor and discriminator
/// parameters follow `label + coef·entropy + Σ_k w_k·domain_k`.  Instance
/// weights are frozen at the base point so the finite difference sees the
/// same detached weighting the graph does.  Returns entries checked.
pub fn objective_fd(seed: u64) -> usize {
    let mut rng = TestRng::new(seed.wrapping_mul(0x9e37_79b9).max(7));
    let (input_dim, hidden, feature_dim, classes, disc_hidden) = (3, vec![4], 4, 4, 3);
    let m = 8;
    let mut model = build_model_with_heads(
        input_dim,
        &hidden,
        feature_dim,
        classes,
        classes,
        disc_hidden,
        seed,
    )
    .expect("model build");
    // Fresh init puts every bias at exactly zero, which parks some relu
    // preactivations exactly on their kink (e.g. any row whose features all
    // die).  A finite difference at an exact kink matches no one-sided
    // subgradient, so check at a generic nearby point instead.
    for t in model.params_mut() {
        for v in &mut t.data {
            *v += rng.uniform(-0.05, 0.05);
        }
    }

    let x = mat(m, input_dim, rng.fill(m * input_dim, -1.5, 1.5));
    let source_rows: Vec<usize> = (0..m / 2).collect();
    let target_rows: Vec<usize> = (m / 2..m).collect();
    let source_labels: Vec<usize> = (0..m / 2).map(|_| rng.below(classes)).collect();
    let domain_labels: Vec<usize> = (0..m).map(|i| usize::from(i >= m / 2)).collect();
    let raw = rng.fill(classes, 0.2, 1.0);
    let total: Real = raw.iter().sum();
    let class_weights: Vec<Real> = raw.into_iter().map(|w| w / total).collect();
    let (lambda, coef) = (0.6, 0.8);

    // Instance weights frozen at the base point (detached semantics).
    let frozen = {
        let mut tape = Tape::new();
        let fwd = model.forward(&mut tape, &x, lambda).expect("forward");
        tape.value(fwd.class_probs).clone()
    };

    let split = BatchSplit {
        source_rows: &source_rows,
        target_rows: &target_rows,
        source_labels: &source_labels,
        domain_labels: &domain_labels,
    };

    // Evaluates (reported total, descent value) at the given parameters.
    let eval = |flat: &[Real]| -> (Real, Real) {
        let mut probe = model.clone();
        set_flat_params(&mut probe, flat);
        let mut tape = Tape::new();
        let fwd = probe.forward(&mut tape, &x, lambda).expect("forward");
        let objective = san_objective(
            &mut tape,
            fwd.class_probs,
            &fwd.domain_probs,
            &split,
            &class_weights,
            InstanceWeighting::Detached(&frozen),
            lambda,
            coef,
        )
        .expect("objective");
        let descent = tape.value(objective.descent).data[0];
        (objective.breakdown.total, descent)
    };

    // Analytic gradients of the recorded descent scalar.
    let base = flat_params(&model);
    let feature_len = feature_param_len(&model);
    let analytic = {
        let mut tape = Tape::new();
        let fwd = model.forward(&mut tape, &x, lambda).expect("forward");
        let objective = san_objective(
            &mut tape,
            fwd.class_probs,
            &fwd.domain_probs,
            &split,
            &class_weights,
            InstanceWeighting::Detached(&frozen),
            lambda,
            coef,
        )
        .expect("objective");
        let grads = tape.backward(objective.descent).expect("backward");
        let mut flat_grad = Vec::with_capacity(base.len());
        for (t, v) in model.params().iter().zip(&fwd.param_vars) {
            match grads.get(*v) {
                Some(g) => flat_grad.extend_from_slice(g),
                None => flat_grad.extend(std::iter::repeat(0.0).take(t.data.len())),
            }
        }
        flat_grad
    };
    assert_eq!(analytic.len(), base.len());

    // Central difference of the piecewise target at entry `i` with step `h`.
    // Feature parameters descend the reported total (the reversal layer
    // realizes the −λ·domain term); the rest descend the raw sum.
    let fd_at = |i: usize, h: Real| -> Real {
        let mut xp = base.clone();
        xp[i] += h;
        let mut xm = base.clone();
        xm[i] -= h;
        let (up, dp) = eval(&xp);
        let (um, dm) = eval(&xm);
        if i < feature_len {
            (up - um) / (2.0 * h)
        } else {
            (dp - dm) / (2.0 * h)
        }
    };

    let mut checked = 0usize;
    let mut skipped = 0usize;
    for i in 0..base.len() {
        let fd = fd_at(i, super::FD_STEP);
        // A second estimate at twice the step agrees to ~1e-9 relative on a
        // smooth stretch; a large spread means the probe straddles a relu
        // kink, where a finite difference says nothing about the gradient.
        if super::rel_err(fd, fd_at(i, 2.0 * super::FD_STEP)) > 1e-3 {
            skipped += 1;
            continue;
        }
        let err = super::rel_err(analytic[i], fd);
        assert!(
            err < 1e-4,
            "objective: flat entry {i} ({}): analytic {:.12e} vs finite difference {:.12e} (rel err {err:.3e})",
            if i < feature_len { "feature group" } else { "head group" },
            analytic[i],
            fd
        );
        checked += 1;
    }
    assert!(
        skipped * 20 <= base.len(),
        "objective: {skipped} of {} probes were non-smooth; suspicious beyond occasional kinks",
        base.len()
    );
    checked
}
