//! Selective adversarial networks for partial transfer learning.
//!
//! Partial transfer learning is the setting where the unlabeled target domain
//! covers only a subset of the labeled source domain's classes.  Matching the
//! whole source distribution against the target (as plain adversarial domain
//! adaptation does) then drags target points toward source-only "outlier"
//! classes and can end up *worse* than not adapting at all.  The selective
//! adversarial network (SAN) counters this by splitting the single domain
//! discriminator into one discriminator per source class and weighting each
//! sample's contribution to each discriminator by the classifier's own
//! probability that the sample belongs to that class.  Outlier-class
//! discriminators starve; shared-class discriminators align exactly the
//! distributions that should be aligned.
//!
//! The crate is self-contained and desk-scale:
//!
//! * [`autodiff`] — a minimal reverse-mode tape (matmul, affine, relu,
//!   row softmax, cross entropy, entropy, gradient reversal, and friends).
//! * [`model`] — feature extractor, label predictor, and the per-class
//!   domain discriminators, with seeded deterministic init and checkpointing.
//! * [`losses`] — label loss, target entropy, instance-weighted per-class
//!   domain losses, class-weight tracking, and the combined objective.
//! * [`optim`] — SGD with momentum plus the annealed learning-rate and
//!   adversarial ramp-up schedules.
//! * [`data`] — synthetic partial-transfer task generation, CSV ingestion,
//!   and mixed-domain batching.
//! * [`harness`] — config files, the training loop, evaluation, sweeps over
//!   the number of target classes, and embedding export.
//!
//! Everything is deterministic given a seed: same config, same bytes out.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod harness;
pub mod losses;
pub mod model;
pub mod optim;

pub use autodiff::{Gradients, Tape, Tensor, Var};
pub use error::{Result, SanError};

/// Scalar type used for all tensor data and schedules.
///
/// Defaults to `f64`; the `f32` feature switches the whole crate to single
/// precision (the bundled test suite assumes the default).
#[cfg(not(feature = "f32"))]
pub type Real = f64;
#[cfg(feature = "f32")]
pub type Real = f32;

/// Probabilities are clamped at this floor before any logarithm.
pub const LOG_EPS: Real = 1e-12;
