//! Datasets: synthetic generation, CSV ingestion, and mixed-domain batching.
//!
//! The synthetic task is a Gaussian-blob classification problem built for
//! partial transfer: the source domain has `source_classes` blobs, the
//! target domain only the first `target_classes` of them (a strict subset),
//! rotated and translated so the domains are misaligned.  Target labels are
//! produced separately from the target dataset — training code never sees
//! them; they exist only for evaluation.
//!
//! All generation is deterministic given the seed.  Batch shuffling draws
//! from a separate stream per epoch so data generation and batch order
//! never share random state.

use std::fmt::Write as _;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::Tensor;
use crate::error::{Result, SanError};
use crate::Real;

// ── datasets ─────────────────────────────────────────────────────────────

/// A design matrix with optional integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `n × d` feature matrix.
    pub x: Tensor,
    /// One label per row, when the dataset is labeled.
    pub labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(x: Tensor, labels: Option<Vec<usize>>) -> Result<Self> {
        if x.shape.len() != 2 {
            return Err(SanError::ShapeMismatch {
                op: "Dataset::new",
                lhs: x.shape.clone(),
                rhs: vec![0, 0],
            });
        }
        if let Some(l) = &labels {
            if l.len() != x.rows() {
                return Err(SanError::ShapeMismatch {
                    op: "Dataset::new",
                    lhs: vec![x.rows()],
                    rhs: vec![l.len()],
                });
            }
        }
        Ok(Dataset { x, labels })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    /// Largest label plus one; error when unlabeled.
    pub fn num_classes(&self) -> Result<usize> {
        match &self.labels {
            Some(l) => Ok(l.iter().max().map_or(0, |m| m + 1)),
            None => Err(SanError::Empty { what: "labels" }),
        }
    }
}

// ── synthetic generation ─────────────────────────────────────────────────

/// Recipe for the synthetic partial-transfer task.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    /// Number of source classes (the label space of the classifier).
    pub source_classes: usize,
    /// Number of target classes; must not exceed `source_classes`.  The
    /// target uses the *first* `target_classes` class identities.
    pub target_classes: usize,
    /// Feature dimensionality.
    pub dim: usize,
    pub samples_per_class_source: usize,
    pub samples_per_class_target: usize,
    /// Class centers are drawn uniformly from `[-scale, scale]^dim`.
    pub scale: Real,
    /// Planar rotation (degrees, in the first two coordinates) applied to
    /// target class centers.  Ignored when `dim == 1`.
    pub rotation_degrees: Real,
    /// Isotropic noise scale around each center.
    pub sigma: Real,
    /// Shift applied to target class centers after rotation.  `None` means
    /// a unit shift along the first coordinate.
    pub translation: Option<Vec<Real>>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            source_classes: 10,
            target_classes: 5,
            dim: 2,
            samples_per_class_source: 100,
            samples_per_class_target: 100,
            scale: 4.0,
            rotation_degrees: 30.0,
            sigma: 0.3,
            translation: None,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.source_classes == 0 || self.target_classes == 0 {
            return Err(SanError::Config("class counts must be positive".into()));
        }
        if self.target_classes > self.source_classes {
            return Err(SanError::Config(format!(
                "target_classes ({}) cannot exceed source_classes ({})",
                self.target_classes, self.source_classes
            )));
        }
        if self.dim == 0 {
            return Err(SanError::Config("dim must be positive".into()));
        }
        if self.samples_per_class_source == 0 || self.samples_per_class_target == 0 {
            return Err(SanError::Config("samples per class must be positive".into()));
        }
        if !self.scale.is_finite() || self.scale <= 0.0 {
            return Err(SanError::Config(format!(
                "scale must be finite and positive, got {}",
                self.scale
            )));
        }
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(SanError::Config(format!(
                "sigma must be finite and non-negative, got {}",
                self.sigma
            )));
        }
        if !self.rotation_degrees.is_finite() {
            return Err(SanError::Config("rotation_degrees must be finite".into()));
        }
        if let Some(t) = &self.translation {
            if t.len() != self.dim {
                return Err(SanError::Config(format!(
                    "translation has {} entries but dim is {}",
                    t.len(),
                    self.dim
                )));
            }
        }
        Ok(())
    }

    fn effective_translation(&self) -> Vec<Real> {
        self.translation.clone().unwrap_or_else(|| {
            let mut t = vec![0.0; self.dim];
            t[0] = 1.0;
            t
        })
    }
}

/// A generated source/target pair.  `target.labels` is `None` by
/// construction; the true labels live in `target_labels` for evaluation.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub source: Dataset,
    pub target: Dataset,
    pub target_labels: Vec<usize>,
}

/// Rotate the first two coordinates of `v` by `degrees`, in place.
fn rotate_in_plane(v: &mut [Real], degrees: Real) {
    if v.len() < 2 {
        return;
    }
    let rad = degrees.to_radians();
    let (sin, cos) = rad.sin_cos();
    let (x, y) = (v[0], v[1]);
    v[0] = x * cos - y * sin;
    v[1] = x * sin + y * cos;
}

/// Generate the synthetic task.  Deterministic in `seed`: identical specs
/// and seeds produce bit-identical datasets.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.dim;

    let centers: Vec<Vec<Real>> = (0..spec.source_classes)
        .map(|_| (0..d).map(|_| rng.gen_range(-spec.scale..spec.scale)).collect())
        .collect();

    let n_s = spec.source_classes * spec.samples_per_class_source;
    let mut sx = Vec::with_capacity(n_s * d);
    let mut sy = Vec::with_capacity(n_s);
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..spec.samples_per_class_source {
            for &coord in center {
                let z: Real = rng.sample(StandardNormal);
                sx.push(coord + spec.sigma * z);
            }
            sy.push(c);
        }
    }

    let shift = spec.effective_translation();
    let n_t = spec.target_classes * spec.samples_per_class_target;
    let mut tx = Vec::with_capacity(n_t * d);
    let mut ty = Vec::with_capacity(n_t);
    for (c, center) in centers.iter().take(spec.target_classes).enumerate() {
        let mut moved = center.clone();
        rotate_in_plane(&mut moved, spec.rotation_degrees);
        for (m, s) in moved.iter_mut().zip(&shift) {
            *m += s;
        }
        for _ in 0..spec.samples_per_class_target {
            for &coord in &moved {
                let z: Real = rng.sample(StandardNormal);
                tx.push(coord + spec.sigma * z);
            }
            ty.push(c);
        }
    }

    Ok(SyntheticData {
        source: Dataset::new(Tensor::matrix(n_s, d, sx)?, Some(sy))?,
        target: Dataset::new(Tensor::matrix(n_t, d, tx)?, None)?,
        target_labels: ty,
    })
}

// ── CSV I/O ──────────────────────────────────────────────────────────────

/// How a CSV file maps onto a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvSchema {
    /// Skip the first non-empty line.
    pub has_header: bool,
    /// The last column is an integer class label.
    pub labeled: bool,
}

/// Load a dataset from a comma-separated file: feature columns, then (when
/// `schema.labeled`) one integer label column.  Errors carry the 1-based
/// line number.
pub fn load_csv(path: &Path, schema: CsvSchema) -> Result<Dataset> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| SanError::io(display.clone(), e))?;
    let mut features: Vec<Real> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut width: Option<usize> = None;
    let mut rows = 0usize;
    let mut seen_header = false;

    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if schema.has_header && !seen_header {
            seen_header = true;
            continue;
        }
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let min_cols = if schema.labeled { 2 } else { 1 };
        if fields.len() < min_cols {
            return Err(SanError::Parse {
                path: display,
                line: lineno,
                msg: format!("expected at least {min_cols} columns, found {}", fields.len()),
            });
        }
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(SanError::Parse {
                    path: display,
                    line: lineno,
                    msg: format!("expected {w} columns, found {}", fields.len()),
                });
            }
            Some(_) => {}
        }
        let (feat_fields, label_field) = if schema.labeled {
            let (f, l) = fields.split_at(fields.len() - 1);
            (f, Some(l[0]))
        } else {
            (&fields[..], None)
        };
        for f in feat_fields {
            let v: Real = f.parse().map_err(|_| SanError::Parse {
                path: display.clone(),
                line: lineno,
                msg: format!("invalid number {f:?}"),
            })?;
            if !v.is_finite() {
                return Err(SanError::Parse {
                    path: display.clone(),
                    line: lineno,
                    msg: format!("non-finite value {f:?}"),
                });
            }
            features.push(v);
        }
        if let Some(l) = label_field {
            labels.push(l.parse().map_err(|_| SanError::Parse {
                path: display.clone(),
                line: lineno,
                msg: format!("invalid label {l:?}"),
            })?);
        }
        rows += 1;
    }

    if rows == 0 {
        return Err(SanError::Empty { what: "csv rows" });
    }
    let cols = width.unwrap() - usize::from(schema.labeled);
    if cols == 0 {
        return Err(SanError::Parse {
            path: display,
            line: 1,
            msg: "no feature columns".into(),
        });
    }
    Dataset::new(
        Tensor::matrix(rows, cols, features)?,
        schema.labeled.then_some(labels),
    )
}

/// Write a dataset as CSV (optionally with a `f_0,…[,label]` header).
/// Floats print in shortest round-trip form, so a load of the written file
/// reproduces the dataset exactly.
pub fn save_csv(path: &Path, data: &Dataset, with_header: bool) -> Result<()> {
    let mut out = String::new();
    if with_header {
        let mut cols: Vec<String> = (0..data.dim()).map(|j| format!("f_{j}")).collect();
        if data.labels.is_some() {
            cols.push("label".into());
        }
        let _ = writeln!(out, "{}", cols.join(","));
    }
    for i in 0..data.len() {
        let row = data
            .x
            .row(i)
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        match &data.labels {
            Some(l) => {
                let _ = writeln!(out, "{row},{}", l[i]);
            }
            None => {
                let _ = writeln!(out, "{row}");
            }
        }
    }
    std::fs::write(path, out).map_err(|e| SanError::io(path.display().to_string(), e))
}

// ── batching ─────────────────────────────────────────────────────────────

/// One mixed batch: source rows first, then target rows.
#[derive(Debug, Clone)]
pub struct Batch {
    /// `(m_s + m_t) × d` features.
    pub x: Tensor,
    /// Class labels for the first `m_s` rows.
    pub source_labels: Vec<usize>,
    pub m_s: usize,
    pub m_t: usize,
}

impl Batch {
    pub fn source_rows(&self) -> Vec<usize> {
        (0..self.m_s).collect()
    }

    pub fn target_rows(&self) -> Vec<usize> {
        (self.m_s..self.m_s + self.m_t).collect()
    }

    /// Domain flag per row: 0 for source, 1 for target.
    pub fn domain_labels(&self) -> Vec<usize> {
        let mut d = vec![0usize; self.m_s];
        d.extend(std::iter::repeat(1).take(self.m_t));
        d
    }
}

/// Build one epoch of mixed batches.  Each batch takes `batch_size / 2`
/// source rows (rounded down) and the rest from the target.  The epoch
/// covers max(source, target) passes, cycling the shorter side; both sides
/// are shuffled independently, deterministically in `(seed, epoch)`.
pub fn make_batches(
    source: &Dataset,
    target: &Dataset,
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<Batch>> {
    let labels = source.labels.as_ref().ok_or(SanError::Empty {
        what: "source labels",
    })?;
    if batch_size < 2 {
        return Err(SanError::Config(format!(
            "batch_size must be at least 2, got {batch_size}"
        )));
    }
    if source.dim() != target.dim() {
        return Err(SanError::ShapeMismatch {
            op: "make_batches",
            lhs: source.x.shape.clone(),
            rhs: target.x.shape.clone(),
        });
    }
    let m_s = batch_size / 2;
    let m_t = batch_size - m_s;
    let (n_s, n_t) = (source.len(), target.len());
    let d = source.dim();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 + epoch);
    let mut perm_s: Vec<usize> = (0..n_s).collect();
    perm_s.shuffle(&mut rng);
    let mut perm_t: Vec<usize> = (0..n_t).collect();
    perm_t.shuffle(&mut rng);

    let num_batches = (n_s.div_ceil(m_s)).max(n_t.div_ceil(m_t));
    let mut batches = Vec::with_capacity(num_batches);
    for b in 0..num_batches {
        let mut x = Vec::with_capacity((m_s + m_t) * d);
        let mut batch_labels = Vec::with_capacity(m_s);
        for i in 0..m_s {
            let idx = perm_s[(b * m_s + i) % n_s];
            x.extend_from_slice(source.x.row(idx));
            batch_labels.push(labels[idx]);
        }
        for j in 0..m_t {
            let idx = perm_t[(b * m_t + j) % n_t];
            x.extend_from_slice(target.x.row(idx));
        }
        batches.push(Batch {
            x: Tensor::matrix(m_s + m_t, d, x)?,
            source_labels: batch_labels,
            m_s,
            m_t,
        });
    }
    Ok(batches)
}
