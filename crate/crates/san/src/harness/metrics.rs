//! Metrics records and their CSV form.
//!
//! Column order is fixed:
//! `step,p,lr,lambda,label_loss,entropy_loss,domain_loss,total_loss,`
//! `target_accuracy,pc_acc_0..pc_acc_{K-1},w_0..w_{K-1},wall_clock_ms`
//! where `K` is the number of source classes.  Floats print in Rust's
//! shortest round-trip form, so two runs agree byte-for-byte exactly when
//! they agree numerically.  `wall_clock_ms` is the one genuinely
//! nondeterministic column; [`strip_wall_clock_column`] exists so callers
//! can compare runs without it.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Result, SanError};
use crate::Real;

/// One logged training step.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    /// Steps completed when the row was recorded (1-based).
    pub step: usize,
    /// Normalized progress used for this step's schedules.
    pub p: Real,
    pub lr: Real,
    pub lambda: Real,
    pub label_loss: Real,
    pub entropy_loss: Real,
    pub domain_loss: Real,
    pub total_loss: Real,
    /// NaN when the evaluation split has no labels.
    pub target_accuracy: Real,
    /// Per-class accuracy; NaN for classes absent from the evaluation split.
    pub per_class_accuracy: Vec<Real>,
    /// Class-weight estimate at this step (always sums to 1).
    pub class_weights: Vec<Real>,
    /// Milliseconds since the run started.
    pub wall_clock_ms: u128,
}

/// Header line for a run over `num_classes` classes.
pub fn csv_header(num_classes: usize) -> String {
    let mut cols: Vec<String> = [
        "step",
        "p",
        "lr",
        "lambda",
        "label_loss",
        "entropy_loss",
        "domain_loss",
        "total_loss",
        "target_accuracy",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    cols.extend((0..num_classes).map(|c| format!("pc_acc_{c}")));
    cols.extend((0..num_classes).map(|c| format!("w_{c}")));
    cols.push("wall_clock_ms".into());
    cols.join(",")
}

/// One row in the fixed column order.
pub fn csv_row(row: &MetricsRow) -> String {
    let mut out = String::new();
    let _ = write!(
        out,
        "{},{},{},{},{},{},{},{},{}",
        row.step,
        row.p,
        row.lr,
        row.lambda,
        row.label_loss,
        row.entropy_loss,
        row.domain_loss,
        row.total_loss,
        row.target_accuracy
    );
    for v in &row.per_class_accuracy {
        let _ = write!(out, ",{v}");
    }
    for w in &row.class_weights {
        let _ = write!(out, ",{w}");
    }
    let _ = write!(out, ",{}", row.wall_clock_ms);
    out
}

/// Render a full metrics CSV (header plus one line per row).
pub fn render_csv(num_classes: usize, rows: &[MetricsRow]) -> Result<String> {
    let mut out = csv_header(num_classes);
    out.push('\n');
    for row in rows {
        if row.per_class_accuracy.len() != num_classes || row.class_weights.len() != num_classes {
            return Err(SanError::ShapeMismatch {
                op: "render_csv",
                lhs: vec![row.per_class_accuracy.len(), row.class_weights.len()],
                rhs: vec![num_classes, num_classes],
            });
        }
        out.push_str(&csv_row(row));
        out.push('\n');
    }
    Ok(out)
}

/// Write a metrics CSV to disk.
pub fn write_csv(path: &Path, num_classes: usize, rows: &[MetricsRow]) -> Result<()> {
    let text = render_csv(num_classes, rows)?;
    std::fs::write(path, text).map_err(|e| SanError::io(path.display().to_string(), e))
}

/// Drop the final (`wall_clock_ms`) column from every line of a metrics
/// CSV, for comparisons that should ignore timing.
pub fn strip_wall_clock_column(csv: &str) -> String {
    csv.lines()
        .map(|line| match line.rfind(',') {
            Some(i) => &line[..i],
            None => line,
        })
        .map(|l| format!("{l}\n"))
        .collect()
}
