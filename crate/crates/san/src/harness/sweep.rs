//! Grid sweeps over target class count × variant × seed.
//!
//! Results land in an append-only CSV.  Cells already present in the file
//! are skipped, so an interrupted sweep resumes where it stopped and a
//! finished sweep re-run leaves the file byte-identical.  Cells run in
//! parallel; rows are appended in grid order regardless of which finished
//! first.

use std::collections::{HashMap, HashSet};
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Result, SanError};
use crate::harness::config::{DataSource, RunConfig, SweepSpec};
use crate::harness::run::run_experiment;
use crate::optim::Variant;
use crate::Real;

const SWEEP_HEADER: &str = "target_classes,variant,seed,target_accuracy,status";

/// Outcome of one grid cell.
#[derive(Debug, Clone)]
pub struct SweepCellResult {
    pub target_classes: usize,
    pub variant: Variant,
    pub seed: u64,
    /// Final target accuracy; NaN when the run failed.
    pub target_accuracy: Real,
    /// `"ok"`, or the error the run died with.
    pub status: String,
}

impl SweepCellResult {
    fn key(&self) -> (usize, Variant, u64) {
        (self.target_classes, self.variant, self.seed)
    }

    fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.target_classes, self.variant, self.seed, self.target_accuracy, self.status
        )
    }
}

fn parse_rows(text: &str, origin: &str) -> Result<Vec<SweepCellResult>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == SWEEP_HEADER => {}
        Some((_, h)) => {
            return Err(SanError::Parse {
                path: origin.to_string(),
                line: 1,
                msg: format!("unexpected sweep header {h:?}"),
            })
        }
        None => return Ok(Vec::new()),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| SanError::Parse {
            path: origin.to_string(),
            line: idx + 1,
            msg,
        };
        let fields: Vec<&str> = line.splitn(5, ',').collect();
        if fields.len() != 5 {
            return Err(err(format!("expected 5 columns, found {}", fields.len())));
        }
        rows.push(SweepCellResult {
            target_classes: fields[0]
                .parse()
                .map_err(|_| err(format!("invalid target_classes {:?}", fields[0])))?,
            variant: fields[1]
                .parse()
                .map_err(|e: SanError| err(e.to_string()))?,
            seed: fields[2]
                .parse()
                .map_err(|_| err(format!("invalid seed {:?}", fields[2])))?,
            target_accuracy: fields[3]
                .parse()
                .map_err(|_| err(format!("invalid accuracy {:?}", fields[3])))?,
            status: fields[4].to_string(),
        });
    }
    Ok(rows)
}

fn run_cell(base: &RunConfig, target_classes: usize, variant: Variant, seed: u64) -> SweepCellResult {
    let mut cfg = base.clone();
    cfg.variant = variant;
    cfg.seed = seed;
    if let DataSource::Synthetic(spec) = &mut cfg.data {
        spec.target_classes = target_classes;
    }
    match run_experiment(&cfg) {
        Ok(outcome) => SweepCellResult {
            target_classes,
            variant,
            seed,
            target_accuracy: outcome.final_eval.accuracy,
            status: "ok".into(),
        },
        Err(e) => SweepCellResult {
            target_classes,
            variant,
            seed,
            target_accuracy: Real::NAN,
            // keep the CSV one-line-per-cell
            status: e.to_string().replace(',', ";").replace('\n', " "),
        },
    }
}

/// Run every cell of the grid that `out_csv` does not already contain,
/// appending results in grid order.  Returns the results for all requested
/// cells, freshly run or read back from the file.
pub fn run_sweep(
    base: &RunConfig,
    spec: &SweepSpec,
    out_csv: &Path,
) -> Result<Vec<SweepCellResult>> {
    let DataSource::Synthetic(base_spec) = &base.data else {
        return Err(SanError::Config(
            "sweeps vary target_classes, which needs synthetic data".into(),
        ));
    };
    if spec.target_counts.is_empty() || spec.variants.is_empty() || spec.seeds.is_empty() {
        return Err(SanError::Config(
            "sweep needs at least one target count, variant, and seed".into(),
        ));
    }
    if let Some(&bad) = spec
        .target_counts
        .iter()
        .find(|&&c| c == 0 || c > base_spec.source_classes)
    {
        return Err(SanError::Config(format!(
            "sweep target count {bad} outside 1..={}",
            base_spec.source_classes
        )));
    }

    let display = out_csv.display().to_string();
    let existing_text = match std::fs::read_to_string(out_csv) {
        Ok(t) => Some(t),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(SanError::io(display.clone(), e)),
    };
    let existing = match existing_text.as_deref() {
        Some(t) if !t.trim().is_empty() => parse_rows(t, &display)?,
        _ => Vec::new(),
    };
    let needs_header = existing_text.as_deref().map_or(true, |t| t.trim().is_empty());
    let mut done: HashMap<(usize, Variant, u64), SweepCellResult> =
        existing.into_iter().map(|r| (r.key(), r)).collect();

    let mut cells = Vec::new();
    let mut seen = HashSet::new();
    for &count in &spec.target_counts {
        for &variant in &spec.variants {
            for &seed in &spec.seeds {
                if seen.insert((count, variant, seed)) {
                    cells.push((count, variant, seed));
                }
            }
        }
    }
    let todo: Vec<_> = cells
        .iter()
        .copied()
        .filter(|key| !done.contains_key(key))
        .collect();

    let fresh: Vec<SweepCellResult> = todo
        .into_par_iter()
        .map(|(count, variant, seed)| run_cell(base, count, variant, seed))
        .collect();

    if needs_header || !fresh.is_empty() {
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(out_csv)
            .map_err(|e| SanError::io(display.clone(), e))?;
        let mut chunk = String::new();
        if needs_header {
            chunk.push_str(SWEEP_HEADER);
            chunk.push('\n');
        }
        for r in &fresh {
            chunk.push_str(&r.to_csv());
            chunk.push('\n');
        }
        file.write_all(chunk.as_bytes())
            .map_err(|e| SanError::io(display.clone(), e))?;
    }

    for r in fresh {
        done.insert(r.key(), r);
    }
    Ok(cells
        .into_iter()
        .map(|key| done.get(&key).expect("every cell ran or was loaded").clone())
        .collect())
}
