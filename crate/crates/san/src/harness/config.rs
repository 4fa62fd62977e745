//! Flat `key = value` experiment configuration.
//!
//! One file describes a full run: variant, seeds, schedule constants, model
//! widths, and either a synthetic-task recipe or paths to CSV data.  Keys
//! the parser does not know are errors — silently ignoring a typo like
//! `entropy_coeff` would change the experiment being run.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::SyntheticSpec;
use crate::error::{Result, SanError};
use crate::losses::WeightMode;
use crate::optim::{TrainConfig, Variant};

/// Where the training data comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Generate the two-domain Gaussian task from a recipe.
    Synthetic(SyntheticSpec),
    /// Read datasets from disk: a labeled source CSV, an unlabeled target
    /// CSV, and optionally a labeled evaluation CSV.
    Files {
        source: PathBuf,
        target: PathBuf,
        target_eval: Option<PathBuf>,
        has_header: bool,
    },
}

/// Everything a single training run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub variant: Variant,
    pub seed: u64,
    pub total_steps: usize,
    pub batch_size: usize,
    /// Metrics are recorded every this many steps (and at the final step).
    pub eval_every: usize,
    pub train: TrainConfig,
    pub weight_mode: WeightMode,
    /// Hidden widths of the feature extractor; may be empty.
    pub hidden_dims: Vec<usize>,
    pub feature_dim: usize,
    pub disc_hidden: usize,
    pub data: DataSource,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            variant: Variant::San,
            seed: 0,
            total_steps: 2000,
            batch_size: 64,
            eval_every: 100,
            train: TrainConfig::default(),
            weight_mode: WeightMode::PerBatchEma,
            hidden_dims: vec![64],
            feature_dim: 16,
            disc_hidden: 16,
            data: DataSource::Synthetic(SyntheticSpec::default()),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.total_steps == 0 {
            return Err(SanError::Config("total_steps must be positive".into()));
        }
        if self.batch_size < 2 {
            return Err(SanError::Config(format!(
                "batch_size must be at least 2, got {}",
                self.batch_size
            )));
        }
        if self.eval_every == 0 {
            return Err(SanError::Config("eval_every must be positive".into()));
        }
        if self.feature_dim == 0 || self.disc_hidden == 0 {
            return Err(SanError::Config(
                "feature_dim and disc_hidden must be positive".into(),
            ));
        }
        if self.hidden_dims.iter().any(|&d| d == 0) {
            return Err(SanError::Config(
                "hidden_dims entries must be positive".into(),
            ));
        }
        if let DataSource::Synthetic(spec) = &self.data {
            spec.validate()?;
        }
        Ok(())
    }
}

/// Grid for the `sweep` command: every combination of target class count,
/// variant, and seed is trained once.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub target_counts: Vec<usize>,
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            target_counts: vec![3, 5, 8, 10],
            variants: vec![Variant::San, Variant::Dann],
            seeds: vec![0, 1, 2],
        }
    }
}

/// A parsed configuration file: the run itself plus the sweep grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FullConfig {
    pub run: RunConfig,
    pub sweep: SweepSpec,
}

// ── parsing ──────────────────────────────────────────────────────────────

struct LineCtx<'a> {
    origin: &'a str,
    line: usize,
}

impl LineCtx<'_> {
    fn err(&self, msg: impl Into<String>) -> SanError {
        SanError::Parse {
            path: self.origin.to_string(),
            line: self.line,
            msg: msg.into(),
        }
    }

    fn num<T: FromStr>(&self, key: &str, val: &str) -> Result<T> {
        val.parse()
            .map_err(|_| self.err(format!("invalid value {val:?} for {key}")))
    }

    fn list<T: FromStr>(&self, key: &str, val: &str) -> Result<Vec<T>> {
        if val.is_empty() {
            return Ok(Vec::new());
        }
        val.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| self.err(format!("invalid list entry {:?} for {key}", s.trim())))
            })
            .collect()
    }

    fn flag(&self, key: &str, val: &str) -> Result<bool> {
        match val {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(self.err(format!("expected true or false for {key}, got {val:?}"))),
        }
    }
}

/// Parse a configuration file.
pub fn parse_file(path: &Path) -> Result<FullConfig> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| SanError::io(origin.clone(), e))?;
    parse_str(&text, &origin)
}

/// Parse configuration text.  `origin` names the source in error messages.
pub fn parse_str(text: &str, origin: &str) -> Result<FullConfig> {
    let mut cfg = FullConfig::default();
    let mut spec = SyntheticSpec::default();
    let mut saw_synthetic_key = false;
    let mut source_csv: Option<PathBuf> = None;
    let mut target_csv: Option<PathBuf> = None;
    let mut target_eval_csv: Option<PathBuf> = None;
    let mut csv_has_header = false;
    let mut saw_csv_key = false;

    for (idx, raw) in text.lines().enumerate() {
        let ctx = LineCtx {
            origin,
            line: idx + 1,
        };
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ctx.err(format!("expected `key = value`, got {line:?}")));
        };
        let key = key.trim();
        let value = value.trim();

        let run = &mut cfg.run;
        let train = &mut run.train;
        match key {
            "variant" => {
                run.variant = value.parse().map_err(|e: SanError| ctx.err(e.to_string()))?
            }
            "seed" => run.seed = ctx.num(key, value)?,
            "total_steps" => run.total_steps = ctx.num(key, value)?,
            "batch_size" => run.batch_size = ctx.num(key, value)?,
            "eval_every" => run.eval_every = ctx.num(key, value)?,

            "eta0" => train.eta0 = ctx.num(key, value)?,
            "alpha" => train.alpha = ctx.num(key, value)?,
            "beta" => train.beta = ctx.num(key, value)?,
            "momentum" => train.momentum = ctx.num(key, value)?,
            "gamma_ramp" => train.gamma_ramp = ctx.num(key, value)?,
            "entropy_coef" => train.entropy_coef = ctx.num(key, value)?,
            "new_layer_lr_multiplier" => train.new_layer_lr_multiplier = ctx.num(key, value)?,
            "ema_decay" => train.ema_decay = ctx.num(key, value)?,
            "detach_instance_weights" => {
                train.detach_instance_weights = ctx.flag(key, value)?
            }
            "weight_mode" => {
                run.weight_mode = match value.to_ascii_lowercase().replace('-', "_").as_str() {
                    "per_batch_ema" => WeightMode::PerBatchEma,
                    "full_target_recompute" => WeightMode::FullTargetRecompute,
                    _ => {
                        return Err(ctx.err(format!(
                            "unknown weight_mode {value:?}; expected per_batch_ema or \
                             full_target_recompute"
                        )))
                    }
                }
            }

            "hidden_dims" => run.hidden_dims = ctx.list(key, value)?,
            "feature_dim" => run.feature_dim = ctx.num(key, value)?,
            "disc_hidden" => run.disc_hidden = ctx.num(key, value)?,

            "source_classes" => {
                spec.source_classes = ctx.num(key, value)?;
                saw_synthetic_key = true;
            }
            "target_classes" => {
                spec.target_classes = ctx.num(key, value)?;
                saw_synthetic_key = true;
            }
            "data_dim" => {
                spec.dim = ctx.num(key, value)?;
                saw_synthetic_key = true;
            }
            "samples_per_class_source" => {
                spec.samples_per_class_source = ctx.num(key, value)?;
                saw_synthetic_key = true;
            }
            "samples_per_class_target" => {
                spec.samples_per_class_target = ctx.num(key, value)?;
                saw_synthetic_key = true;
            }
            "scale" => {
                spec.scale = ctx.num(key, value)?;
                saw_synthetic_key = true;
            }
            "rotation_degrees" => {
                spec.rotation_degrees = ctx.num(key, value)?;
                saw_synthetic_key = true;
            }
            "sigma" => {
                spec.sigma = ctx.num(key, value)?;
                saw_synthetic_key = true;
            }
            "translation" => {
                spec.translation = Some(ctx.list(key, value)?);
                saw_synthetic_key = true;
            }

            "source_csv" => {
                source_csv = Some(PathBuf::from(value));
                saw_csv_key = true;
            }
            "target_csv" => {
                target_csv = Some(PathBuf::from(value));
                saw_csv_key = true;
            }
            "target_eval_csv" => {
                target_eval_csv = Some(PathBuf::from(value));
                saw_csv_key = true;
            }
            "csv_has_header" => {
                csv_has_header = ctx.flag(key, value)?;
                saw_csv_key = true;
            }

            "sweep_target_counts" => cfg.sweep.target_counts = ctx.list(key, value)?,
            "sweep_variants" => {
                cfg.sweep.variants = value
                    .split(',')
                    .map(|s| s.trim().parse().map_err(|e: SanError| ctx.err(e.to_string())))
                    .collect::<Result<_>>()?
            }
            "sweep_seeds" => cfg.sweep.seeds = ctx.list(key, value)?,

            _ => return Err(ctx.err(format!("unknown key {key:?}"))),
        }
    }

    if saw_csv_key {
        if saw_synthetic_key {
            return Err(SanError::Config(
                "cannot mix synthetic-data keys with CSV data keys".into(),
            ));
        }
        let (Some(source), Some(target)) = (source_csv, target_csv) else {
            return Err(SanError::Config(
                "CSV data needs both source_csv and target_csv".into(),
            ));
        };
        cfg.run.data = DataSource::Files {
            source,
            target,
            target_eval: target_eval_csv,
            has_header: csv_has_header,
        };
    } else {
        cfg.run.data = DataSource::Synthetic(spec);
    }

    cfg.run.validate()?;
    Ok(cfg)
}
