use serde::{Deserialize, Serialize};

use super::config::{KvMap, KvReader};
use crate::error::{Error, Result};
use crate::features::{AutoencoderParams, BinMode, EstFitParams, EstKernelSpec, FeatureSpec, DEFAULT_SAMPLES};
use crate::learn::{Family, Hyperparams};
use crate::model::TaskId;

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.9;
pub const DEFAULT_CV_FOLDS: usize = 4;
pub const DEFAULT_EST_WIDTH_MS: f64 = 12.0;

/// 5 repeats for tap localization and every recurrent model, 20 otherwise.
pub fn default_k(task: TaskId, family: Family) -> usize {
    if task == TaskId::TapLocalization || family.needs_sequences() {
        5
    } else {
        20
    }
}

/// 50 ms bins for the food task, 5 ms everywhere else.
pub fn default_bin_ms(task: TaskId) -> f64 {
    match task {
        TaskId::FoodId => 50.0,
        _ => 5.0,
    }
}

/// Everything that determines a protocol run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub task: TaskId,
    pub feature: FeatureSpec,
    pub family: Family,
    /// Empty selects the family's default grid for the feature dimension.
    pub grid: Vec<Hyperparams>,
    pub k: usize,
    pub train_fraction: f64,
    pub cv_folds: usize,
    pub seed: u64,
    pub standardize: bool,
    /// Sweeps only: reuse the native-rate hyperparameters at every rate
    /// instead of re-tuning.
    pub reuse_hyperparams: bool,
}

impl ProtocolSpec {
    pub fn new(task: TaskId, feature: FeatureSpec, family: Family) -> Self {
        ProtocolSpec {
            task,
            feature,
            family,
            grid: Vec::new(),
            k: default_k(task, family),
            train_fraction: DEFAULT_TRAIN_FRACTION,
            cv_folds: DEFAULT_CV_FOLDS,
            seed: 0,
            standardize: true,
            reuse_hyperparams: false,
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_grid(mut self, grid: Vec<Hyperparams>) -> Self {
        self.grid = grid;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("K must be at least 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "train fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.cv_folds < 2 {
            return Err(Error::InvalidParameter("cross-validation needs at least 2 folds".into()));
        }
        if self.family.needs_sequences()
            && !matches!(self.feature, FeatureSpec::Baseline { .. } | FeatureSpec::Est { .. })
        {
            return Err(Error::InvalidParameter(format!(
                "{} needs sequence features (baseline or est), not {}",
                self.family.id(),
                self.feature.family()
            )));
        }
        for hp in &self.grid {
            hp.validate()?;
        }
        Ok(())
    }

    /// Fully resolved key-value form.
    pub fn to_kv(&self) -> KvMap {
        let mut m = KvMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("task", self.task.as_str().into());
        put("model.family", self.family.id().into());
        put("model.grid", grid_to_string(&self.grid));
        put("protocol.k", self.k.to_string());
        put("protocol.train_fraction", self.train_fraction.to_string());
        put("protocol.cv_folds", self.cv_folds.to_string());
        put("protocol.seed", self.seed.to_string());
        put("protocol.standardize", self.standardize.to_string());
        put("protocol.reuse_hyperparams", self.reuse_hyperparams.to_string());
        match &self.feature {
            FeatureSpec::Baseline { bin_ms, mode } => {
                put("feature.kind", "baseline".into());
                put("feature.bin_ms", bin_ms.to_string());
                put("feature.mode", mode.as_str().into());
            }
            FeatureSpec::Fft {
                bin_ms,
                mode,
                keep_coeffs,
                pooled,
            } => {
                put("feature.kind", "fft".into());
                put("feature.bin_ms", bin_ms.to_string());
                put("feature.mode", mode.as_str().into());
                put("feature.keep_coeffs", keep_coeffs.map_or("auto".into(), |k| k.to_string()));
                put("feature.pooled", pooled.to_string());
            }
            FeatureSpec::Autoencoder { bin_ms, mode, params } => {
                put("feature.kind", "autoencoder".into());
                put("feature.bin_ms", bin_ms.to_string());
                put("feature.mode", mode.as_str().into());
                put("feature.epochs", params.epochs.to_string());
                put("feature.lr", params.learning_rate.to_string());
                put("feature.batch", params.batch_size.to_string());
                put("feature.seed", params.seed.to_string());
            }
            FeatureSpec::Est { n_samples, kernel } => {
                put("feature.samples", n_samples.to_string());
                match kernel {
                    EstKernelSpec::Triangle { width_ms } => {
                        put("feature.kind", "est".into());
                        put("feature.width_ms", width_ms.to_string());
                    }
                    EstKernelSpec::Learned(p) => {
                        put("feature.kind", "est-learned".into());
                        put("feature.epochs", p.epochs.to_string());
                        put("feature.kernel_lr", p.kernel_lr.to_string());
                        put("feature.head_lr", p.head_lr.to_string());
                        put("feature.max_recordings", p.max_recordings.to_string());
                        put("feature.init_width_frac", p.init_width_frac.to_string());
                        put("feature.seed", p.seed.to_string());
                    }
                }
            }
        }
        m
    }

    /// Resolves a key-value map over defaults. Unknown keys are errors.
    pub fn from_kv(map: KvMap) -> Result<Self> {
        let mut r = KvReader::new(map);
        let task = TaskId::parse(&r.take_str("task").unwrap_or_else(|| "tap".into())).map_err(|e| cfg("task", e))?;
        let family = Family::parse(&r.take_str("model.family").unwrap_or_else(|| "svm-rbf".into()))
            .map_err(|e| cfg("model.family", e))?;
        let grid = match r.take_str("model.grid") {
            None => Vec::new(),
            Some(s) => parse_grid(&s).map_err(|e| cfg("model.grid", e))?,
        };
        let feature = feature_from_kv(&mut r, task)?;
        let spec = ProtocolSpec {
            task,
            feature,
            family,
            grid,
            k: r.take_or("protocol.k", default_k(task, family))?,
            train_fraction: r.take_or("protocol.train_fraction", DEFAULT_TRAIN_FRACTION)?,
            cv_folds: r.take_or("protocol.cv_folds", DEFAULT_CV_FOLDS)?,
            seed: r.take_or("protocol.seed", 0)?,
            standardize: r.take_bool("protocol.standardize", true)?,
            reuse_hyperparams: r.take_bool("protocol.reuse_hyperparams", false)?,
        };
        r.finish()?;
        spec.validate()?;
        Ok(spec)
    }

    /// Short label, e.g. `svm-rbf/fft`.
    pub fn label(&self) -> String {
        format!("{}/{}", self.family.id(), self.feature.family())
    }
}

fn cfg(key: &str, e: Error) -> Error {
    Error::Config {
        key: key.to_string(),
        reason: e.to_string(),
    }
}

fn feature_from_kv(r: &mut KvReader, task: TaskId) -> Result<FeatureSpec> {
    let kind = r.take_str("feature.kind").unwrap_or_else(|| "fft".into());
    let bin_mode = |r: &mut KvReader, default: BinMode| -> Result<BinMode> {
        match r.take_str("feature.mode") {
            None => Ok(default),
            Some(s) => BinMode::parse(&s).map_err(|e| cfg("feature.mode", e)),
        }
    };
    let bin_ms = |r: &mut KvReader| r.take_or("feature.bin_ms", default_bin_ms(task));
    Ok(match kind.as_str() {
        "baseline" => FeatureSpec::Baseline {
            bin_ms: bin_ms(r)?,
            mode: bin_mode(r, BinMode::SplitPolarity)?,
        },
        "fft" => FeatureSpec::Fft {
            bin_ms: bin_ms(r)?,
            mode: bin_mode(r, BinMode::SplitPolarity)?,
            keep_coeffs: match r.take_str("feature.keep_coeffs").as_deref() {
                None | Some("auto") => None,
                Some(s) => Some(s.parse().map_err(|_| Error::Config {
                    key: "feature.keep_coeffs".into(),
                    reason: format!("expected a count or `auto`, got `{s}`"),
                })?),
            },
            pooled: r.take_bool("feature.pooled", false)?,
        },
        "autoencoder" => {
            let d = AutoencoderParams::default();
            FeatureSpec::Autoencoder {
                bin_ms: bin_ms(r)?,
                mode: bin_mode(r, BinMode::Unsigned)?,
                params: AutoencoderParams {
                    epochs: r.take_or("feature.epochs", d.epochs)?,
                    learning_rate: r.take_or("feature.lr", d.learning_rate)?,
                    batch_size: r.take_or("feature.batch", d.batch_size)?,
                    seed: r.take_or("feature.seed", d.seed)?,
                },
            }
        }
        "est" => FeatureSpec::Est {
            n_samples: r.take_or("feature.samples", DEFAULT_SAMPLES)?,
            kernel: EstKernelSpec::Triangle {
                width_ms: r.take_or("feature.width_ms", DEFAULT_EST_WIDTH_MS)?,
            },
        },
        "est-learned" => {
            let d = EstFitParams::default();
            let n_samples = r.take_or("feature.samples", DEFAULT_SAMPLES)?;
            FeatureSpec::Est {
                n_samples,
                kernel: EstKernelSpec::Learned(EstFitParams {
                    n_samples,
                    epochs: r.take_or("feature.epochs", d.epochs)?,
                    kernel_lr: r.take_or("feature.kernel_lr", d.kernel_lr)?,
                    head_lr: r.take_or("feature.head_lr", d.head_lr)?,
                    max_recordings: r.take_or("feature.max_recordings", d.max_recordings)?,
                    init_width_frac: r.take_or("feature.init_width_frac", d.init_width_frac)?,
                    seed: r.take_or("feature.seed", d.seed)?,
                }),
            }
        }
        other => {
            return Err(Error::Config {
                key: "feature.kind".into(),
                reason: format!("unknown extractor `{other}` (expected baseline, fft, autoencoder, est, est-learned)"),
            })
        }
    })
}

/// `default`, or grid points `k=v,k=v;k=v,...`.
pub fn parse_grid(s: &str) -> Result<Vec<Hyperparams>> {
    let s = s.trim();
    if s.is_empty() || s == "default" {
        return Ok(Vec::new());
    }
    s.split(';')
        .map(|point| {
            let mut hp = Hyperparams::new();
            for pair in point.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                let (k, v) = pair
                    .split_once('=')
                    .ok_or_else(|| Error::InvalidParameter(format!("grid entry `{pair}` is not k=v")))?;
                let v: f64 = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidParameter(format!("grid value `{v}` is not a number")))?;
                hp = hp.with(k.trim(), v);
            }
            hp.validate()?;
            Ok(hp)
        })
        .collect()
}

pub fn grid_to_string(grid: &[Hyperparams]) -> String {
    if grid.is_empty() {
        return "default".into();
    }
    grid.iter().map(ToString::to_string).collect::<Vec<_>>().join(";")
}
