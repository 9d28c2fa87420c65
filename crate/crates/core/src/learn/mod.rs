//! From-scratch learners: SMO support-vector machines and regressors, a
//! two-hidden-layer perceptron, a gated recurrent network, and grid-search
//! cross-validation.

mod cv;
mod gru;
mod mlp;
pub mod smo;
mod svm;

pub use cv::{default_grid, folds, grid_search_cv, CvResult, Scorer};
pub use gru::{GruCell, GruGrads, GruModel, GruParams};
pub use mlp::{MlpParams, Target, TargetScale};
pub use svm::{Kernel, Machine, SolverReport, SvmParams, KKT_TOL};

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::Label;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    SvmLinear,
    SvmRbf,
    Mlp,
    Gru,
}

impl Family {
    pub fn id(self) -> &'static str {
        match self {
            Family::SvmLinear => "svm-linear",
            Family::SvmRbf => "svm-rbf",
            Family::Mlp => "mlp",
            Family::Gru => "gru",
        }
    }

    /// Accepts `svr-*` spellings for the regression variants.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "svm-linear" | "svr-linear" => Ok(Family::SvmLinear),
            "svm-rbf" | "svr-rbf" => Ok(Family::SvmRbf),
            "mlp" => Ok(Family::Mlp),
            "gru" | "rnn" => Ok(Family::Gru),
            o => Err(Error::InvalidParameter(format!(
                "unknown model `{o}` (expected svm-linear, svm-rbf, svr-linear, svr-rbf, mlp, gru)"
            ))),
        }
    }

    pub fn needs_sequences(self) -> bool {
        self == Family::Gru
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskKind {
    Regression,
    Classification { class_count: usize },
}

impl TaskKind {
    pub fn of(labels: &[Label]) -> Result<Self> {
        let first = labels
            .first()
            .ok_or_else(|| Error::InvalidInput("no labels".into()))?;
        let kind = match *first {
            Label::Regression { .. } => TaskKind::Regression,
            Label::Class { class_count, .. } => TaskKind::Classification { class_count },
        };
        if labels.iter().any(|l| TaskKind::of_one(l) != kind) {
            return Err(Error::InvalidInput("labels mix regression and classification".into()));
        }
        Ok(kind)
    }

    fn of_one(l: &Label) -> Self {
        match *l {
            Label::Regression { .. } => TaskKind::Regression,
            Label::Class { class_count, .. } => TaskKind::Classification { class_count },
        }
    }
}

/// Named real-valued hyperparameters.
///
/// Known keys: `C`, `gamma`, `epsilon`, `lr`, `epochs`, `batch`, `seed`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Hyperparams(pub BTreeMap<String, f64>);

impl Hyperparams {
    pub fn new() -> Self {
        Hyperparams(BTreeMap::new())
    }

    pub fn with(mut self, key: &str, v: f64) -> Self {
        self.0.insert(key.to_string(), v);
        self
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.0.get(key).copied()
    }

    pub fn get_or(&self, key: &str, default: f64) -> f64 {
        self.get(key).unwrap_or(default)
    }

    pub(crate) fn require(&self, key: &str) -> Result<f64> {
        self.get(key)
            .ok_or_else(|| Error::InvalidParameter(format!("missing hyperparameter `{key}`")))
    }

    pub fn validate(&self) -> Result<()> {
        for (k, &v) in &self.0 {
            let ok = match k.as_str() {
                "C" | "gamma" | "lr" => v > 0.0 && v.is_finite(),
                "epsilon" => v >= 0.0 && v.is_finite(),
                "epochs" | "batch" => v >= 1.0 && v.fract() == 0.0,
                "seed" => v >= 0.0 && v.fract() == 0.0,
                _ => return Err(Error::InvalidParameter(format!("unknown hyperparameter `{k}`"))),
            };
            if !ok {
                return Err(Error::InvalidParameter(format!("hyperparameter {k}={v} out of range")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Hyperparams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(k, v)| format!("{k}={v}")).collect();
        f.write_str(&parts.join(","))
    }
}

/// Training inputs: fixed-length vectors or variable-length sequences.
#[derive(Debug, Clone, PartialEq)]
pub enum Inputs {
    Vectors(Vec<Vec<f64>>),
    Sequences(Vec<Vec<Vec<f64>>>),
}

#[derive(Debug, Clone, Copy)]
pub enum InputRef<'a> {
    Vector(&'a [f64]),
    Sequence(&'a [Vec<f64>]),
}

impl Inputs {
    pub fn len(&self) -> usize {
        match self {
            Inputs::Vectors(v) => v.len(),
            Inputs::Sequences(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Vector length, or step dimension for sequences.
    pub fn dim(&self) -> usize {
        match self {
            Inputs::Vectors(v) => v.first().map_or(0, Vec::len),
            Inputs::Sequences(s) => s.first().and_then(|q| q.first()).map_or(0, Vec::len),
        }
    }

    pub fn get(&self, i: usize) -> InputRef<'_> {
        match self {
            Inputs::Vectors(v) => InputRef::Vector(&v[i]),
            Inputs::Sequences(s) => InputRef::Sequence(&s[i]),
        }
    }

    pub fn subset(&self, idx: &[usize]) -> Inputs {
        match self {
            Inputs::Vectors(v) => Inputs::Vectors(idx.iter().map(|&i| v[i].clone()).collect()),
            Inputs::Sequences(s) => Inputs::Sequences(idx.iter().map(|&i| s[i].clone()).collect()),
        }
    }

    fn validate(&self) -> Result<()> {
        let d = self.dim();
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            Inputs::Vectors(v) => {
                if v.iter().any(|x| x.len() != d) {
                    return Err(Error::InvalidInput("feature vectors differ in length".into()));
                }
                if !v.iter().all(|x| finite(x)) {
                    return Err(Error::InvalidData("non-finite feature value".into()));
                }
            }
            Inputs::Sequences(s) => {
                if s.iter().flatten().any(|x| x.len() != d) {
                    return Err(Error::InvalidInput("sequence steps differ in dimension".into()));
                }
                if !s.iter().flatten().all(|x| finite(x)) {
                    return Err(Error::InvalidData("non-finite feature value".into()));
                }
            }
        }
        Ok(())
    }

    /// Order-sensitive hash of the exact values.
    pub fn content_hash(&self, labels: &[Label]) -> String {
        let mut h = Sha256::new();
        let mut put = |v: &[f64]| {
            for x in v {
                h.update(x.to_le_bytes());
            }
            h.update(b"|");
        };
        match self {
            Inputs::Vectors(v) => v.iter().for_each(|x| put(x)),
            Inputs::Sequences(s) => s.iter().flatten().for_each(|x| put(x)),
        }
        let lv: Vec<f64> = labels.iter().map(Label::value).collect();
        put(&lv);
        crate::model::hex(&h.finalize()[..16])
    }
}

/// Per-dimension z-score. Zero-variance dimensions are only centred.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Inputs) -> Self {
        let d = x.dim();
        let rows: Vec<&[f64]> = match x {
            Inputs::Vectors(v) => v.iter().map(Vec::as_slice).collect(),
            Inputs::Sequences(s) => s.iter().flatten().map(Vec::as_slice).collect(),
        };
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for r in &rows {
            for (m, v) in mean.iter_mut().zip(*r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in &rows {
            for ((s, v), m) in var.iter_mut().zip(*r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, std }
    }

    pub fn apply_vec(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }

    pub fn apply(&self, x: &Inputs) -> Inputs {
        match x {
            Inputs::Vectors(v) => Inputs::Vectors(v.iter().map(|r| self.apply_vec(r)).collect()),
            Inputs::Sequences(s) => Inputs::Sequences(
                s.iter()
                    .map(|q| q.iter().map(|r| self.apply_vec(r)).collect())
                    .collect(),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelParams {
    Svm(SvmParams),
    Mlp(MlpParams),
    Gru(GruParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub family: Family,
    pub hyperparams: Hyperparams,
    pub input_dim: usize,
    pub task: TaskKind,
    pub standardizer: Option<Standardizer>,
    pub params: ModelParams,
    pub data_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitOptions {
    pub standardize: bool,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            standardize: true,
            seed: 0,
        }
    }
}

/// Fits one model. Inputs are standardized first unless disabled.
pub fn fit(family: Family, hp: &Hyperparams, x: &Inputs, labels: &[Label], opts: &FitOptions) -> Result<TrainedModel> {
    hp.validate()?;
    x.validate()?;
    if x.len() != labels.len() {
        return Err(Error::InvalidInput(format!("{} inputs for {} labels", x.len(), labels.len())));
    }
    if x.len() < 2 {
        return Err(Error::InvalidInput("need at least 2 training samples".into()));
    }
    let task = TaskKind::of(labels)?;
    let seed = hp.get("seed").map_or(opts.seed, |s| s as u64);
    let standardizer = opts.standardize.then(|| Standardizer::fit(x));
    let scaled;
    let xs = match &standardizer {
        Some(s) => {
            scaled = s.apply(x);
            &scaled
        }
        None => x,
    };
    let params = match (family, xs) {
        (Family::SvmLinear | Family::SvmRbf, Inputs::Vectors(v)) => {
            let kernel = match family {
                Family::SvmLinear => Kernel::Linear,
                _ => Kernel::Rbf {
                    gamma: hp.require("gamma")?,
                },
            };
            ModelParams::Svm(svm::svm_fit(v, labels, kernel, hp.require("C")?, hp.get_or("epsilon", 0.1))?)
        }
        (Family::Mlp, Inputs::Vectors(v)) => ModelParams::Mlp(mlp::mlp_fit(v, labels, task, hp, seed)?),
        (Family::Gru, Inputs::Sequences(s)) => ModelParams::Gru(gru::gru_fit(s, labels, task, hp, seed)?),
        (f, _) => {
            return Err(Error::InvalidInput(format!(
                "{} expects {}",
                f.id(),
                if f.needs_sequences() { "sequences" } else { "vectors" }
            )))
        }
    };
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        family,
        hyperparams: hp.clone(),
        input_dim: x.dim(),
        task,
        standardizer,
        params,
        data_hash: x.content_hash(labels),
        seed,
    })
}

impl TrainedModel {
    fn prepare(&self, x: InputRef<'_>) -> Result<Prepared> {
        let bad = |got: usize| {
            Err(Error::InvalidInput(format!(
                "{} model expects dimension {}, got {got}",
                self.family.id(),
                self.input_dim
            )))
        };
        let scale = |v: &[f64]| match &self.standardizer {
            Some(s) => s.apply_vec(v),
            None => v.to_vec(),
        };
        match x {
            InputRef::Vector(v) => {
                if self.family.needs_sequences() {
                    return Err(Error::InvalidInput("recurrent model expects a sequence".into()));
                }
                if v.len() != self.input_dim {
                    return bad(v.len());
                }
                if !v.iter().all(|x| x.is_finite()) {
                    return Err(Error::InvalidData("non-finite feature value".into()));
                }
                Ok(Prepared::Vector(scale(v)))
            }
            InputRef::Sequence(s) => {
                if !self.family.needs_sequences() {
                    return Err(Error::InvalidInput(format!("{} model expects a vector", self.family.id())));
                }
                if let Some(r) = s.iter().find(|r| r.len() != self.input_dim) {
                    return bad(r.len());
                }
                if s.len() < gru::MIN_STEPS {
                    return Err(Error::InvalidInput("sequence shorter than 2 steps".into()));
                }
                Ok(Prepared::Sequence(s.iter().map(|r| scale(r)).collect()))
            }
        }
    }

    /// Regression value or per-class scores (argmax gives the class).
    pub fn raw_output(&self, x: InputRef<'_>) -> Result<Vec<f64>> {
        let p = self.prepare(x)?;
        Ok(match (&self.params, &p) {
            (ModelParams::Svm(s), Prepared::Vector(v)) => s.decision(v),
            (ModelParams::Mlp(m), Prepared::Vector(v)) => m.output(v),
            (ModelParams::Gru(g), Prepared::Sequence(q)) => g.output(q),
            _ => unreachable!("prepare checks input shape"),
        })
    }

    pub fn predict(&self, x: InputRef<'_>) -> Result<Label> {
        let out = self.raw_output(x)?;
        Ok(match self.task {
            TaskKind::Regression => Label::Regression { position_cm: out[0] },
            TaskKind::Classification { class_count } => Label::Class {
                id: argmax(&out),
                class_count,
            },
        })
    }

    pub fn predict_batch(&self, x: &Inputs) -> Result<Vec<Label>> {
        (0..x.len()).map(|i| self.predict(x.get(i))).collect()
    }

    /// Solver diagnostics for support-vector models.
    pub fn solver_reports(&self) -> &[SolverReport] {
        match &self.params {
            ModelParams::Svm(s) => &s.reports,
            _ => &[],
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: TrainedModel = serde_json::from_str(s)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidInput(format!(
                "model format version {} not supported (expected {MODEL_FORMAT_VERSION})",
                m.format_version
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

enum Prepared {
    Vector(Vec<f64>),
    Sequence(Vec<Vec<f64>>),
}

pub fn predict(m: &TrainedModel, x: InputRef<'_>) -> Result<Label> {
    m.predict(x)
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Class ids of classification labels.
pub(crate) fn class_ids(labels: &[Label]) -> Vec<usize> {
    labels.iter().map(|l| l.value() as usize).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hyperparams_validate_ranges() {
        assert!(Hyperparams::new().with("C", 1.0).with("gamma", 0.1).validate().is_ok());
        assert!(Hyperparams::new().with("C", 0.0).validate().is_err());
        assert!(Hyperparams::new().with("epsilon", -0.1).validate().is_err());
        assert!(Hyperparams::new().with("epochs", 0.0).validate().is_err());
        assert!(Hyperparams::new().with("bogus", 1.0).validate().is_err());
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn standardizer_zero_mean_unit_std() {
        let x = Inputs::Vectors(vec![vec![1.0, 5.0], vec![3.0, 5.0], vec![5.0, 5.0]]);
        let s = Standardizer::fit(&x);
        let Inputs::Vectors(z) = s.apply(&x) else { unreachable!() };
        let m: f64 = z.iter().map(|r| r[0]).sum::<f64>() / 3.0;
        let v: f64 = z.iter().map(|r| r[0] * r[0]).sum::<f64>() / 3.0;
        assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-12);
        assert!(z.iter().all(|r| r[1] == 0.0));
    }

    #[test]
    fn family_ids_parse_back() {
        for f in [Family::SvmLinear, Family::SvmRbf, Family::Mlp, Family::Gru] {
            assert_eq!(Family::parse(f.id()).unwrap(), f);
        }
        assert_eq!(Family::parse("svr-rbf").unwrap(), Family::SvmRbf);
        assert!(Family::parse("cnn").is_err());
    }
}
