use std::path::PathBuf;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::guard::{AccessObserver, Partition, Stage};
use super::spec::ProtocolSpec;
use crate::error::{Error, Result};
use crate::features::cache::{read_cache, write_cache, CacheKey};
use crate::features::Extractor;
use crate::learn::{self, default_grid, grid_search_cv, FitOptions, Hyperparams, Inputs, Scorer, TaskKind};
use crate::model::{Dataset, Label, Provenance};

const CV_SALT: u64 = 0x6376_5f66_6f6c_6473;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatRecord {
    pub index: usize,
    pub seed: u64,
    /// 1, or 2 after a re-seed.
    pub attempts: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub hyperparams: Hyperparams,
    /// Mean validation score of the chosen grid point, when a search ran.
    pub cv_score: Option<f64>,
    pub score: f64,
    pub confusion: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatFailure {
    pub index: usize,
    pub attempt: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub spec: ProtocolSpec,
    pub dataset_hash: String,
    pub dataset_size: usize,
    pub provenance: Provenance,
    pub metric: Scorer,
    pub scores: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    /// Rows are true classes, summed over repeats.
    pub confusion: Option<Vec<Vec<usize>>>,
    pub repeats: Vec<RepeatRecord>,
    pub failures: Vec<RepeatFailure>,
    pub version: String,
}

impl ProtocolReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Mean and population standard deviation.
pub fn mean_std(scores: &[f64]) -> (f64, f64) {
    if scores.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Seed of repeat `index`, a pure function of its arguments.
pub fn repeat_seed(master: u64, index: usize, attempt: usize, dataset_hash: &str) -> u64 {
    let d = Sha256::digest(format!("{master}:{index}:{attempt}:{dataset_hash}").as_bytes());
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Random `train_fraction` / remainder split of `0..n`, both sorted.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::Protocol(format!("cannot split {n} recordings")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

#[derive(Default)]
pub struct RunOptions<'a> {
    pub observer: Option<&'a dyn AccessObserver>,
    /// Per-repeat hyperparameters used instead of a grid search.
    pub fixed_hyperparams: Option<Vec<Hyperparams>>,
    /// Directory for feature caches of data-independent extractors.
    pub cache_dir: Option<PathBuf>,
}

pub fn run_protocol(spec: &ProtocolSpec, data: &Dataset) -> Result<ProtocolReport> {
    run_protocol_with(spec, data, &RunOptions::default())
}

#[derive(Debug, Clone)]
enum Row {
    Vector(Vec<f64>),
    Sequence(Vec<Vec<f64>>),
}

/// Lazily computed rows of a data-independent extractor, shared by repeats.
struct Memo {
    cells: Vec<OnceLock<Row>>,
}

struct Ctx<'a> {
    spec: &'a ProtocolSpec,
    data: &'a Dataset,
    hash: String,
    task: TaskKind,
    fixed: Option<(Extractor, Memo)>,
    opts: &'a RunOptions<'a>,
}

struct Outcome {
    record: RepeatRecord,
    failures: Vec<RepeatFailure>,
}

pub fn run_protocol_with(spec: &ProtocolSpec, data: &Dataset, opts: &RunOptions<'_>) -> Result<ProtocolReport> {
    spec.validate()?;
    if spec.task != data.task() {
        return Err(Error::Protocol(format!(
            "protocol is for task {} but the dataset holds {}",
            spec.task,
            data.task()
        )));
    }
    if let Some(f) = &opts.fixed_hyperparams {
        if f.len() != spec.k {
            return Err(Error::Protocol(format!("{} fixed hyperparameter sets for K = {}", f.len(), spec.k)));
        }
    }
    let n = data.len();
    let n_train = ((n as f64 * spec.train_fraction).round() as usize).clamp(1, n.max(2) - 1);
    if n < 2 || n_train < 2 * spec.cv_folds || n - n_train == 0 {
        return Err(Error::Protocol(format!(
            "{n} recordings are too few for a {}/{} split with {}-fold cross-validation",
            spec.train_fraction,
            1.0 - spec.train_fraction,
            spec.cv_folds
        )));
    }
    let labels: Vec<Label> = data.recordings().iter().map(|r| r.label).collect();
    let task = TaskKind::of(&labels)?;
    let fixed = if spec.feature.is_learned() {
        None
    } else {
        let cells = (0..n).map(|_| OnceLock::new()).collect();
        Some((Extractor::fixed(spec.feature.clone())?, Memo { cells }))
    };
    let ctx = Ctx {
        spec,
        data,
        hash: data.content_hash(),
        task,
        fixed,
        opts,
    };
    let cache = ctx.cache_key().zip(opts.cache_dir.as_ref());
    if let Some((key, dir)) = &cache {
        ctx.load_cache(&dir.join(key.file_name()), key)?;
    }

    let outcomes: Vec<Result<Outcome>> = (0..spec.k).into_par_iter().map(|i| ctx.repeat(i)).collect();
    let mut repeats = Vec::with_capacity(spec.k);
    let mut failures = Vec::new();
    for o in outcomes {
        let o = o?;
        failures.extend(o.failures);
        repeats.push(o.record);
    }
    if let Some((key, dir)) = &cache {
        ctx.store_cache(&dir.join(key.file_name()), key)?;
    }

    let scores: Vec<f64> = repeats.iter().map(|r| r.score).collect();
    let (mean, std) = mean_std(&scores);
    let confusion = match task {
        TaskKind::Classification { class_count } => {
            let mut total = vec![vec![0usize; class_count]; class_count];
            for r in &repeats {
                for (row, add) in total.iter_mut().zip(r.confusion.as_ref().expect("classification repeat")) {
                    for (a, b) in row.iter_mut().zip(add) {
                        *a += b;
                    }
                }
            }
            Some(total)
        }
        TaskKind::Regression => None,
    };
    Ok(ProtocolReport {
        spec: spec.clone(),
        dataset_hash: ctx.hash.clone(),
        dataset_size: n,
        provenance: data.provenance(),
        metric: Scorer::for_task(task),
        scores,
        mean,
        std,
        confusion,
        repeats,
        failures,
        version: env!("CARGO_PKG_VERSION").to_string(),
    })
}

fn retryable(e: &Error) -> bool {
    matches!(
        e,
        Error::Convergence { .. } | Error::Divergence { .. } | Error::Stratification(_)
    )
}

impl Ctx<'_> {
    fn repeat(&self, index: usize) -> Result<Outcome> {
        let mut failures = Vec::new();
        for attempt in 0..2 {
            let seed = repeat_seed(self.spec.seed, index, attempt, &self.hash);
            match self.attempt(index, attempt, seed) {
                Ok(record) => return Ok(Outcome { record, failures }),
                Err(e) if retryable(&e) => failures.push(RepeatFailure {
                    index,
                    attempt,
                    seed,
                    error: e.to_string(),
                }),
                Err(e) => return Err(e),
            }
        }
        Err(Error::Protocol(format!(
            "repeat {index} failed after a re-seed: {}",
            failures.last().map_or("", |f| f.error.as_str())
        )))
    }

    fn attempt(&self, index: usize, attempt: usize, seed: u64) -> Result<RepeatRecord> {
        let spec = self.spec;
        let (train, test) = split_indices(self.data.len(), spec.train_fraction, seed)?;
        let part = Partition::new(index, attempt, train, test, self.opts.observer);
        let recs = self.data.recordings();

        let fitted;
        let extractor = match &self.fixed {
            Some((e, _)) => e,
            None => {
                part.touch(Stage::ExtractorFit, part.train())?;
                let rows: Vec<_> = part.train().iter().map(|&i| &recs[i]).collect();
                fitted = spec.feature.fit(&rows, seed)?;
                &fitted
            }
        };

        part.touch(Stage::Featurize, part.train())?;
        let x = self.inputs(extractor, part.train())?;
        let y: Vec<Label> = part.train().iter().map(|&i| recs[i].label).collect();
        let fit_opts = FitOptions {
            standardize: spec.standardize,
            seed,
        };

        let (hp, cv_score) = match &self.opts.fixed_hyperparams {
            Some(f) => (f[index].clone(), None),
            None => {
                let grid = if spec.grid.is_empty() {
                    default_grid(spec.family, self.task, x.dim())
                } else {
                    spec.grid.clone()
                };
                if grid.len() == 1 {
                    (grid[0].clone(), None)
                } else {
                    part.touch(Stage::GridSearch, part.train())?;
                    let cv = grid_search_cv(&x, &y, spec.family, &grid, spec.cv_folds, seed ^ CV_SALT, &fit_opts)?;
                    (cv.best, Some(cv.mean_scores[cv.best_index]))
                }
            }
        };

        part.touch(Stage::Refit, part.train())?;
        let model = learn::fit(spec.family, &hp, &x, &y, &fit_opts)?;

        let test = part.open_test()?;
        let xt = self.inputs(extractor, test)?;
        let truth: Vec<Label> = test.iter().map(|&i| recs[i].label).collect();
        let pred = model.predict_batch(&xt)?;
        let scorer = Scorer::for_task(self.task);
        let confusion = match self.task {
            TaskKind::Classification { class_count } => {
                let mut m = vec![vec![0usize; class_count]; class_count];
                for (p, t) in pred.iter().zip(&truth) {
                    m[t.value() as usize][p.value() as usize] += 1;
                }
                Some(m)
            }
            TaskKind::Regression => None,
        };
        Ok(RepeatRecord {
            index,
            seed,
            attempts: attempt + 1,
            train_size: part.train().len(),
            test_size: test.len(),
            hyperparams: hp,
            cv_score,
            score: scorer.score(&pred, &truth),
            confusion,
        })
    }

    fn row(&self, extractor: &Extractor, i: usize) -> Result<Row> {
        let rec = &self.data.recordings()[i];
        if self.spec.family.needs_sequences() {
            Ok(Row::Sequence(extractor.sequence(rec)?.steps().to_vec()))
        } else {
            Ok(Row::Vector(extractor.vector(rec)?.into_values()))
        }
    }

    fn inputs(&self, extractor: &Extractor, idx: &[usize]) -> Result<Inputs> {
        let rows: Vec<Row> = match &self.fixed {
            Some((e, memo)) => idx
                .iter()
                .map(|&i| {
                    if let Some(r) = memo.cells[i].get() {
                        return Ok(r.clone());
                    }
                    let r = self.row(e, i)?;
                    Ok(memo.cells[i].get_or_init(|| r).clone())
                })
                .collect::<Result<_>>()?,
            None => idx.iter().map(|&i| self.row(extractor, i)).collect::<Result<_>>()?,
        };
        Ok(if self.spec.family.needs_sequences() {
            Inputs::Sequences(
                rows.into_iter()
                    .map(|r| match r {
                        Row::Sequence(s) => s,
                        Row::Vector(_) => unreachable!("sequence family"),
                    })
                    .collect(),
            )
        } else {
            Inputs::Vectors(
                rows.into_iter()
                    .map(|r| match r {
                        Row::Vector(v) => v,
                        Row::Sequence(_) => unreachable!("vector family"),
                    })
                    .collect(),
            )
        })
    }

    fn cache_key(&self) -> Option<CacheKey> {
        (self.fixed.is_some() && !self.spec.family.needs_sequences()).then(|| CacheKey {
            extractor: self.spec.feature.family().to_string(),
            params: self.spec.feature.param_hash(),
            source: self.hash.clone(),
        })
    }

    fn load_cache(&self, path: &std::path::Path, key: &CacheKey) -> Result<()> {
        let (Some((_, memo)), Some(rows)) = (&self.fixed, read_cache(path, key)?) else {
            return Ok(());
        };
        for (id, v) in rows {
            let i: usize = id
                .parse()
                .ok()
                .filter(|&i| i < memo.cells.len())
                .ok_or_else(|| Error::InvalidData(format!("{}: bad row id `{id}`", path.display())))?;
            let _ = memo.cells[i].set(Row::Vector(v));
        }
        Ok(())
    }

    fn store_cache(&self, path: &std::path::Path, key: &CacheKey) -> Result<()> {
        let Some((_, memo)) = &self.fixed else {
            return Ok(());
        };
        let rows: Vec<(String, Vec<f64>)> = memo
            .cells
            .iter()
            .enumerate()
            .filter_map(|(i, c)| match c.get() {
                Some(Row::Vector(v)) => Some((i.to_string(), v.clone())),
                _ => None,
            })
            .collect();
        if rows.is_empty() {
            return Ok(());
        }
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        write_cache(path, key, &rows)
    }
}
