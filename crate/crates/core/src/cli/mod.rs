//! Command-line driver: `simulate | import | featurize | run | sweep | ablate | report`.
//!
//! Every command resolves a flat key-value config from defaults, an
//! optional `--config` file and flags (in rising precedence), rejects
//! unknown keys and, for protocol commands, echoes the result into the run
//! directory.

pub mod import;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::features::cache::{write_cache, CacheKey};
use crate::harness::config::{kv_to_string, parse_kv, KvMap, KvReader};
use crate::harness::{
    ablate_taxels, emit_report, run_protocol_with, sweep_sampling_rate, ProtocolSpec, ReportFormat, RunDir,
    RunOptions, Series, TaxelGroup,
};
use crate::model::io::{read_dataset, write_dataset, MANIFEST_NAME};
use crate::model::{Dataset, Payload};
use crate::simulate::{
    generate_surrogate_dataset, generate_tap_dataset, SignalVariant, SurrogateConfig, TapDatasetConfig,
};

/// Environment variable naming the directory that holds run directories.
pub const RUNS_ENV: &str = "VIBROTACTILE_RUNS";
pub const DEFAULT_RUNS_ROOT: &str = "runs";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_PROTOCOL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "vibrotactile", version, about = "Vibro-tactile datasets, features and evaluation protocol")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset (rod taps or class surrogates).
    Simulate(SimulateArgs),
    /// Convert an external dataset into the canonical formats.
    Import(ImportArgs),
    /// Compute features for every recording into a cache file.
    Featurize(FeaturizeArgs),
    /// Run the evaluation protocol once.
    Run(RunArgs),
    /// Run the protocol at several simulated sampling rates.
    Sweep(SweepArgs),
    /// Run the protocol on taxel subsets.
    Ablate(AblateArgs),
    /// Re-emit the reports of an existing run.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Key-value config file (`key = value` lines); flags override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Any config key, e.g. `--set feature.bin_ms=10` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// rod20, rod30, rod50, food or grasp.
    #[arg(long)]
    preset: Option<String>,
    /// Taps for rod presets, recordings per class for surrogates.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// spikes or analog (rod presets only).
    #[arg(long)]
    variant: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Debug, Args)]
struct ImportArgs {
    /// Source directory.
    #[arg(long)]
    source: Option<PathBuf>,
    /// Adapter id.
    #[arg(long)]
    adapter: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Debug, Args)]
struct ProtocolArgs {
    /// Dataset manifest.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Run directory name under the runs root.
    #[arg(long)]
    name: Option<String>,
    /// tap, grasp or food.
    #[arg(long)]
    task: Option<String>,
    /// baseline, fft, autoencoder, est or est-learned.
    #[arg(long)]
    feature: Option<String>,
    /// svm-linear, svm-rbf, svr-linear, svr-rbf, mlp or gru.
    #[arg(long)]
    model: Option<String>,
    /// Repeat count K.
    #[arg(long)]
    k: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Debug, Args)]
struct FeaturizeArgs {
    /// Output cache file.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    protocol: ProtocolArgs,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    protocol: ProtocolArgs,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Comma-separated rates in Hz.
    #[arg(long)]
    rates: Option<String>,
    #[command(flatten)]
    protocol: ProtocolArgs,
}

#[derive(Debug, Args)]
struct AblateArgs {
    /// Comma-separated presets: all, left-40, right-40, single-taxel.
    #[arg(long)]
    groups: Option<String>,
    #[command(flatten)]
    protocol: ProtocolArgs,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Run directory name under the runs root.
    #[arg(long)]
    name: Option<String>,
    /// table or plot-data.
    #[arg(long)]
    format: Option<String>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

/// Exit code for an error kind.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Usage(_)
        | Error::Config { .. }
        | Error::InvalidParameter(_)
        | Error::InvalidSelection(_)
        | Error::InvalidRate(_)
        | Error::InvalidSampler(_)
        | Error::Aliasing { .. } => EXIT_USAGE,
        Error::Protocol(_)
        | Error::Convergence { .. }
        | Error::Divergence { .. }
        | Error::Stratification(_)
        | Error::RootSolver { .. } => EXIT_PROTOCOL,
        Error::InvalidWindow(_)
        | Error::InvalidData(_)
        | Error::InvalidInput(_)
        | Error::Adapter(_)
        | Error::Parse { .. }
        | Error::Io { .. }
        | Error::Serde(_) => EXIT_DATA,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to stderr.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command) -> Result<Vec<String>> {
    match cmd {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Import(a) => cmd_import(a),
        Command::Featurize(a) => cmd_featurize(a),
        Command::Run(a) => cmd_protocol(Mode::Run, a.protocol, KvMap::new()),
        Command::Sweep(a) => {
            let mut extra = KvMap::new();
            put_opt(&mut extra, "sweep.rates", a.rates);
            cmd_protocol(Mode::Sweep, a.protocol, extra)
        }
        Command::Ablate(a) => {
            let mut extra = KvMap::new();
            put_opt(&mut extra, "ablate.groups", a.groups);
            cmd_protocol(Mode::Ablate, a.protocol, extra)
        }
        Command::Report(a) => cmd_report(a),
    }
}

fn put_opt<T: ToString>(m: &mut KvMap, key: &str, v: Option<T>) {
    if let Some(v) = v {
        m.insert(key.to_string(), v.to_string());
    }
}

fn path_string(p: PathBuf) -> String {
    p.display().to_string()
}

/// Config file entries overlaid with `--set` entries and then `flags`.
fn resolve(cfg: &ConfigArgs, flags: KvMap) -> Result<KvMap> {
    let mut m = match &cfg.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            parse_kv(&text, &p.display().to_string())?
        }
        None => KvMap::new(),
    };
    for s in &cfg.set {
        let (k, v) = s.split_once('=').ok_or_else(|| Error::Config {
            key: s.clone(),
            reason: "--set expects KEY=VALUE".into(),
        })?;
        m.insert(k.trim().to_string(), v.trim().to_string());
    }
    m.extend(flags);
    Ok(m)
}

fn required(r: &mut KvReader, key: &str) -> Result<String> {
    r.take_str(key).ok_or_else(|| Error::Config {
        key: key.to_string(),
        reason: "required".into(),
    })
}

pub fn runs_root() -> PathBuf {
    std::env::var_os(RUNS_ENV).map_or_else(|| PathBuf::from(DEFAULT_RUNS_ROOT), PathBuf::from)
}

fn cmd_simulate(a: SimulateArgs) -> Result<Vec<String>> {
    let mut flags = KvMap::new();
    put_opt(&mut flags, "simulate.preset", a.preset);
    put_opt(&mut flags, "simulate.n", a.n);
    put_opt(&mut flags, "simulate.seed", a.seed);
    put_opt(&mut flags, "simulate.variant", a.variant);
    put_opt(&mut flags, "simulate.out", a.out.map(path_string));
    let resolved = resolve(&a.cfg, flags)?;
    let mut r = KvReader::new(resolved.clone());
    let preset = r.take_str("simulate.preset").unwrap_or_else(|| "rod20".into());
    let seed: u64 = r.take_or("simulate.seed", 0)?;
    let out = PathBuf::from(required(&mut r, "simulate.out")?);
    let data = match preset.as_str() {
        "rod20" | "rod30" | "rod50" => {
            let length_cm: f64 = preset[3..].parse().expect("preset length");
            let variant = match r.take_str("simulate.variant").as_deref() {
                None | Some("spikes") => SignalVariant::Spikes,
                Some("analog") => SignalVariant::Analog,
                Some(o) => {
                    return Err(Error::Config {
                        key: "simulate.variant".into(),
                        reason: format!("expected spikes or analog, got `{o}`"),
                    })
                }
            };
            let n: usize = r.take_or("simulate.n", 1000)?;
            let mut c = TapDatasetConfig::rod(length_cm, variant, n, seed)?;
            if let Some(j) = r.take("tap.impulse_jitter")? {
                c.impulse_jitter = j;
            }
            if let Some(d) = r.take::<f64>("beam.damping")? {
                c.beam.modal_damping = vec![d];
            }
            if let Some(d) = r.take("encoder.delta")? {
                c.encoder.delta_threshold = d;
            }
            r.finish()?;
            c.beam.validate().map_err(|e| Error::Config {
                key: "beam.damping".into(),
                reason: e.to_string(),
            })?;
            generate_tap_dataset(&c)?
        }
        "food" | "grasp" => {
            let mut c = if preset == "food" {
                SurrogateConfig::food(seed)
            } else {
                SurrogateConfig::grasp(seed)
            };
            c.per_class = r.take_or("simulate.n", c.per_class)?;
            r.finish()?;
            generate_surrogate_dataset(&c)?
        }
        o => {
            return Err(Error::Config {
                key: "simulate.preset".into(),
                reason: format!("unknown preset `{o}` (rod20, rod30, rod50, food, grasp)"),
            })
        }
    };
    let manifest = write_dataset(&out, &data)?;
    Ok(vec![format!(
        "wrote {} recordings ({}, {}) to {}",
        data.len(),
        data.task(),
        data.provenance().as_str(),
        manifest.display()
    )])
}

fn cmd_import(a: ImportArgs) -> Result<Vec<String>> {
    let mut flags = KvMap::new();
    put_opt(&mut flags, "import.source", a.source.map(path_string));
    put_opt(&mut flags, "import.adapter", a.adapter);
    put_opt(&mut flags, "import.out", a.out.map(path_string));
    let mut r = KvReader::new(resolve(&a.cfg, flags)?);
    let source = PathBuf::from(required(&mut r, "import.source")?);
    let adapter_id = r.take_str("import.adapter").unwrap_or_else(|| "canonical".into());
    let out = PathBuf::from(required(&mut r, "import.out")?);
    r.finish()?;
    let adapter = import::adapter(&adapter_id)?;
    let imported = adapter.import(&source)?;
    let manifest = write_dataset(&out, &imported.dataset)?;
    let log = out.join(import::IMPORT_LOG);
    fs::write(&log, import::import_log(&imported)).map_err(|e| Error::io(&log, e))?;
    Ok(vec![format!(
        "imported {} recordings, skipped {}; manifest {}",
        imported.dataset.len(),
        imported.skipped.len(),
        manifest.display()
    )])
}

/// Flags shared by the protocol commands, as config keys.
fn protocol_flags(p: &ProtocolArgs) -> KvMap {
    let mut m = KvMap::new();
    put_opt(&mut m, "data", p.data.clone().map(path_string));
    put_opt(&mut m, "name", p.name.clone());
    put_opt(&mut m, "task", p.task.clone());
    put_opt(&mut m, "feature.kind", p.feature.clone());
    put_opt(&mut m, "model.family", p.model.clone());
    put_opt(&mut m, "protocol.k", p.k);
    put_opt(&mut m, "protocol.seed", p.seed);
    m
}

fn is_spec_key(k: &str) -> bool {
    k == "task" || ["feature.", "model.", "protocol."].iter().any(|p| k.starts_with(p))
}

/// Splits a resolved map into the protocol spec and the remaining keys.
fn split_spec(resolved: &KvMap) -> Result<(ProtocolSpec, KvReader)> {
    let (spec_kv, rest): (KvMap, KvMap) = resolved.clone().into_iter().partition(|(k, _)| is_spec_key(k));
    Ok((ProtocolSpec::from_kv(spec_kv)?, KvReader::new(rest)))
}

fn load_data(r: &mut KvReader) -> Result<(Dataset, PathBuf)> {
    let path = PathBuf::from(required(r, "data")?);
    let path = if path.is_dir() { path.join(MANIFEST_NAME) } else { path };
    let data = read_dataset(&path)?;
    let abs = fs::canonicalize(&path).map_err(|e| Error::io(&path, e))?;
    Ok((data, abs))
}

fn cmd_featurize(a: FeaturizeArgs) -> Result<Vec<String>> {
    let mut flags = protocol_flags(&a.protocol);
    put_opt(&mut flags, "featurize.out", a.out.map(path_string));
    let mut resolved = resolve(&a.protocol.cfg, flags)?;
    let (data, _) = load_data(&mut KvReader::new(resolved.clone()))?;
    resolved
        .entry("task".into())
        .or_insert_with(|| data.task().as_str().into());
    resolved.remove("data");
    let (spec, mut r) = split_spec(&resolved)?;
    let out = PathBuf::from(required(&mut r, "featurize.out")?);
    r.take_str("name");
    r.finish()?;
    check_task(&spec, &data)?;
    let recs: Vec<_> = data.recordings().iter().collect();
    // standalone featurization: learned extractors see the whole dataset
    let extractor = spec.feature.fit(&recs, spec.seed)?;
    let rows = recs
        .iter()
        .enumerate()
        .map(|(i, r)| Ok((i.to_string(), extractor.vector(r)?.into_values())))
        .collect::<Result<Vec<_>>>()?;
    let key = CacheKey {
        extractor: spec.feature.family().to_string(),
        params: spec.feature.param_hash(),
        source: data.content_hash(),
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_cache(&out, &key, &rows)?;
    Ok(vec![format!(
        "wrote {} feature vectors of dimension {} to {}",
        rows.len(),
        rows.first().map_or(0, |r| r.1.len()),
        out.display()
    )])
}

fn check_task(spec: &ProtocolSpec, data: &Dataset) -> Result<()> {
    if spec.task != data.task() {
        return Err(Error::Config {
            key: "task".into(),
            reason: format!("dataset holds {} recordings, config says {}", data.task(), spec.task),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Run,
    Sweep,
    Ablate,
}

fn parse_rates(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|r| {
            r.trim().parse::<f64>().map_err(|_| Error::Config {
                key: "sweep.rates".into(),
                reason: format!("`{r}` is not a rate"),
            })
        })
        .collect()
}

fn cmd_protocol(mode: Mode, p: ProtocolArgs, extra: KvMap) -> Result<Vec<String>> {
    let mut flags = protocol_flags(&p);
    flags.extend(extra);
    let mut resolved = resolve(&p.cfg, flags)?;
    let mut r = KvReader::new(resolved.clone());
    let (data, data_path) = load_data(&mut r)?;
    // the dataset decides the task unless configured explicitly
    resolved
        .entry("task".into())
        .or_insert_with(|| data.task().as_str().into());
    resolved.remove("data");
    let (spec, mut r) = split_spec(&resolved)?;
    check_task(&spec, &data)?;
    let name = r.take_str("name").unwrap_or_else(|| {
        format!(
            "{}-{}-{}",
            match mode {
                Mode::Run => "run",
                Mode::Sweep => "sweep",
                Mode::Ablate => "ablate",
            },
            spec.family.id(),
            spec.feature.family()
        )
    });
    let taxel_count = match &data.recordings()[0].payload {
        Payload::Spikes(t) => t.taxel_count(),
        Payload::Analog(_) => 1,
    };
    let rates = match mode {
        Mode::Sweep => Some(parse_rates(
            &r.take_str("sweep.rates").unwrap_or_else(|| "5,50,500,1000,2000,4000".into()),
        )?),
        _ => None,
    };
    let groups = match mode {
        Mode::Ablate => {
            let names = r.take_str("ablate.groups").unwrap_or_else(|| "all,left-40,right-40".into());
            let mut gs = Vec::new();
            for g in names.split(',') {
                gs.extend(TaxelGroup::preset(g.trim(), taxel_count).map_err(|e| Error::Config {
                    key: "ablate.groups".into(),
                    reason: e.to_string(),
                })?);
            }
            Some((names, gs))
        }
        _ => None,
    };
    r.finish()?;

    // resolved config, fully explicit
    resolved = spec.to_kv();
    resolved.insert("data".into(), data_path.display().to_string());
    resolved.insert("name".into(), name.clone());
    if let Some(rs) = &rates {
        let s: Vec<String> = rs.iter().map(f64::to_string).collect();
        resolved.insert("sweep.rates".into(), s.join(","));
    }
    if let Some((names, _)) = &groups {
        resolved.insert("ablate.groups".into(), names.clone());
    }
    let dir = RunDir::create(&runs_root(), &name)?;
    write_file(&dir.spec_dir().join("config.txt"), &kv_to_string(&resolved))?;
    write_file(&dir.spec_dir().join("protocol.txt"), &kv_to_string(&spec.to_kv()))?;

    let (series, format) = match mode {
        Mode::Run => {
            let opts = RunOptions {
                cache_dir: Some(dir.caches_dir()),
                ..RunOptions::default()
            };
            let rep = run_protocol_with(&spec, &data, &opts)?;
            (Series::single(spec.label(), rep), ReportFormat::Table)
        }
        Mode::Sweep => (
            sweep_sampling_rate(&spec, &data, rates.as_deref().expect("sweep rates"))?,
            ReportFormat::PlotData,
        ),
        Mode::Ablate => (
            ablate_taxels(&spec, &data, &groups.expect("ablate groups").1)?,
            ReportFormat::PlotData,
        ),
    };
    let files = emit_report(&series, format, &dir.reports_dir())?;
    let mut lines = vec![format!("run directory {}", dir.path().display())];
    lines.push(fs::read_to_string(&files[0]).map_err(|e| Error::io(&files[0], e))?.trim_end().to_string());
    Ok(lines)
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn cmd_report(a: ReportArgs) -> Result<Vec<String>> {
    let mut flags = KvMap::new();
    put_opt(&mut flags, "name", a.name);
    put_opt(&mut flags, "report.format", a.format);
    let mut r = KvReader::new(resolve(&a.cfg, flags)?);
    let name = required(&mut r, "name")?;
    let format = ReportFormat::parse(&r.take_str("report.format").unwrap_or_else(|| "table".into())).map_err(|e| {
        Error::Config {
            key: "report.format".into(),
            reason: e.to_string(),
        }
    })?;
    r.finish()?;
    let reports = runs_root().join(&name).join("reports");
    let path = reports.join("series.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let series: Series = serde_json::from_str(&text)?;
    let files = emit_report(&series, format, &reports)?;
    Ok(vec![fs::read_to_string(&files[0]).map_err(|e| Error::io(&files[0], e))?.trim_end().to_string()])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_error_kind() {
        assert_eq!(exit_code(&Error::Usage("x".into())), EXIT_USAGE);
        assert_eq!(exit_code(&Error::InvalidData("x".into())), EXIT_DATA);
        assert_eq!(exit_code(&Error::Protocol("x".into())), EXIT_PROTOCOL);
    }

    #[test]
    fn flags_override_file_and_set() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("c.txt");
        fs::write(&f, "protocol.k = 3\nprotocol.seed = 1\n").unwrap();
        let cfg = ConfigArgs {
            config: Some(f),
            set: vec!["protocol.seed=2".into(), "protocol.cv_folds=5".into()],
        };
        let mut flags = KvMap::new();
        flags.insert("protocol.k".into(), "7".into());
        let m = resolve(&cfg, flags).unwrap();
        assert_eq!(m["protocol.k"], "7");
        assert_eq!(m["protocol.seed"], "2");
        assert_eq!(m["protocol.cv_folds"], "5");
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        assert_eq!(run_cli(["vibrotactile", "run", "--bogus"]), EXIT_USAGE);
        assert_eq!(run_cli(["vibrotactile", "--help"]), EXIT_OK);
    }
}
