use std::collections::BTreeSet;
use std::sync::OnceLock;

use proptest::prelude::*;
use sha2::{Digest, Sha256};

use vibrotactile::features::FeatureSpec;
use vibrotactile::harness::{
    ablate_taxels, emit_report, render_plot_data, render_series_table, render_table, repeat_seed, run_protocol,
    run_protocol_with, split_indices, sweep_sampling_rate, ProtocolReport, ProtocolSpec, ReportFormat, RunDir,
    RunOptions, Series, TaxelGroup,
};
use vibrotactile::learn::{Family, Hyperparams};
use vibrotactile::model::{Dataset, TaskId};
use vibrotactile::simulate::{generate_tap_dataset, SignalVariant, TapDatasetConfig};
use vibrotactile::Error;

fn data() -> &'static Dataset {
    static D: OnceLock<Dataset> = OnceLock::new();
    D.get_or_init(|| generate_tap_dataset(&TapDatasetConfig::rod(20.0, SignalVariant::Spikes, 30, 21).unwrap()).unwrap())
}

fn spec() -> ProtocolSpec {
    let grid = vec![Hyperparams::new().with("C", 10.0).with("gamma", 0.001).with("epsilon", 0.1)];
    ProtocolSpec::new(TaskId::TapLocalization, FeatureSpec::fft(5.0), Family::SvmRbf)
        .with_k(3)
        .with_seed(9)
        .with_grid(grid)
}

#[test]
fn summary_matches_scores() {
    let r = run_protocol(&spec(), data()).unwrap();
    assert_eq!(r.scores.len(), 3);
    let n = r.scores.len() as f64;
    let mean = r.scores.iter().sum::<f64>() / n;
    let var = r.scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    assert!((r.mean - mean).abs() < 1e-12);
    assert!((r.std - var.sqrt()).abs() < 1e-12);
    for (i, rec) in r.repeats.iter().enumerate() {
        assert_eq!(rec.index, i);
        assert_eq!(rec.score, r.scores[i]);
        assert_eq!(rec.train_size + rec.test_size, 30);
        assert_eq!(rec.test_size, 3);
    }
    assert!(r.confusion.is_none());
}

#[test]
fn repeat_seed_is_sha256_prefix() {
    let d = Sha256::digest(b"9:2:1:abc");
    let expect = u64::from_le_bytes(d[..8].try_into().unwrap());
    assert_eq!(repeat_seed(9, 2, 1, "abc"), expect);
}

proptest! {
    #[test]
    fn split_partitions_indices(n in 2usize..300, frac in 0.05f64..0.95, seed: u64) {
        let (train, test) = split_indices(n, frac, seed).unwrap();
        let expect_train = ((n as f64 * frac).round() as usize).clamp(1, n - 1);
        prop_assert_eq!(train.len(), expect_train);
        prop_assert!(train.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(test.windows(2).all(|w| w[0] < w[1]));
        let all: BTreeSet<usize> = train.iter().chain(&test).copied().collect();
        prop_assert_eq!(all.len(), n);
        prop_assert_eq!(all.into_iter().collect::<Vec<_>>(), (0..n).collect::<Vec<_>>());
        prop_assert_eq!(split_indices(n, frac, seed).unwrap(), (train, test));
    }
}

#[test]
fn report_json_round_trips() {
    let r = run_protocol(&spec(), data()).unwrap();
    let back = ProtocolReport::from_json(&r.to_json().unwrap()).unwrap();
    assert_eq!(back.to_json().unwrap(), r.to_json().unwrap());
}

#[test]
fn native_rate_sweep_point_equals_plain_run() {
    let plain = run_protocol(&spec(), data()).unwrap();
    let s = sweep_sampling_rate(&spec(), data(), &[500.0, 4000.0]).unwrap();
    assert_eq!(s.axis, "rate_hz");
    assert_eq!(s.points.len(), 2);
    assert_eq!(s.points[1].report.scores, plain.scores);
    let plot = render_plot_data(&s);
    assert_eq!(plot.lines().filter(|l| !l.starts_with('#')).count(), 3);
    let table = render_series_table(&s);
    assert!(table.starts_with("rate_hz,metric,method,fft\n"));
    assert_eq!(table.lines().count(), 3);
}

#[test]
fn all_taxel_group_equals_plain_run() {
    let plain = run_protocol(&spec(), data()).unwrap();
    let groups = TaxelGroup::preset("all", 80).unwrap();
    let s = ablate_taxels(&spec(), data(), &groups).unwrap();
    assert_eq!(s.points[0].x, "all-80");
    assert_eq!(s.points[0].report.scores, plain.scores);
}

#[test]
fn bad_taxel_group_rejected() {
    let groups = vec![TaxelGroup::range("outside", 70..90)];
    assert!(ablate_taxels(&spec(), data(), &groups).is_err());
}

#[test]
fn single_report_table_has_one_row() {
    let r = run_protocol(&spec(), data()).unwrap();
    let t = render_table([&r]);
    let lines: Vec<&str> = t.lines().collect();
    assert_eq!(lines, ["metric,method,fft", &format!("mae_cm,svm-rbf,{:.6}±{:.6}", r.mean, r.std)]);
}

#[test]
fn emission_is_reproducible() {
    let root = tempfile::tempdir().unwrap();
    let run = RunDir::create(root.path(), "a").unwrap();
    let series = Series::single(spec().label(), run_protocol(&spec(), data()).unwrap());
    let first = emit_report(&series, ReportFormat::Table, &run.reports_dir()).unwrap();
    let bytes: Vec<Vec<u8>> = first.iter().map(|p| std::fs::read(p).unwrap()).collect();
    let second = emit_report(&series, ReportFormat::Table, &run.reports_dir()).unwrap();
    assert_eq!(first, second);
    for (p, b) in second.iter().zip(&bytes) {
        assert_eq!(&std::fs::read(p).unwrap(), b);
    }
    let names: Vec<String> = first.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names[..2], ["table.csv", "series.json"]);
    assert!(names[2].starts_with("report-000-"));
    assert!(RunDir::create(root.path(), "../x").is_err());
}

#[test]
fn fixed_hyperparams_must_cover_every_repeat() {
    let opts = RunOptions {
        fixed_hyperparams: Some(vec![Hyperparams::new().with("C", 1.0).with("gamma", 0.1)]),
        ..RunOptions::default()
    };
    match run_protocol_with(&spec(), data(), &opts) {
        Err(Error::Protocol(_)) => {}
        other => panic!("expected protocol error, got {other:?}"),
    }
}

#[test]
fn task_mismatch_rejected() {
    let s = ProtocolSpec::new(TaskId::FoodId, FeatureSpec::fft(50.0), Family::SvmRbf).with_k(1);
    assert!(run_protocol(&s, data()).is_err());
}

#[test]
fn feature_cache_does_not_change_scores() {
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions {
        cache_dir: Some(dir.path().to_path_buf()),
        ..RunOptions::default()
    };
    let plain = run_protocol(&spec(), data()).unwrap();
    let cold = run_protocol_with(&spec(), data(), &opts).unwrap();
    let warm = run_protocol_with(&spec(), data(), &opts).unwrap();
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    assert_eq!(cold.to_json().unwrap(), plain.to_json().unwrap());
    assert_eq!(warm.to_json().unwrap(), plain.to_json().unwrap());
}
