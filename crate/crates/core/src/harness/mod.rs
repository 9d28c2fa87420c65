//! Evaluation protocol: K repeats of a seeded 90/10 split, 4-fold grid
//! search on the training part, refit and test. Sampling-rate sweeps,
//! taxel ablations and report files build on it.

pub mod config;
mod guard;
mod protocol;
mod report;
mod spec;
mod sweep;

pub use guard::{Access, AccessLog, AccessObserver, Stage};
pub use protocol::{
    mean_std, repeat_seed, run_protocol, run_protocol_with, split_indices, ProtocolReport, RepeatFailure,
    RepeatRecord, RunOptions,
};
pub use report::{emit_report, render_plot_data, render_series_table, render_table, ReportFormat, RunDir};
pub use spec::{
    default_bin_ms, default_k, grid_to_string, parse_grid, ProtocolSpec, DEFAULT_CV_FOLDS, DEFAULT_EST_WIDTH_MS,
    DEFAULT_TRAIN_FRACTION,
};
pub use sweep::{ablate_taxels, native_rate, resample_dataset, sweep_sampling_rate, Series, SeriesPoint, TaxelGroup};
