//! Experiment configuration, orchestration and result files.

mod config;
mod output;
mod rl;
mod run;

pub use config::{
    BenchSettings, ExperimentConfig, ExperimentKind, Method, RlSettings, DEFAULT_EPOCHS,
};
pub use output::{
    read_results, sort_rows, write_diagnostics, write_results, write_timing, DiagnosticRow,
    Manifest, ResultRow, TimingRow,
};
pub use rl::run_rl;
pub use run::{
    architecture, bench_timing, objective_for, prepare_split, run_classification, run_diagnose,
    run_noise_study, source_mi, train_method, train_teacher, PreparedSplit, RunOptions,
    HISTOGRAM_EDGES, TEACHER_SEED_OFFSET,
};
