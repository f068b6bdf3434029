//! End-to-end experiments: stratified cross-validation under IID and a
//! source/target covariate-shift run with per-epoch traces, plus the report
//! writer.

mod config;
mod evaluate;
mod iid;
mod report;
mod shift;

pub use config::{ExperimentConfig, ExperimentKind, ShiftConfig};
pub use evaluate::{fit_counterpart, metric_names, select_specs, EvalSet};
pub use iid::run_iid_experiment;
pub use report::{
    compare_models, emit_report, AnovaEntry, Diagnostic, ExperimentReport, FoldRecord, Phase,
    SummaryCell, TraceRow, TukeyTable,
};
pub use shift::{run_covariate_shift_experiment, tune_is_monotone};

use crate::error::Result;

/// Runs whichever experiment `config.kind` names.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    match config.kind {
        ExperimentKind::IidCv => run_iid_experiment(config),
        ExperimentKind::CovariateShift => run_covariate_shift_experiment(config),
    }
}
