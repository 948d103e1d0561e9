//! Experiment pipeline and report rendering behind the `scwt` binary.

pub mod audit;
pub mod experiment;
pub mod report;

pub use experiment::{
    run_experiment, train_baseline_classifier, ClassifierReport, ClassifierTrainOptions,
    ExperimentConfig, ExperimentId, ExperimentResult, PipelineError,
};
pub use report::{emit_report, render_report, ReportFormat};
