//! Persistence, pipelines, ablation reports and the cost probe.

pub mod cost;
pub mod formats;
pub mod pipeline;
pub mod report;
pub mod runconfig;

pub use cost::{cost_probe, CostReport, ProbeSettings};
pub use formats::{
    dataset_to_string, dump_logits, load_bank, load_dataset, load_logits, load_model, logits_to_string,
    model_to_string, parse_dataset, parse_logits, parse_model, write_dataset, write_logits, write_model,
    write_targets, write_weights, LogitDump,
};
pub use pipeline::{run_ablation, run_cell, run_pipeline, train_teacher};
pub use report::{AblationReport, CellOutcome, CellResult, ReportRow};
pub use runconfig::{RunConfig, TauChoice};
