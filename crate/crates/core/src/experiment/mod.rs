//! Experiment plumbing: rating-file ingestion, hyperparameter sweeps and
//! report emission.

mod ingest;
mod report;
mod sweep;

pub use ingest::{export_pairs, ingest, ingest_reader, IngestOptions, IngestOutcome, InputFormat};
pub use report::{emit_report, parse_csv_report, report_rows, ReportFormat, ReportRow, CSV_HEADER};
pub use sweep::{
    expand_grid_once, run_paired, run_sweep, CellResult, MetricSummary, PairedResult, SweepResult,
    SweepSpec, ALPHA_CAP, LAMBDA_CAP, LAMBDA_FLOOR,
};
