//! CBF vs PCCB experiments: configuration, the comparison sweep, summary
//! statistics and file export.

pub mod config;
pub mod export;
pub mod run;
pub mod stats;

pub use config::{
    ArraySpec, ExperimentConfig, RegionKind, SamplingConfig, StatsConfig, SteeringSpec,
};
pub use export::{export_outputs, parse_records_csv, read_records_csv, records_to_csv};
pub use run::{run_comparison, ComparisonRecord, ComparisonRun, Method, RunMode};
pub use stats::{aggregate_stats, StatsBundle};
