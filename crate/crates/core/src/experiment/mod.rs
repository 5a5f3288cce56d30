//! Configuration-driven experiments: train, compose, simulate, sweep and report.

pub mod config;
pub mod report;
pub mod run;
pub mod sweep;

pub use config::{DatasetConfig, DatasetKind, ExperimentConfig, OutputConfig, SimulateConfig, SweepConfig, TopologyConfig};
pub use report::{compare_reference, markdown_summary, report_memory, LayerMemory, MemoryReport, ReferencePoint, REFERENCE_ACCELERATORS};
pub use run::{held_out_split, read_summary, run, run_trained, RunSummary};
pub use sweep::{median_delta_e, sweep, sweep_csv, sweep_points, SweepPoint, SweepRow};
