//! Experiment configuration, the sweep runner, and plot emission.

mod config;
mod plot;
mod sweep;

pub use config::{DatasetConfig, ExperimentConfig, ModelConfig, PretrainConfig, Strategy};
pub use plot::{aggregate_series, emit_plots, SeriesPoint};
pub use sweep::{parse_filters, run_sweep, CellFilter, ResultRow, RowStatus, SweepOptions, RESULT_CSV_HEADER};
