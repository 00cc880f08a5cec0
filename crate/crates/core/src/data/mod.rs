//! Datasets, synthetic benchmarks, checkpoints and metrics logs.

pub mod benchmark;
pub mod checkpoint;
pub mod dataset;
pub mod metrics;

pub use benchmark::{make_synthetic_benchmark, Generator, SyntheticBenchmarkSpec, VAL_FRACTION};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, Role, CHECKPOINT_VERSION};
pub use dataset::{load_dataset, save_dataset, save_label_report, Dataset, DatasetFormat, SplitTag};
pub use metrics::{append_csv_record, append_metrics, read_metrics, MetricsRow, METRICS_HEADER};
