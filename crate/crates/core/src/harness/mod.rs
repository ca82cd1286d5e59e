//! Pre-training runs: configuration, batching, the optimization loop,
//! held-out evaluation, checkpoints and ablation suites.

mod ablation;
mod batch;
mod checkpoint;
mod config;
mod data;
mod metrics;
mod report;
mod train;

pub use ablation::{check_comparable, run_ablation_suite, AblationReport, AblationRow, Suite};
pub use batch::{batches_per_epoch, make_batches};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::{layer, DataConfig, Preset, RunConfig};
pub use data::{build_dataset, load_corpus, prepare_corpus, Dataset, PreparedCorpus};
pub use metrics::{read_metrics, write_metrics, MetricsRecord};
pub use report::{comparison_table, series, RunSeries, SeriesPoint};
pub use train::{evaluate, train, TrainOptions, TrainOutcome, METRICS_FILE, RUN_FILE};
