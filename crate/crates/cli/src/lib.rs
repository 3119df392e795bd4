//! Commands of the `incivil` pipeline tool. Each command reads a
//! [`PipelineConfig`], writes its outputs under the configured output
//! directory together with a `<command>.manifest.json` provenance record, and
//! returns a summary.

pub mod config;
pub mod conflicts;
pub mod data;
pub mod error;
pub mod filter;
pub mod gradcheck;
pub mod io;
pub mod models;
pub mod posthoc;
pub mod predict;
pub mod train;

pub use config::PipelineConfig;
pub use conflicts::{cmd_conflicts, run_conflicts, ConflictSummary};
pub use error::{CliError, Result};
pub use filter::{cmd_featurize, cmd_filter, FilterStats};
pub use gradcheck::cmd_gradcheck;
pub use models::ModelKind;
pub use posthoc::{cmd_posthoc, PosthocSummary};
pub use predict::{cmd_eval, cmd_predict, EvalOutput, PredictSummary};
pub use train::{cmd_train, TrainMetrics, TrainOutcome};
