//! The five-block CNN forgery classifier: architecture, forward/backward,
//! training with BCE + RMSProp, evaluation, and checkpoints.

mod arch;
mod checkpoint;
mod eval;
mod model;
mod train;

pub use arch::{ArchConfig, STANDARD_BLOCKS};
pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};
pub use eval::{evaluate, evaluate_preloaded, report_from_logits, Confusion, EvalReport, KindStats};
pub use model::{ActivationCache, BlockCache, BlockGrads, ConvBlock, Gates, Gradients, Model};
pub use train::{
    check_manifest, predict_all, train, train_preloaded, EpochMetrics, Preloaded, Scenario, TrainConfig, Trained,
};
