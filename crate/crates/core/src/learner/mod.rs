//! Value and obstacle predictors and their training loop.

mod checkpoint;
mod loss;
mod model;
mod oracle;
mod predictor;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use loss::{multitask_loss, LossBreakdown, LossEval, ValueTarget, PROB_CLIP};
pub use model::{Architecture, Conv, Layout, Model, Outputs, ParamBlock, DECODER_CHANNELS, ENCODER_CHANNELS};
pub use oracle::{oracle_predict, OraclePredictor};
pub use predictor::{value_targets, LearnedPredictor};
pub use train::{batch_loss, train, TrainConfig, TrainLogEntry, TrainObserver, TrainOutcome};
