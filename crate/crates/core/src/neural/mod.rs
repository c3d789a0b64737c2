//! Neural contraction metric: a stacked peephole LSTM regressing the packed
//! Cholesky factor θ of the metric from the state history.

mod checkpoint;
mod gradcheck;
mod lstm;
mod model;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use gradcheck::{gradient_check, loss_gradient, GradCheckOptions, GradSample};
pub use lstm::{lstm_step, LstmLayer, OutputPeephole};
pub use model::{predict_metric, DeepLstmModel, Standardizer, StreamState, EPS_PD};
pub use train::{train, EpochStats, TrainConfig, TrainReport};
