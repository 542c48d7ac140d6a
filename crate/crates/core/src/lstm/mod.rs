//! From-scratch sequence classifier: a bidirectional LSTM layer, a second
//! LSTM layer and a single sigmoid output, trained on binary cross-entropy
//! with Adam, dropout and early stopping. All arithmetic is `f64`.

mod adam;
mod cell;
mod checkpoint;
mod network;
mod train;

pub use adam::{AdamConfig, AdamState};
pub use cell::{CellParams, GateCache};
pub use checkpoint::{LstmCheckpoint, CHECKPOINT_KIND, CHECKPOINT_SCHEMA_VERSION};
pub use network::{bce_loss, BatchCache, LstmNetwork, NetworkConfig, NetworkParams, SequenceCache, BCE_EPS};
pub use train::{train, EarlyStopping, EpochRecord, StopDecision, TrainConfig, TrainingLog};
