//! Terrain-class predictor: architecture, parameters and checkpoints.

mod arch;
mod checkpoint;
mod model;

pub use arch::{Architecture, ConvSpec};
pub use checkpoint::{checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint, Checkpoint};
pub use model::{ConvLayer, EncodeCache, LossOutput, ObservationBatch, Rollout, TerrainNet};
