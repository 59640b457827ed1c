//! Simulator, self-supervised labeling, terrain predictor, planner and
//! evaluation harness for learned off-road navigation.

pub mod collect;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod labeling;
pub mod net;
pub mod planner;
pub mod provenance;
pub mod rng;
pub mod sim;
pub mod svg;
pub mod terrain;
pub mod train;

pub use config::{InputMode, Profile, RunConfig};
pub use error::{CoreError, Result};
pub use terrain::{reward_map, TerrainClass};
