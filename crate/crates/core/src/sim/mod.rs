//! Procedural 2-D off-road world, vehicle kinematics and synthetic sensors.

mod io;
mod render;
mod sensors;
mod vehicle;
mod world;

pub use io::{load_world, save_world, world_bytes, world_from_bytes};
pub use render::{
    aerial_sample_point, class_color, render_aerial, render_ground, Frame, BORDER_COLOR, CANOPY_COLOR, FOG_COLOR,
    GRASS_COLOR, MAX_TERRAIN_CLASSES, OBSTACLE_COLOR, SKY_COLOR,
};
pub use sensors::{sense_range, synth_imu, synth_vibration};
pub use vehicle::{kinematic_step, step, wrap_angle, StepEvent, VehicleState};
pub use world::{generate_world, WorldMap};
