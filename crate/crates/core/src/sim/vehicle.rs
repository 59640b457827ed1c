use crate::config::{RangeConfig, VehicleConfig};
use crate::sim::sensors::sense_range;
use crate::sim::world::WorldMap;
use crate::terrain::TerrainClass;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    /// Radians, counter-clockwise from +x.
    pub heading: f64,
    pub speed: f64,
    pub wheelbase: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, heading: f64, vehicle: &VehicleConfig) -> Self {
        Self {
            x,
            y,
            heading,
            speed: vehicle.speed_mps,
            wheelbase: vehicle.wheelbase_m,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepEvent {
    pub collided: bool,
    pub traversed_class: TerrainClass,
    pub min_range: f64,
}

/// Kinematic bicycle update with constant speed. The position advances
/// along the mid-step heading, which keeps constant-steer paths on their
/// circle.
pub fn kinematic_step(state: &VehicleState, action: f64, max_steer_rad: f64, dt: f64) -> VehicleState {
    let a = action.clamp(-1.0, 1.0);
    let yaw_rate = state.speed / state.wheelbase * (max_steer_rad * a).tan();
    let dtheta = yaw_rate * dt;
    let mid = state.heading + dtheta / 2.0;
    let dist = state.speed * dt;
    VehicleState {
        x: state.x + dist * mid.cos(),
        y: state.y + dist * mid.sin(),
        heading: wrap_angle(state.heading + dtheta),
        ..*state
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    if a > -std::f64::consts::PI && a <= std::f64::consts::PI {
        return a;
    }
    let w = (a + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
    if w <= -std::f64::consts::PI {
        w + std::f64::consts::TAU
    } else {
        w
    }
}

/// Advances the vehicle one control period and reports what it ran over.
///
/// Leaving the map clamps the pose to the boundary and counts as a
/// collision. A collision marks the traversed class as the obstacle class.
pub fn step(
    world: &WorldMap,
    state: &VehicleState,
    action: f64,
    vehicle: &VehicleConfig,
    range: &RangeConfig,
) -> (VehicleState, StepEvent) {
    let mut next = kinematic_step(state, action, vehicle.max_steer_deg.to_radians(), vehicle.dt());
    let eps = 1e-9;
    let inside = next.x >= 0.0 && next.y >= 0.0 && next.x < world.width_m() && next.y < world.height_m();
    if !inside {
        next.x = next.x.clamp(0.0, world.width_m() - eps);
        next.y = next.y.clamp(0.0, world.height_m() - eps);
    }
    let min_range = sense_range(world, &next, range);
    let collided = !inside || world.blocked_at(next.x, next.y) || min_range < range.collision_threshold_m;
    let obstacle = world.obstacle_class();
    let traversed_class = if collided {
        obstacle
    } else {
        world.class_at(next.x, next.y).unwrap_or(obstacle)
    };
    (
        next,
        StepEvent {
            collided,
            traversed_class,
            min_range: if collided && min_range >= range.collision_threshold_m { 0.0 } else { min_range },
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Profile, RunConfig};

    fn car() -> VehicleState {
        VehicleState {
            x: 0.0,
            y: 0.0,
            heading: 0.3,
            speed: 6.0 / 3.6,
            wheelbase: 0.5,
        }
    }

    #[test]
    fn straight_action_moves_speed_dt() {
        let dt = 1.0 / 6.0;
        let s = kinematic_step(&car(), 0.0, 30f64.to_radians(), dt);
        assert_eq!(s.heading, 0.3);
        let d = (s.x.powi(2) + s.y.powi(2)).sqrt();
        assert!((d - car().speed * dt).abs() < 1e-12);
    }

    #[test]
    fn constant_steer_closes_circle() {
        let action = 0.4;
        let max = 30f64.to_radians();
        let radius = 0.5 / (max * action).tan();
        let dt = 1e-3;
        let period = std::f64::consts::TAU * radius / car().speed;
        let n = (period / dt).round() as usize;
        let mut s = car();
        for _ in 0..n {
            s = kinematic_step(&s, action, max, dt);
        }
        let closure = (s.x.powi(2) + s.y.powi(2)).sqrt();
        assert!(closure / (std::f64::consts::TAU * radius) < 0.01, "closure {closure}");
    }

    #[test]
    fn desk_control_period() {
        let cfg = RunConfig::profile(Profile::Desk);
        assert!((cfg.vehicle.dt() - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn wrap_angle_range() {
        for k in -20..20 {
            let w = wrap_angle(k as f64 * 0.77);
            assert!(w > -std::f64::consts::PI && w <= std::f64::consts::PI);
        }
    }
}
