use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use crate::config::{ImuConfig, RangeConfig};
use crate::sim::vehicle::VehicleState;
use crate::sim::world::WorldMap;
use crate::terrain::TerrainClass;

/// Minimum distance to an obstacle cell over a forward fan of beams,
/// capped at `max_range_m`. The map edge counts as an obstacle.
pub fn sense_range(world: &WorldMap, state: &VehicleState, cfg: &RangeConfig) -> f64 {
    let step = world.cell_size / 8.0;
    let n_steps = (cfg.max_range_m / step).ceil() as usize;
    let fan = cfg.fan_deg.to_radians();
    let mut best = cfg.max_range_m;
    for b in 0..cfg.n_beams {
        let offset = if cfg.n_beams == 1 {
            0.0
        } else {
            -fan / 2.0 + fan * b as f64 / (cfg.n_beams - 1) as f64
        };
        let (dx, dy) = ((state.heading + offset).cos(), (state.heading + offset).sin());
        for i in 0..=n_steps {
            let d = (i as f64 * step).min(cfg.max_range_m);
            if d >= best {
                break;
            }
            if world.blocked_at(state.x + d * dx, state.y + d * dy) {
                best = d;
                break;
            }
        }
    }
    best
}

/// Vertical acceleration window for one step over terrain of `class`.
///
/// The signal is a class-specific sinusoid plus white noise. Its expected
/// RMS equals the configured class RMS scaled linearly by speed; the
/// per-window amplitude gets a log-normal jitter. The obstacle class
/// vibrates like the roughest terrain class.
pub fn synth_vibration<R: Rng + ?Sized>(class: TerrainClass, speed: f64, cfg: &ImuConfig, rng: &mut R) -> Vec<f64> {
    let idx = class.index().min(cfg.rms_per_class.len() - 1);
    let scale = speed / cfg.reference_speed_mps;
    let rms = cfg.rms_per_class[idx] * scale;
    let freq = cfg.freq_per_class[idx];
    let nf = cfg.noise_fraction.clamp(0.0, 1.0);
    let jitter = if cfg.amplitude_jitter > 0.0 {
        LogNormal::new(0.0, cfg.amplitude_jitter).expect("positive sigma").sample(rng)
    } else {
        1.0
    };
    let amplitude = rms * (1.0 - nf * nf).sqrt() * std::f64::consts::SQRT_2 * jitter;
    let noise_std = rms * nf;
    let noise = Normal::new(0.0, noise_std.max(0.0)).expect("finite std");
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    (0..cfg.samples)
        .map(|n| {
            let t = n as f64 / cfg.rate_hz;
            let w = amplitude * (std::f64::consts::TAU * freq * t + phase).sin();
            if noise_std > 0.0 {
                w + noise.sample(rng)
            } else {
                w
            }
        })
        .collect()
}

/// Vibration at the vehicle's current cell.
pub fn synth_imu<R: Rng + ?Sized>(world: &WorldMap, state: &VehicleState, cfg: &ImuConfig, rng: &mut R) -> Vec<f64> {
    let class = world.class_at(state.x, state.y).unwrap_or(world.obstacle_class());
    synth_vibration(class, state.speed, cfg, rng)
}
