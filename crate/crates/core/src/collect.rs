//! Off-policy data collection and training-sample assembly.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::config::{ExplorationConfig, RunConfig, SamplingMode};
use crate::error::{invalid, Result};
use crate::labeling::{feature, kmeans_fit, obstacle_label, ClusterModel};
use crate::rng::{stream, SimRng};
use crate::sim::{render_aerial, render_ground, step, synth_vibration, VehicleState, WorldMap};
use crate::terrain::TerrainClass;

/// Held-interval random steering: a uniform base action is held for a
/// Gaussian-distributed time, with small per-step Gaussian jitter.
#[derive(Debug, Clone)]
pub struct ExplorationPolicy {
    cfg: ExplorationConfig,
    dt: f64,
    base: f64,
    remaining: usize,
}

impl ExplorationPolicy {
    pub fn new(cfg: &ExplorationConfig, dt: f64) -> Result<Self> {
        if cfg.hold_std_s < 0.0 || cfg.jitter_std < 0.0 || cfg.hold_mean_s <= 0.0 || cfg.hold_min_s < 0.0 || dt <= 0.0 {
            return Err(invalid("exploration hold and jitter parameters must be non-negative"));
        }
        Ok(Self {
            cfg: cfg.clone(),
            dt,
            base: 0.0,
            remaining: 0,
        })
    }

    /// Hold duration in steps, from a Gaussian truncated below at
    /// `hold_min_s`.
    fn draw_hold<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let secs = if self.cfg.hold_std_s > 0.0 {
            let n = Normal::new(self.cfg.hold_mean_s, self.cfg.hold_std_s).expect("finite hold");
            (0..64).map(|_| n.sample(rng)).find(|&s| s >= self.cfg.hold_min_s).unwrap_or(self.cfg.hold_mean_s.max(self.cfg.hold_min_s))
        } else {
            self.cfg.hold_mean_s.max(self.cfg.hold_min_s)
        };
        ((secs / self.dt).round() as usize).max(1)
    }

    pub fn next_action<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        if self.remaining == 0 {
            self.base = rng.random_range(-1.0..=1.0);
            self.remaining = self.draw_hold(rng);
        }
        self.remaining -= 1;
        let jitter = if self.cfg.jitter_std > 0.0 {
            Normal::new(0.0, self.cfg.jitter_std).expect("finite jitter").sample(rng)
        } else {
            0.0
        };
        (self.base + jitter).clamp(-1.0, 1.0)
    }
}

/// One control step of an episode: the action applied, the pose it led to,
/// what the sensors saw there and what was driven over on the way.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub episode: u32,
    pub step: u32,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub action: f64,
    pub ground: Vec<u8>,
    pub aerial: Vec<u8>,
    pub vibration: Vec<f64>,
    /// Simulator class at the new pose (obstacle on collision).
    pub true_class: TerrainClass,
    /// Self-supervised label, once assigned.
    pub label: Option<TerrainClass>,
    pub min_range: f64,
    pub collided: bool,
    /// Distance travelled during this step.
    pub distance: f64,
}

/// Uniformly drawn pose on free ground with the requested clearance.
pub fn sample_spawn(world: &WorldMap, clearance: f64, rng: &mut SimRng) -> Result<(f64, f64, f64)> {
    for _ in 0..100_000 {
        let x = rng.random_range(0.0..world.width_m());
        let y = rng.random_range(0.0..world.height_m());
        if !world.blocked_at(x, y) && world.has_clearance(x, y, clearance) {
            return Ok((x, y, rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)));
        }
    }
    Err(invalid(format!("no free spawn pose with {clearance} m clearance")))
}

/// Drives one exploration episode until collision or the step cap. Labels
/// are filled in when a cluster model is given.
pub fn run_collection_episode(
    world: &WorldMap,
    cfg: &RunConfig,
    labeler: Option<&ClusterModel>,
    seed: u64,
    episode: u32,
) -> Result<Vec<TrajectoryRecord>> {
    let mut rng = stream(seed, "collect", episode as u64);
    let (x, y, heading) = sample_spawn(world, cfg.collect.spawn_clearance_m, &mut rng)?;
    let mut state = VehicleState::new(x, y, heading, &cfg.vehicle);
    let mut policy = ExplorationPolicy::new(&cfg.exploration, cfg.vehicle.dt())?;
    let mut records = Vec::new();
    for n in 0..cfg.collect.max_steps {
        let action = policy.next_action(&mut rng);
        let (next, event) = step(world, &state, action, &cfg.vehicle, &cfg.range);
        let vibration = synth_vibration(event.traversed_class, next.speed, &cfg.imu, &mut rng);
        let label = labeler.map(|m| {
            m.label(&vibration, cfg.imu.rate_hz, event.min_range, cfg.labeling.obstacle_threshold_m, cfg.world.num_classes)
        });
        records.push(TrajectoryRecord {
            episode,
            step: n as u32,
            x: next.x,
            y: next.y,
            heading: next.heading,
            action,
            ground: render_ground(world, &next, &cfg.camera).data,
            aerial: render_aerial(world, &next, &cfg.camera).data,
            vibration,
            true_class: event.traversed_class,
            label,
            min_range: event.min_range,
            collided: event.collided,
            distance: next.speed * cfg.vehicle.dt(),
        });
        state = next;
        if event.collided {
            break;
        }
    }
    Ok(records)
}

/// Runs `cfg.collect.episodes` episodes in parallel; the output order is
/// the episode order regardless of scheduling.
pub fn collect_episodes(world: &WorldMap, cfg: &RunConfig, seed: u64) -> Result<Vec<Vec<TrajectoryRecord>>> {
    (0..cfg.collect.episodes as u32)
        .into_par_iter()
        .map(|e| run_collection_episode(world, cfg, None, seed, e))
        .collect()
}

/// Fits the terrain clusterer on every window not already claimed by the
/// range-based obstacle rule, with `|C| - 1` clusters.
pub fn fit_labeler(records: &[TrajectoryRecord], cfg: &RunConfig, seed: u64) -> Result<ClusterModel> {
    let thr = cfg.labeling.obstacle_threshold_m;
    let points: Vec<Vec<f64>> = records
        .iter()
        .filter(|r| !obstacle_label(r.min_range, thr))
        .map(|r| feature(&r.vibration, cfg.imu.rate_hz).to_vec())
        .collect();
    kmeans_fit(&points, cfg.labeling.clusters, seed, cfg.labeling.max_iter, cfg.labeling.restarts)
}

pub fn label_records(records: &mut [TrajectoryRecord], model: &ClusterModel, cfg: &RunConfig) {
    for r in records {
        r.label = Some(model.label(&r.vibration, cfg.imu.rate_hz, r.min_range, cfg.labeling.obstacle_threshold_m, cfg.world.num_classes));
    }
}

/// A training sample: `records[anchor + 1 - M ..= anchor]` supply the image
/// history, and `records[anchor + 1 ..= anchor + H]` supply the actions and
/// labels, all within one episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleIndex {
    pub episode: u32,
    /// Position of the anchor record in the flat record list.
    pub anchor: usize,
}

/// Sliding-window sample extraction over episodes stored contiguously in
/// `records`. Episodes shorter than `M + H` contribute nothing. In distance
/// mode consecutive anchors are at least `spacing_m` apart in travelled
/// distance.
pub fn build_dataset(
    records: &[TrajectoryRecord],
    history: usize,
    horizon: usize,
    mode: SamplingMode,
    spacing_m: f64,
) -> Vec<SampleIndex> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < records.len() {
        let ep = records[start].episode;
        let end = records[start..].iter().position(|r| r.episode != ep).map_or(records.len(), |p| start + p);
        let n = end - start;
        if n >= history + horizon && history > 0 {
            let mut travelled = 0.0;
            let mut last_anchor_at: Option<f64> = None;
            for t in 0..n {
                travelled += records[start + t].distance;
                if t + 1 < history || t + horizon >= n {
                    continue;
                }
                let take = match (mode, last_anchor_at) {
                    (SamplingMode::Time, _) | (SamplingMode::Distance, None) => true,
                    (SamplingMode::Distance, Some(prev)) => travelled - prev >= spacing_m - 1e-9,
                };
                if take {
                    last_anchor_at = Some(travelled);
                    out.push(SampleIndex { episode: ep, anchor: start + t });
                }
            }
        }
        start = end;
    }
    out
}

/// Seeded episode-level split: shuffles episode ids and gives the first
/// `1 - validation_fraction` of them to training.
pub fn split_episodes(episodes: &[u32], validation_fraction: f64, seed: u64) -> (Vec<u32>, Vec<u32>) {
    let mut ids: Vec<u32> = episodes.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let mut rng = stream(seed, "split", 0);
    for i in (1..ids.len()).rev() {
        let j = rng.random_range(0..=i);
        ids.swap(i, j);
    }
    let n_train = ((1.0 - validation_fraction) * ids.len() as f64).round() as usize;
    let val = ids.split_off(n_train.min(ids.len()));
    (ids, val)
}

pub fn split_dataset(samples: &[SampleIndex], validation_fraction: f64, seed: u64) -> (Vec<SampleIndex>, Vec<SampleIndex>) {
    let episodes: Vec<u32> = samples.iter().map(|s| s.episode).collect();
    let (_, val) = split_episodes(&episodes, validation_fraction, seed);
    let val: std::collections::HashSet<u32> = val.into_iter().collect();
    samples.iter().partition(|s| !val.contains(&s.episode))
}
