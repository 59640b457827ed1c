//! Expected-return scoring, random shooting and the receding-horizon loop.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use offroad_nn::Tensor;
use rand::Rng;

use crate::collect::{sample_spawn, ExplorationPolicy};
use crate::config::{ExplorationConfig, PlannerConfig, RolloutScheme, RunConfig};
use crate::dataset::stack_frames;
use crate::error::{invalid, CoreError, Result};
use crate::net::{ObservationBatch, Rollout, TerrainNet};
use crate::rng::{stream, SimRng};
use crate::sim::{render_aerial, render_ground, step, VehicleState, WorldMap};
use crate::svg;
use crate::terrain::TerrainClass;

const ROW_SUM_TOLERANCE: f64 = 1e-6;

fn step_return(row: &[f64], num_classes: usize) -> Result<f64> {
    if row.len() != num_classes {
        return Err(invalid(format!("distribution has {} entries, expected {num_classes}", row.len())));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE || row.iter().any(|&p| p < 0.0) {
        return Err(invalid(format!("distribution is not normalized (sum {sum})")));
    }
    Ok(row.iter().enumerate().map(|(j, p)| (num_classes - 1 - j) as f64 * p).sum())
}

/// Probability-weighted reward `Σ_i Σ_j (|C| - 1 - j) p_ij` over the
/// horizon.
pub fn expected_return(prediction: &[Vec<f64>], num_classes: usize) -> Result<f64> {
    prediction.iter().try_fold(0.0, |acc, row| Ok(acc + step_return(row, num_classes)?))
}

/// Expected return of every row of a batched rollout, accumulated in the
/// same order as [`expected_return`].
pub fn rollout_returns(rollout: &Rollout, num_classes: usize) -> Result<Vec<f64>> {
    let k = rollout.probs.first().map_or(0, |p| p.shape()[0]);
    let mut out = vec![0.0; k];
    for p in &rollout.probs {
        for (r, acc) in out.iter_mut().enumerate() {
            *acc += step_return(p.row(r), num_classes)?;
        }
    }
    Ok(out)
}

/// `K` candidate action sequences as a `[K, H]` tensor.
pub fn sample_rollouts(
    k: usize,
    horizon: usize,
    scheme: RolloutScheme,
    exploration: &ExplorationConfig,
    dt: f64,
    rng: &mut impl Rng,
) -> Result<Tensor> {
    if k == 0 {
        return Err(invalid("need at least one rollout"));
    }
    let mut data = Vec::with_capacity(k * horizon);
    for _ in 0..k {
        match scheme {
            RolloutScheme::PerStepUniform => data.extend((0..horizon).map(|_| rng.random_range(-1.0..=1.0))),
            RolloutScheme::HeldInterval => {
                let mut p = ExplorationPolicy::new(exploration, dt)?;
                data.extend((0..horizon).map(|_| p.next_action(rng)));
            }
        }
    }
    Ok(Tensor::new(&[k, horizon], data)?)
}

/// Every sequence of length `horizon` over `values`, in lexicographic
/// order with the first step varying slowest.
pub fn enumerate_rollouts(values: &[f64], horizon: usize) -> Tensor {
    let n = values.len().pow(horizon as u32);
    Tensor::from_fn(&[n, horizon], |i| {
        let (row, col) = (i / horizon, i % horizon);
        values[(row / values.len().pow((horizon - 1 - col) as u32)) % values.len()]
    })
}

#[derive(Debug, Clone)]
pub struct Selection {
    /// First action of the best candidate.
    pub action: f64,
    pub best: usize,
    pub returns: Vec<f64>,
    pub candidates: Tensor,
}

/// First index holding the maximum.
pub fn argmax_first(values: &[f64]) -> usize {
    (0..values.len()).fold(0, |best, i| if values[i] > values[best] { i } else { best })
}

/// Scores `candidates` from one observation and keeps the best, lowest
/// index first among equals. With `veto`, candidates whose obstacle
/// probability exceeds the threshold at any step are skipped unless all
/// of them would be.
pub fn select_action(net: &TerrainNet, obs: &ObservationBatch, candidates: Tensor, veto: Option<f64>) -> Result<Selection> {
    if obs.len() != 1 {
        return Err(invalid("planning takes a single observation"));
    }
    let mut rng = stream(0, "inference", 0);
    let (h0, c0, _) = net.encode(obs, false, &mut rng)?;
    let rollout = net.predict_from_state(&h0, &c0, &candidates)?;
    let c = net.arch.num_classes;
    let returns = rollout_returns(&rollout, c)?;
    let mut scores = returns.clone();
    if let Some(thr) = veto {
        let risky: Vec<bool> = (0..scores.len()).map(|k| rollout.probs.iter().any(|p| p.row(k)[c - 1] > thr)).collect();
        if risky.iter().any(|r| !r) {
            for (s, r) in scores.iter_mut().zip(&risky) {
                if *r {
                    *s = f64::NEG_INFINITY;
                }
            }
        }
    }
    let best = argmax_first(&scores);
    Ok(Selection {
        action: candidates.row(best)[0],
        best,
        returns,
        candidates,
    })
}

/// Samples candidates per the planner configuration and selects one.
pub fn plan(net: &TerrainNet, obs: &ObservationBatch, cfg: &PlannerConfig, exploration: &ExplorationConfig, dt: f64, rng: &mut impl Rng) -> Result<Selection> {
    let candidates = sample_rollouts(cfg.candidates, net.arch.horizon, cfg.scheme, exploration, dt, rng)?;
    select_action(net, obs, candidates, cfg.collision_veto.then_some(cfg.veto_threshold))
}

/// Rolling window of the last `M` rendered views.
#[derive(Debug, Clone)]
pub struct FrameHistory {
    frames: VecDeque<(Vec<u8>, Vec<u8>)>,
    ground_hw: (usize, usize),
    aerial_hw: (usize, usize),
}

impl FrameHistory {
    /// Starts full, with `first` repeated `history` times.
    pub fn new(first: (Vec<u8>, Vec<u8>), history: usize, ground_hw: (usize, usize), aerial_hw: (usize, usize)) -> Self {
        Self {
            frames: std::iter::repeat_n(first, history).collect(),
            ground_hw,
            aerial_hw,
        }
    }

    pub fn push(&mut self, frame: (Vec<u8>, Vec<u8>)) {
        self.frames.pop_front();
        self.frames.push_back(frame);
    }

    pub fn observation(&self, net: &TerrainNet) -> ObservationBatch {
        let mode = net.arch.mode;
        ObservationBatch {
            ground: mode.uses_ground().then(|| stack_frames(&[self.frames.iter().map(|f| f.0.as_slice()).collect()], self.ground_hw)),
            aerial: mode.uses_aerial().then(|| stack_frames(&[self.frames.iter().map(|f| f.1.as_slice()).collect()], self.aerial_hw)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub step: usize,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub action: f64,
    /// Expected return of the executed plan; `None` for unplanned drivers.
    pub chosen_return: Option<f64>,
    pub traversed_class: TerrainClass,
    pub collided: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub start: (f64, f64, f64),
    pub steps: Vec<TraceStep>,
}

/// Steering source for a closed-loop episode.
pub enum Driver<'a> {
    Planner(&'a TerrainNet),
    /// The held-interval exploration policy, ignoring observations.
    Random,
}

fn render_views(world: &WorldMap, state: &VehicleState, cfg: &RunConfig) -> (Vec<u8>, Vec<u8>) {
    (render_ground(world, state, &cfg.camera).data, render_aerial(world, state, &cfg.camera).data)
}

/// Closed-loop episode from `start`: observe, choose an action, step,
/// until collision or `max_steps`.
pub fn drive_episode(world: &WorldMap, driver: &Driver, cfg: &RunConfig, start: (f64, f64, f64), max_steps: usize, rng: &mut SimRng) -> Result<EpisodeTrace> {
    let dt = cfg.vehicle.dt();
    let mut state = VehicleState::new(start.0, start.1, start.2, &cfg.vehicle);
    let mut policy = ExplorationPolicy::new(&cfg.exploration, dt)?;
    let mut history = match driver {
        Driver::Planner(net) => Some((
            *net,
            FrameHistory::new(
                render_views(world, &state, cfg),
                net.arch.history,
                (cfg.camera.ground_height_px, cfg.camera.ground_width_px),
                (cfg.camera.aerial_height_px, cfg.camera.aerial_width_px),
            ),
        )),
        Driver::Random => None,
    };
    if let Some((net, _)) = &history {
        if net.arch.ground_hw != (cfg.camera.ground_height_px, cfg.camera.ground_width_px)
            || net.arch.aerial_hw != (cfg.camera.aerial_height_px, cfg.camera.aerial_width_px)
        {
            return Err(invalid("checkpoint image sizes do not match the camera configuration"));
        }
    }
    let mut steps = Vec::new();
    for n in 0..max_steps {
        let (action, chosen_return) = match &history {
            Some((net, h)) => {
                let sel = plan(net, &h.observation(net), &cfg.planner, &cfg.exploration, dt, rng)?;
                (sel.action, Some(sel.returns[sel.best]))
            }
            None => (policy.next_action(rng), None),
        };
        let (next, event) = step(world, &state, action, &cfg.vehicle, &cfg.range);
        steps.push(TraceStep {
            step: n,
            x: next.x,
            y: next.y,
            heading: next.heading,
            action,
            chosen_return,
            traversed_class: event.traversed_class,
            collided: event.collided,
        });
        state = next;
        if event.collided {
            break;
        }
        if let Some((_, h)) = &mut history {
            h.push(render_views(world, &state, cfg));
        }
    }
    Ok(EpisodeTrace { start, steps })
}

/// Receding-horizon drive from a seeded spawn pose.
pub fn mpc_drive(world: &WorldMap, net: &TerrainNet, cfg: &RunConfig, seed: u64) -> Result<EpisodeTrace> {
    let mut rng = stream(seed, "drive", 0);
    let start = sample_spawn(world, cfg.eval.spawn_clearance_m, &mut rng)?;
    drive_episode(world, &Driver::Planner(net), cfg, start, cfg.planner.max_steps, &mut rng)
}

impl EpisodeTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,x,y,heading,action,chosen_return,traversed_class,collided\n");
        for t in &self.steps {
            let _ = writeln!(
                s,
                "{},{:.6},{:.6},{:.6},{:.6},{},{},{}",
                t.step,
                t.x,
                t.y,
                t.heading,
                t.action,
                t.chosen_return.map_or(String::new(), |r| format!("{r:.6}")),
                t.traversed_class.0,
                t.collided as u8
            );
        }
        s
    }

    /// Start pose followed by every step, with the class reached.
    pub fn points(&self) -> Vec<(f64, f64, TerrainClass)> {
        std::iter::once((self.start.0, self.start.1, TerrainClass(0)))
            .chain(self.steps.iter().map(|t| (t.x, t.y, t.traversed_class)))
            .collect()
    }

    pub fn to_svg(&self, world: &WorldMap) -> String {
        let mut s = svg::world_svg_open(world);
        s.push_str(&svg::trajectory_svg(world, &self.points()));
        s.push_str("</svg>\n");
        s
    }

    pub fn save(&self, world: &WorldMap, csv: &Path, svg_path: &Path) -> Result<()> {
        std::fs::write(csv, self.to_csv()).map_err(|e| CoreError::io(csv, e))?;
        std::fs::write(svg_path, self.to_svg(world)).map_err(|e| CoreError::io(svg_path, e))
    }
}
