//! Procedural world layout.
//!
//! Terrain classes come from thresholded fractal value noise; canopy and
//! grass sections come from two more noise fields. Trees are scattered under
//! canopy, rocks everywhere else, and the map is walled in by a two-cell
//! obstacle border.

use std::collections::VecDeque;

use rand::Rng;

use crate::config::WorldConfig;
use crate::error::{CoreError, Result};
use crate::rng::{derive_seed, lattice_unit, stream};
use crate::terrain::TerrainClass;

const BORDER_CELLS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct WorldMap {
    pub config: WorldConfig,
    pub seed: u64,
    pub cols: usize,
    pub rows: usize,
    pub cell_size: f64,
    /// Row-major over `(row = y, col = x)`.
    pub classes: Vec<u8>,
    pub obstacle: Vec<bool>,
    /// Blocks the aerial view.
    pub canopy: Vec<bool>,
    /// Shortens the ground view.
    pub grass: Vec<bool>,
}

impl WorldMap {
    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    pub fn obstacle_class(&self) -> TerrainClass {
        TerrainClass::obstacle(self.config.num_classes)
    }

    pub fn width_m(&self) -> f64 {
        self.cols as f64 * self.cell_size
    }

    pub fn height_m(&self) -> f64 {
        self.rows as f64 * self.cell_size
    }

    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.cols + col
    }

    /// Cell containing a world point, or `None` outside the map.
    pub fn cell_at(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        if !(x >= 0.0 && y >= 0.0) {
            return None;
        }
        let col = (x / self.cell_size) as usize;
        let row = (y / self.cell_size) as usize;
        (col < self.cols && row < self.rows).then_some((col, row))
    }

    pub fn class_at(&self, x: f64, y: f64) -> Option<TerrainClass> {
        self.cell_at(x, y).map(|(c, r)| TerrainClass(self.classes[self.index(c, r)]))
    }

    /// Outside the map counts as blocked.
    pub fn blocked_at(&self, x: f64, y: f64) -> bool {
        match self.cell_at(x, y) {
            Some((c, r)) => self.obstacle[self.index(c, r)],
            None => true,
        }
    }

    pub fn canopy_at(&self, x: f64, y: f64) -> bool {
        self.cell_at(x, y).is_some_and(|(c, r)| self.canopy[self.index(c, r)])
    }

    pub fn grass_at(&self, x: f64, y: f64) -> bool {
        self.cell_at(x, y).is_some_and(|(c, r)| self.grass[self.index(c, r)])
    }

    pub fn cell_center(&self, col: usize, row: usize) -> (f64, f64) {
        ((col as f64 + 0.5) * self.cell_size, (row as f64 + 0.5) * self.cell_size)
    }

    /// True if no obstacle cell lies within `radius` of the point.
    pub fn has_clearance(&self, x: f64, y: f64, radius: f64) -> bool {
        let reach = (radius / self.cell_size).ceil() as i64 + 1;
        let Some((c0, r0)) = self.cell_at(x, y) else {
            return false;
        };
        for dr in -reach..=reach {
            for dc in -reach..=reach {
                let (c, r) = (c0 as i64 + dc, r0 as i64 + dr);
                if c < 0 || r < 0 || c >= self.cols as i64 || r >= self.rows as i64 {
                    return false;
                }
                let (cx, cy) = self.cell_center(c as usize, r as usize);
                let half = self.cell_size / 2.0;
                // Distance from the point to the cell square.
                let dx = ((cx - x).abs() - half).max(0.0);
                let dy = ((cy - y).abs() - half).max(0.0);
                if self.obstacle[self.index(c as usize, r as usize)] && (dx * dx + dy * dy).sqrt() < radius {
                    return false;
                }
            }
        }
        true
    }

    /// Every free cell reachable from every other through 4-neighbour moves.
    pub fn is_connected(&self) -> bool {
        let free: Vec<usize> = (0..self.obstacle.len()).filter(|&i| !self.obstacle[i]).collect();
        let Some(&start) = free.first() else {
            return false;
        };
        let mut seen = vec![false; self.obstacle.len()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            let (c, r) = (i % self.cols, i / self.cols);
            let mut visit = |j: usize| {
                if !self.obstacle[j] && !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            };
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < self.cols {
                visit(i + 1);
            }
            if r > 0 {
                visit(i - self.cols);
            }
            if r + 1 < self.rows {
                visit(i + self.cols);
            }
        }
        count == free.len()
    }
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Two-octave value noise in roughly `[0, 1]`.
fn value_noise(seed: u64, x: f64, y: f64, spacing: f64) -> f64 {
    let mut total = 0.0;
    let mut weight_sum = 0.0;
    for (octave, weight) in [(0u64, 1.0), (1, 0.5)] {
        let s = spacing / (1 << octave) as f64;
        let (gx, gy) = (x / s, y / s);
        let (ix, iy) = (gx.floor() as i64, gy.floor() as i64);
        let (tx, ty) = (smoothstep(gx - ix as f64), smoothstep(gy - iy as f64));
        let v = |dx: i64, dy: i64| lattice_unit(seed, ix + dx, iy + dy, octave);
        let top = v(0, 0) * (1.0 - tx) + v(1, 0) * tx;
        let bottom = v(0, 1) * (1.0 - tx) + v(1, 1) * tx;
        total += weight * (top * (1.0 - ty) + bottom * ty);
        weight_sum += weight;
    }
    total / weight_sum
}

/// Value at the given quantile of `values`.
fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let idx = ((q * sorted.len() as f64).round() as usize).min(sorted.len());
    if idx == 0 {
        f64::NEG_INFINITY
    } else if idx == sorted.len() {
        f64::INFINITY
    } else {
        sorted[idx]
    }
}

fn validate(config: &WorldConfig) -> Result<()> {
    let bad = |m: &str| Err(CoreError::Config(format!("world: {m}")));
    if !(config.width_m > 0.0 && config.height_m > 0.0 && config.cell_size_m > 0.0) {
        return bad("extents and cell size must be positive");
    }
    if config.num_classes < 2 || config.class_fractions.len() != config.num_classes - 1 {
        return bad("class_fractions must list one share per non-obstacle class");
    }
    if config.class_fractions.iter().any(|f| *f < 0.0) || config.class_fractions.iter().sum::<f64>() <= 0.0 {
        return bad("class_fractions must be non-negative with a positive sum");
    }
    if !(0.0..=1.0).contains(&config.canopy_fraction)
        || !(0.0..=1.0).contains(&config.grass_fraction)
        || config.canopy_fraction + config.grass_fraction > 1.0
    {
        return bad("canopy and grass fractions must lie in [0, 1] and not exceed 1 together");
    }
    if config.obstacle_radius_min_m > config.obstacle_radius_max_m || config.obstacle_radius_min_m < 0.0 {
        return bad("obstacle radius range is empty");
    }
    let cols = (config.width_m / config.cell_size_m).round() as usize;
    let rows = (config.height_m / config.cell_size_m).round() as usize;
    if cols <= 2 * BORDER_CELLS + 2 || rows <= 2 * BORDER_CELLS + 2 {
        return bad("map too small for its border");
    }
    Ok(())
}

/// Generates a connected world; retries with derived seeds when obstacles
/// wall off part of the free space.
pub fn generate_world(config: &WorldConfig, seed: u64) -> Result<WorldMap> {
    validate(config)?;
    for attempt in 0..=config.max_retries {
        let world = generate_once(config, seed, attempt as u64);
        if world.is_connected() {
            return Ok(world);
        }
    }
    Err(CoreError::WorldGeneration(format!(
        "free space still disconnected after {} retries (seed {seed})",
        config.max_retries
    )))
}

fn generate_once(config: &WorldConfig, seed: u64, attempt: u64) -> WorldMap {
    let cs = config.cell_size_m;
    let cols = (config.width_m / cs).round() as usize;
    let rows = (config.height_m / cs).round() as usize;
    let n = cols * rows;
    let centers: Vec<(f64, f64)> = (0..n)
        .map(|i| (((i % cols) as f64 + 0.5) * cs, ((i / cols) as f64 + 0.5) * cs))
        .collect();

    // Layout noise depends only on the seed; only obstacle placement varies
    // between connectivity retries.
    let terrain_seed = derive_seed(seed, "terrain", 0);
    let terrain: Vec<f64> = centers
        .iter()
        .map(|&(x, y)| value_noise(terrain_seed, x, y, config.terrain_feature_m))
        .collect();
    let total: f64 = config.class_fractions.iter().sum();
    let mut cuts = Vec::new();
    let mut acc = 0.0;
    for f in &config.class_fractions[..config.class_fractions.len() - 1] {
        acc += f / total;
        cuts.push(quantile(&terrain, acc));
    }
    let mut classes: Vec<u8> = terrain
        .iter()
        .map(|v| cuts.iter().filter(|&&c| *v >= c).count() as u8)
        .collect();

    let canopy_seed = derive_seed(seed, "canopy", 0);
    let canopy_noise: Vec<f64> = centers
        .iter()
        .map(|&(x, y)| value_noise(canopy_seed, x, y, config.occluder_feature_m))
        .collect();
    let canopy_cut = quantile(&canopy_noise, 1.0 - config.canopy_fraction);
    let canopy: Vec<bool> = canopy_noise.iter().map(|v| *v >= canopy_cut && config.canopy_fraction > 0.0).collect();

    let grass_seed = derive_seed(seed, "grass", 0);
    let grass_noise: Vec<f64> = centers
        .iter()
        .map(|&(x, y)| value_noise(grass_seed, x, y, config.occluder_feature_m))
        .collect();
    // Grass takes the highest-noise cells among those without canopy.
    let mut open: Vec<usize> = (0..n).filter(|&i| !canopy[i]).collect();
    open.sort_by(|&a, &b| grass_noise[b].total_cmp(&grass_noise[a]).then(a.cmp(&b)));
    let n_grass = ((config.grass_fraction * n as f64).round() as usize).min(open.len());
    let mut grass = vec![false; n];
    for &i in &open[..n_grass] {
        grass[i] = true;
    }

    let mut obstacle = vec![false; n];
    for r in 0..rows {
        for c in 0..cols {
            if r < BORDER_CELLS || c < BORDER_CELLS || r >= rows - BORDER_CELLS || c >= cols - BORDER_CELLS {
                obstacle[r * cols + c] = true;
            }
        }
    }

    let mut rng = stream(seed, "obstacles", attempt);
    let cell_area = cs * cs;
    let canopy_cells: Vec<usize> = (0..n).filter(|&i| canopy[i]).collect();
    let open_cells: Vec<usize> = (0..n).filter(|&i| !canopy[i]).collect();
    for (cells, density) in [(&canopy_cells, config.tree_density), (&open_cells, config.rock_density)] {
        if cells.is_empty() {
            continue;
        }
        let count = (density * cells.len() as f64 * cell_area).round() as usize;
        for _ in 0..count {
            let i = cells[rng.random_range(0..cells.len())];
            let (cx, cy) = (
                centers[i].0 + rng.random_range(-0.5..0.5) * cs,
                centers[i].1 + rng.random_range(-0.5..0.5) * cs,
            );
            let radius = if config.obstacle_radius_max_m > config.obstacle_radius_min_m {
                rng.random_range(config.obstacle_radius_min_m..config.obstacle_radius_max_m)
            } else {
                config.obstacle_radius_min_m
            };
            paint_disc(&mut obstacle, cols, rows, cs, cx, cy, radius);
        }
    }

    let obstacle_class = (config.num_classes - 1) as u8;
    for (cls, &blocked) in classes.iter_mut().zip(&obstacle) {
        if blocked {
            *cls = obstacle_class;
        }
    }

    WorldMap {
        config: config.clone(),
        seed,
        cols,
        rows,
        cell_size: cs,
        classes,
        obstacle,
        canopy,
        grass,
    }
}

fn paint_disc(mask: &mut [bool], cols: usize, rows: usize, cs: f64, cx: f64, cy: f64, radius: f64) {
    let c_lo = ((cx - radius) / cs).floor().max(0.0) as usize;
    let c_hi = (((cx + radius) / cs).ceil() as usize).min(cols - 1);
    let r_lo = ((cy - radius) / cs).floor().max(0.0) as usize;
    let r_hi = (((cy + radius) / cs).ceil() as usize).min(rows - 1);
    for r in r_lo..=r_hi {
        for c in c_lo..=c_hi {
            let (x, y) = ((c as f64 + 0.5) * cs, (r as f64 + 0.5) * cs);
            if (x - cx).powi(2) + (y - cy).powi(2) <= radius * radius {
                mask[r * cols + c] = true;
            }
        }
    }
}
