//! Synthetic ground-camera and aerial-patch rasters.
//!
//! Both views share one palette and one per-cell texture hash, so a terrain
//! cell that both views can see shows the same colour in each.

use std::io::Write;
use std::path::Path;

use crate::config::CameraConfig;
use crate::error::{CoreError, Result};
use crate::rng::{derive_seed, lattice_unit};
use crate::sim::vehicle::VehicleState;
use crate::sim::world::WorldMap;
use crate::terrain::TerrainClass;

/// 8-bit RGB raster, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl Frame {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0; height * width * 3],
        }
    }

    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    fn set(&mut self, row: usize, col: usize, rgb: [f64; 3]) {
        let i = (row * self.width + col) * 3;
        for (k, v) in rgb.iter().enumerate() {
            self.data[i + k] = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }

    /// Binary PPM (P6).
    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| CoreError::io(path, e))?;
        write!(f, "P6\n{} {}\n255\n", self.width, self.height).map_err(|e| CoreError::io(path, e))?;
        f.write_all(&self.data).map_err(|e| CoreError::io(path, e))
    }
}

const TERRAIN_COLORS: [[u8; 3]; 5] = [
    [210, 195, 140],
    [140, 110, 60],
    [70, 70, 130],
    [200, 120, 170],
    [90, 170, 190],
];
pub const OBSTACLE_COLOR: [u8; 3] = [20, 20, 20];
pub const CANOPY_COLOR: [u8; 3] = [30, 100, 40];
pub const GRASS_COLOR: [u8; 3] = [130, 215, 60];
pub const SKY_COLOR: [u8; 3] = [170, 205, 240];
pub const FOG_COLOR: [u8; 3] = [185, 185, 185];
pub const BORDER_COLOR: [u8; 3] = [255, 0, 255];

/// Maximum number of non-obstacle classes the palette can show.
pub const MAX_TERRAIN_CLASSES: usize = TERRAIN_COLORS.len();

/// Base colour of a class; the top class uses the obstacle colour.
pub fn class_color(class: TerrainClass, num_classes: usize) -> [u8; 3] {
    if class.is_obstacle(num_classes) {
        OBSTACLE_COLOR
    } else {
        TERRAIN_COLORS[class.index().min(TERRAIN_COLORS.len() - 1)]
    }
}

#[derive(Clone, Copy)]
enum Surface {
    Terrain(usize, usize),
    Obstacle(usize, usize),
    Grass(usize, usize),
    Canopy(usize, usize),
    Flat([u8; 3]),
}

fn unit(c: [u8; 3]) -> [f64; 3] {
    [c[0] as f64 / 255.0, c[1] as f64 / 255.0, c[2] as f64 / 255.0]
}

fn textured(world: &WorldMap, noise: f64, base: [u8; 3], col: usize, row: usize, layer: u64) -> [f64; 3] {
    let seed = derive_seed(world.seed, "texture", layer);
    let b = unit(base);
    std::array::from_fn(|k| b[k] + noise * (2.0 * lattice_unit(seed, col as i64, row as i64, k as u64) - 1.0))
}

fn shade(world: &WorldMap, cam: &CameraConfig, s: Surface) -> [f64; 3] {
    let n = cam.texture_noise;
    match s {
        Surface::Terrain(c, r) => {
            let cls = TerrainClass(world.classes[world.index(c, r)]);
            textured(world, n, class_color(cls, world.num_classes()), c, r, 0)
        }
        Surface::Obstacle(c, r) => textured(world, n, OBSTACLE_COLOR, c, r, 1),
        Surface::Grass(c, r) => textured(world, n, GRASS_COLOR, c, r, 2),
        Surface::Canopy(c, r) => textured(world, n, CANOPY_COLOR, c, r, 3),
        Surface::Flat(rgb) => unit(rgb),
    }
}

/// What a single ground-camera pixel ray sees.
///
/// `(hx, hy)` is the unit horizontal direction and `tz` the ray's rise per
/// metre of horizontal travel.
fn trace_ground_ray(world: &WorldMap, cam: &CameraConfig, x: f64, y: f64, hx: f64, hy: f64, tz: f64) -> Surface {
    let h = cam.camera_height_m;
    let ground_at = if tz < 0.0 { h / -tz } else { f64::INFINITY };
    let limit = ground_at.min(cam.view_depth_m);
    let ds = world.cell_size / 4.0;
    let mut grass_travel = 0.0;
    let mut s = 0.0;
    while s < limit {
        let (px, py) = (x + s * hx, y + s * hy);
        let z = h + s * tz;
        let Some((c, r)) = world.cell_at(px, py) else {
            return Surface::Flat(BORDER_COLOR);
        };
        let i = world.index(c, r);
        if world.obstacle[i] && z <= cam.obstacle_height_m {
            return Surface::Obstacle(c, r);
        }
        if world.grass[i] && z <= cam.grass_height_m {
            grass_travel += ds;
            if grass_travel > cam.grass_view_depth_m {
                return Surface::Grass(c, r);
            }
        }
        s += ds;
    }
    if ground_at <= cam.view_depth_m {
        match world.cell_at(x + ground_at * hx, y + ground_at * hy) {
            Some((c, r)) if world.obstacle[world.index(c, r)] => Surface::Obstacle(c, r),
            Some((c, r)) => Surface::Terrain(c, r),
            None => Surface::Flat(BORDER_COLOR),
        }
    } else if tz >= 0.0 {
        Surface::Flat(SKY_COLOR)
    } else {
        Surface::Flat(FOG_COLOR)
    }
}

/// Forward-facing perspective camera pitched down toward the ground.
pub fn render_ground(world: &WorldMap, state: &VehicleState, cam: &CameraConfig) -> Frame {
    let (hgt, wid) = (cam.ground_height_px, cam.ground_width_px);
    let mut frame = Frame::new(hgt, wid);
    let focal = (wid as f64 / 2.0) / (cam.hfov_deg.to_radians() / 2.0).tan();
    let pitch = cam.pitch_deg.to_radians();
    let (sp, cp) = pitch.sin_cos();
    let (sh, ch) = state.heading.sin_cos();
    for row in 0..hgt {
        let v = (row as f64 + 0.5 - hgt as f64 / 2.0) / focal;
        for col in 0..wid {
            let u = (col as f64 + 0.5 - wid as f64 / 2.0) / focal;
            // Camera-frame ray (forward, right, down) rotated into
            // (forward, right, up) vehicle axes.
            let fwd = cp - v * sp;
            let right = u;
            let up = -sp - v * cp;
            let horiz = (fwd * fwd + right * right).sqrt();
            let (f, r) = (fwd / horiz, right / horiz);
            // Right of the heading is clockwise in world coordinates.
            let hx = f * ch + r * sh;
            let hy = f * sh - r * ch;
            let s = trace_ground_ray(world, cam, state.x, state.y, hx, hy, up / horiz);
            frame.set(row, col, shade(world, cam, s));
        }
    }
    frame
}

/// World point sampled by aerial texel `(row, col)`: the patch is aligned
/// with the vehicle, row 0 is the far edge and column 0 the left edge.
pub fn aerial_sample_point(state: &VehicleState, cam: &CameraConfig, row: usize, col: usize) -> (f64, f64) {
    let (hgt, wid) = (cam.aerial_height_px as f64, cam.aerial_width_px as f64);
    let forward = cam.patch_ahead_m + cam.patch_forward_m / 2.0 - (row as f64 + 0.5) / hgt * cam.patch_forward_m;
    let left = cam.patch_lateral_m / 2.0 - (col as f64 + 0.5) / wid * cam.patch_lateral_m;
    let (sh, ch) = state.heading.sin_cos();
    (state.x + forward * ch - left * sh, state.y + forward * sh + left * ch)
}

/// Top-down orthographic patch. Canopy hides everything beneath it.
pub fn render_aerial(world: &WorldMap, state: &VehicleState, cam: &CameraConfig) -> Frame {
    let mut frame = Frame::new(cam.aerial_height_px, cam.aerial_width_px);
    for row in 0..cam.aerial_height_px {
        for col in 0..cam.aerial_width_px {
            let (px, py) = aerial_sample_point(state, cam, row, col);
            let s = match world.cell_at(px, py) {
                None => Surface::Flat(BORDER_COLOR),
                Some((c, r)) => {
                    let i = world.index(c, r);
                    if world.canopy[i] {
                        Surface::Canopy(c, r)
                    } else if world.obstacle[i] {
                        Surface::Obstacle(c, r)
                    } else {
                        Surface::Terrain(c, r)
                    }
                }
            };
            frame.set(row, col, shade(world, cam, s));
        }
    }
    frame
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Profile, RunConfig};

    fn uniform_world(class: u8) -> WorldMap {
        let mut cfg = RunConfig::profile(Profile::Desk).world;
        cfg.width_m = 20.0;
        cfg.height_m = 20.0;
        let (cols, rows) = (80, 80);
        WorldMap {
            config: cfg,
            seed: 3,
            cols,
            rows,
            cell_size: 0.25,
            classes: vec![class; cols * rows],
            obstacle: vec![false; cols * rows],
            canopy: vec![false; cols * rows],
            grass: vec![false; cols * rows],
        }
    }

    fn cam() -> CameraConfig {
        RunConfig::profile(Profile::Desk).camera
    }

    fn in_band(px: [u8; 3], base: [u8; 3], noise: f64) -> bool {
        let tol = (noise * 255.0).ceil() as i32 + 1;
        px.iter().zip(base).all(|(&p, b)| (p as i32 - b as i32).abs() <= tol)
    }

    #[test]
    fn uniform_class_renders_in_band() {
        let w = uniform_world(1);
        let s = VehicleState { x: 10.0, y: 10.0, heading: 0.4, speed: 1.0, wheelbase: 0.5 };
        let base = class_color(TerrainClass(1), 4);
        let g = render_ground(&w, &s, &cam());
        let mut ground_px = 0;
        for r in 0..g.height {
            for c in 0..g.width {
                let p = g.pixel(r, c);
                if p == SKY_COLOR || p == FOG_COLOR {
                    continue;
                }
                assert!(in_band(p, base, cam().texture_noise), "{p:?}");
                ground_px += 1;
            }
        }
        assert!(ground_px * 2 > g.height * g.width);
        let a = render_aerial(&w, &s, &cam());
        for r in 0..a.height {
            for c in 0..a.width {
                assert!(in_band(a.pixel(r, c), base, cam().texture_noise));
            }
        }
    }

    #[test]
    fn renders_are_deterministic() {
        let w = uniform_world(0);
        let s = VehicleState { x: 7.0, y: 9.0, heading: -1.0, speed: 1.0, wheelbase: 0.5 };
        assert_eq!(render_ground(&w, &s, &cam()), render_ground(&w, &s, &cam()));
        assert_eq!(render_aerial(&w, &s, &cam()), render_aerial(&w, &s, &cam()));
    }

    #[test]
    fn obstacle_occludes_terrain_behind_it() {
        let mut w = uniform_world(0);
        // A 3-cell-wide wall across a corridor 2 m ahead, class 2 beyond it.
        let s = VehicleState { x: 10.0, y: 10.0, heading: 0.0, speed: 1.0, wheelbase: 0.5 };
        for r in 0..w.rows {
            for c in 0..w.cols {
                let x = (c as f64 + 0.5) * 0.25;
                if (12.0..12.75).contains(&x) {
                    let i = w.index(c, r);
                    w.obstacle[i] = true;
                    w.classes[i] = 3;
                } else if x >= 12.75 {
                    let i = w.index(c, r);
                    w.classes[i] = 2;
                }
            }
        }
        let g = render_ground(&w, &s, &cam());
        let rough = class_color(TerrainClass(2), 4);
        let mut obstacle_px = 0;
        for r in 0..g.height {
            for c in 0..g.width {
                let p = g.pixel(r, c);
                assert!(!in_band(p, rough, cam().texture_noise), "terrain behind the wall visible at {r},{c}");
                obstacle_px += in_band(p, OBSTACLE_COLOR, cam().texture_noise) as usize;
            }
        }
        assert!(obstacle_px > 0);
    }

    #[test]
    fn heading_rotation_rotates_footprint() {
        let c = cam();
        let north = VehicleState { x: 10.0, y: 10.0, heading: std::f64::consts::FRAC_PI_2, speed: 1.0, wheelbase: 0.5 };
        let east = VehicleState { heading: 0.0, ..north };
        for r in 0..c.aerial_height_px {
            for k in 0..c.aerial_width_px {
                let (ex, ey) = aerial_sample_point(&east, &c, r, k);
                let (nx, ny) = aerial_sample_point(&north, &c, r, k);
                // Rotating the east footprint by +90° about the vehicle gives north.
                let (rx, ry) = (10.0 - (ey - 10.0), 10.0 + (ex - 10.0));
                assert!((rx - nx).abs() < 1e-9 && (ry - ny).abs() < 1e-9);
            }
        }
        let (fx, _) = aerial_sample_point(&east, &c, c.aerial_height_px / 2, c.aerial_width_px / 2);
        assert!((fx - 10.0 - c.patch_ahead_m).abs() <= c.patch_forward_m / c.aerial_height_px as f64);
    }

    #[test]
    fn full_canopy_hides_terrain() {
        let mut w = uniform_world(0);
        w.canopy.iter_mut().for_each(|v| *v = true);
        let s = VehicleState { x: 10.0, y: 10.0, heading: 1.0, speed: 1.0, wheelbase: 0.5 };
        let a = render_aerial(&w, &s, &cam());
        let smooth = class_color(TerrainClass(0), 4);
        for r in 0..a.height {
            for c in 0..a.width {
                assert!(!in_band(a.pixel(r, c), smooth, cam().texture_noise));
                assert!(in_band(a.pixel(r, c), CANOPY_COLOR, cam().texture_noise));
            }
        }
        // The ground camera still sees the terrain under canopy.
        let g = render_ground(&w, &s, &cam());
        assert!((0..g.height).any(|r| in_band(g.pixel(r, 16), smooth, cam().texture_noise)));
    }

    #[test]
    fn grass_shortens_ground_view_only() {
        let open = uniform_world(0);
        let mut grassy = uniform_world(0);
        grassy.grass.iter_mut().for_each(|v| *v = true);
        let s = VehicleState { x: 10.0, y: 10.0, heading: 0.0, speed: 1.0, wheelbase: 0.5 };
        let count = |f: &Frame| {
            let smooth = class_color(TerrainClass(0), 4);
            (0..f.height)
                .flat_map(|r| (0..f.width).map(move |c| (r, c)))
                .filter(|&(r, c)| in_band(f.pixel(r, c), smooth, cam().texture_noise))
                .count()
        };
        assert!(count(&render_ground(&grassy, &s, &cam())) < count(&render_ground(&open, &s, &cam())) / 4);
        assert_eq!(render_aerial(&grassy, &s, &cam()), render_aerial(&open, &s, &cam()));
    }

    #[test]
    fn out_of_bounds_texels_use_border_color() {
        let w = uniform_world(0);
        let s = VehicleState { x: 0.5, y: 10.0, heading: std::f64::consts::PI, speed: 1.0, wheelbase: 0.5 };
        let a = render_aerial(&w, &s, &cam());
        assert_eq!(a.pixel(0, a.width / 2), BORDER_COLOR);
    }

    #[test]
    fn palette_bands_are_separated() {
        let mut colors: Vec<[u8; 3]> = TERRAIN_COLORS.to_vec();
        colors.extend([OBSTACLE_COLOR, CANOPY_COLOR, GRASS_COLOR]);
        for (i, a) in colors.iter().enumerate() {
            for b in &colors[i + 1..] {
                let gap = a.iter().zip(b).map(|(x, y)| (*x as i32 - *y as i32).abs()).max().unwrap();
                assert!(gap >= 60, "{a:?} vs {b:?}");
            }
        }
    }
}
