//! Self-supervised terrain labels from vibration and range readings.
//!
//! Each vibration window becomes a 16-value feature (15 spectral bins plus
//! the window RMS). K-means groups the features, and clusters are then
//! renamed to ordinal classes by ascending mean RMS. Range readings below
//! a threshold override the clustered class with the obstacle class.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{invalid, CoreError, Result};
use crate::rng::stream;
use crate::terrain::TerrainClass;

pub const SPECTRAL_BINS: usize = 15;
pub const FEATURE_DIMS: usize = SPECTRAL_BINS + 1;
/// Upper edge of the histogram, in Hz.
pub const SPECTRUM_MAX_HZ: f64 = 30.0;

pub fn rms(window: &[f64]) -> f64 {
    if window.is_empty() {
        return 0.0;
    }
    (window.iter().map(|v| v * v).sum::<f64>() / window.len() as f64).sqrt()
}

/// Magnitudes of the positive-frequency DFT terms of the mean-removed
/// window, paired with their frequencies.
pub fn dft_magnitudes(window: &[f64], rate_hz: f64) -> Vec<(f64, f64)> {
    let n = window.len();
    if n < 2 {
        return Vec::new();
    }
    let mean = window.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = window.iter().map(|v| Complex::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    (1..=n / 2).map(|k| (k as f64 * rate_hz / n as f64, buf[k].norm())).collect()
}

/// 15 equal-width bins over `[0, 30]` Hz; each bin sums the magnitudes
/// whose frequency falls inside it. Terms above 30 Hz land in the last bin.
pub fn spectral_histogram(window: &[f64], rate_hz: f64) -> [f64; SPECTRAL_BINS] {
    let width = SPECTRUM_MAX_HZ / SPECTRAL_BINS as f64;
    let mut bins = [0.0; SPECTRAL_BINS];
    for (f, mag) in dft_magnitudes(window, rate_hz) {
        let b = ((f / width).floor() as usize).min(SPECTRAL_BINS - 1);
        bins[b] += mag;
    }
    bins
}

pub fn feature(window: &[f64], rate_hz: f64) -> [f64; FEATURE_DIMS] {
    let bins = spectral_histogram(window, rate_hz);
    let mut out = [0.0; FEATURE_DIMS];
    out[..SPECTRAL_BINS].copy_from_slice(&bins);
    out[SPECTRAL_BINS] = rms(window);
    out
}

pub fn obstacle_label(min_range: f64, threshold: f64) -> bool {
    min_range < threshold
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub centroids: Vec<Vec<f64>>,
    /// Ordinal class of each cluster id.
    pub cluster_to_class: Vec<usize>,
    pub mean_rms_per_cluster: Vec<f64>,
    pub inertia: f64,
    pub seed: u64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; the lowest index wins a tie.
fn nearest(centroids: &[Vec<f64>], p: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, p);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

fn plus_plus_seed<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut pick = points.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if target < *d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[next].clone());
        let c = centroids.last().unwrap();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, c));
        }
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, max_iter: usize) -> (Vec<Vec<f64>>, Vec<usize>, f64) {
    let dims = points[0].len();
    let mut assign: Vec<usize> = points.iter().map(|p| nearest(&centroids, p)).collect();
    for _ in 0..max_iter {
        let mut sums = vec![vec![0.0; dims]; centroids.len()];
        let mut counts = vec![0usize; centroids.len()];
        for (p, &a) in points.iter().zip(&assign) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for (c, (s, n)) in centroids.iter_mut().zip(sums.into_iter().zip(&counts)) {
            if *n > 0 {
                *c = s.into_iter().map(|v| v / *n as f64).collect();
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(&centroids, p)).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    let inertia = points.iter().zip(&assign).map(|(p, &a)| sq_dist(p, &centroids[a])).sum();
    (centroids, assign, inertia)
}

/// K-means with k-means++ seeding, `restarts` independent runs and the
/// lowest-inertia run kept. The last coordinate of every point is taken to
/// be its RMS, which orders the clusters.
pub fn kmeans_fit(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize, restarts: usize) -> Result<ClusterModel> {
    if k == 0 || points.is_empty() {
        return Err(invalid("k-means needs k >= 1 and at least one point"));
    }
    let dims = points[0].len();
    if dims == 0 || points.iter().any(|p| p.len() != dims || p.iter().any(|v| !v.is_finite())) {
        return Err(invalid("k-means points must be finite and equally long"));
    }
    let mut distinct: Vec<&Vec<f64>> = points.iter().collect();
    distinct.sort_by(|a, b| a.iter().zip(b.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    distinct.dedup();
    if distinct.len() < k {
        return Err(invalid(format!("k = {k} exceeds {} distinct points", distinct.len())));
    }

    let mut best: Option<(Vec<Vec<f64>>, Vec<usize>, f64)> = None;
    for r in 0..restarts.max(1) {
        let mut rng = stream(seed, "kmeans", r as u64);
        let run = lloyd(points, plus_plus_seed(points, k, &mut rng), max_iter);
        if best.as_ref().is_none_or(|b| run.2 < b.2) {
            best = Some(run);
        }
    }
    let (centroids, assign, inertia) = best.unwrap();

    let mut rms_sum = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(&assign) {
        rms_sum[a] += p[dims - 1];
        counts[a] += 1;
    }
    let mean_rms: Vec<f64> = rms_sum
        .iter()
        .zip(&counts)
        .zip(&centroids)
        .map(|((s, &n), c)| if n > 0 { s / n as f64 } else { c[dims - 1] })
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| mean_rms[a].total_cmp(&mean_rms[b]).then(a.cmp(&b)));
    let mut cluster_to_class = vec![0; k];
    for (class, &cluster) in order.iter().enumerate() {
        cluster_to_class[cluster] = class;
    }
    Ok(ClusterModel {
        centroids,
        cluster_to_class,
        mean_rms_per_cluster: mean_rms,
        inertia,
        seed,
    })
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    /// Nearest centroid's class; equidistant centroids resolve to the lower
    /// class.
    pub fn assign_class(&self, feature: &[f64]) -> TerrainClass {
        let mut best: Option<(f64, usize)> = None;
        for (c, centroid) in self.centroids.iter().enumerate() {
            let d = sq_dist(centroid, feature);
            let class = self.cluster_to_class[c];
            let better = match best {
                None => true,
                Some((bd, bc)) => d < bd || (d == bd && class < bc),
            };
            if better {
                best = Some((d, class));
            }
        }
        TerrainClass(best.map_or(0, |b| b.1) as u8)
    }

    /// Final label for one timestep: the clustered class, unless the range
    /// reading says an obstacle is close.
    pub fn label(&self, window: &[f64], rate_hz: f64, min_range: f64, threshold: f64, num_classes: usize) -> TerrainClass {
        if obstacle_label(min_range, threshold) {
            TerrainClass::obstacle(num_classes)
        } else {
            self.assign_class(&feature(window, rate_hz))
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "format = offroad-clusters");
        let _ = writeln!(s, "version = 1");
        let _ = writeln!(s, "k = {}", self.k());
        let _ = writeln!(s, "dims = {}", self.centroids.first().map_or(0, Vec::len));
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "inertia = {:?}", self.inertia);
        for (i, c) in self.centroids.iter().enumerate() {
            let row: Vec<String> = c.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(s, "centroid.{i} = {}", row.join(" "));
            let _ = writeln!(s, "class.{i} = {}", self.cluster_to_class[i]);
            let _ = writeln!(s, "mean_rms.{i} = {:?}", self.mean_rms_per_cluster[i]);
        }
        s
    }

    pub fn from_text(text: &str) -> std::result::Result<Self, String> {
        let mut kv = std::collections::BTreeMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line.split_once('=').ok_or_else(|| format!("expected key = value, got `{line}`"))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| kv.get(k).cloned().ok_or_else(|| format!("missing `{k}`"));
        if get("format")? != "offroad-clusters" || get("version")? != "1" {
            return Err("not a version-1 cluster model".into());
        }
        let num = |k: &str| -> std::result::Result<f64, String> { get(k)?.parse().map_err(|e| format!("{k}: {e}")) };
        let int = |k: &str| -> std::result::Result<usize, String> { get(k)?.parse().map_err(|e| format!("{k}: {e}")) };
        let k = int("k")?;
        let dims = int("dims")?;
        let mut model = ClusterModel {
            centroids: Vec::with_capacity(k),
            cluster_to_class: Vec::with_capacity(k),
            mean_rms_per_cluster: Vec::with_capacity(k),
            inertia: num("inertia")?,
            seed: get("seed")?.parse().map_err(|e| format!("seed: {e}"))?,
        };
        for i in 0..k {
            let row: std::result::Result<Vec<f64>, _> = get(&format!("centroid.{i}"))?.split_whitespace().map(str::parse).collect();
            let row = row.map_err(|e| format!("centroid.{i}: {e}"))?;
            if row.len() != dims {
                return Err(format!("centroid.{i} has {} values, expected {dims}", row.len()));
            }
            model.centroids.push(row);
            model.cluster_to_class.push(int(&format!("class.{i}"))?);
            model.mean_rms_per_cluster.push(num(&format!("mean_rms.{i}"))?);
        }
        let mut sorted = model.cluster_to_class.clone();
        sorted.sort_unstable();
        if sorted != (0..k).collect::<Vec<_>>() {
            return Err("cluster classes are not a permutation".into());
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| CoreError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        Self::from_text(&text).map_err(|r| CoreError::format("cluster model", path, r))
    }
}
