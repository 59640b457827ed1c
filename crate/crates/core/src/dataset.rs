//! Dataset container: a text manifest followed by fixed-size binary
//! records.
//!
//! ```text
//! "OFFRDATA"             8-byte magic
//! u32 version
//! u32 n, n bytes         manifest, key = value lines
//! records × record       layout below, all little-endian
//!
//! record:
//!   u32 episode, u32 step
//!   f64 x, y, heading, action, min_range, distance
//!   u8 true_class, u8 label (255 = unlabeled), u8 collided, u8 reserved
//!   imu_samples × f64    vibration window
//!   Hg·Wg·3 × u8         ground image, row-major RGB
//!   Ha·Wa·3 × u8         aerial image, row-major RGB
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use offroad_nn::Tensor;

use crate::collect::{SampleIndex, TrajectoryRecord};
use crate::config::{InputMode, RunConfig};
use crate::error::{invalid, CoreError, Result};
use crate::net::ObservationBatch;
use crate::terrain::TerrainClass;

const MAGIC: &[u8; 8] = b"OFFRDATA";
const VERSION: u32 = 1;
const UNLABELED: u8 = 255;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHeader {
    pub profile: String,
    pub num_classes: usize,
    pub ground_hw: (usize, usize),
    pub aerial_hw: (usize, usize),
    pub imu_samples: usize,
    pub imu_rate_hz: f64,
    pub episodes: usize,
    pub world_seed: u64,
    pub collect_seed: u64,
    /// Seed of the cluster model that produced the labels, once labeled.
    pub labeling_seed: Option<u64>,
}

impl DatasetHeader {
    pub fn from_config(cfg: &RunConfig, world_seed: u64, collect_seed: u64, episodes: usize) -> Self {
        Self {
            profile: cfg.profile.to_string(),
            num_classes: cfg.world.num_classes,
            ground_hw: (cfg.camera.ground_height_px, cfg.camera.ground_width_px),
            aerial_hw: (cfg.camera.aerial_height_px, cfg.camera.aerial_width_px),
            imu_samples: cfg.imu.samples,
            imu_rate_hz: cfg.imu.rate_hz,
            episodes,
            world_seed,
            collect_seed,
            labeling_seed: None,
        }
    }

    fn record_size(&self) -> usize {
        8 + 6 * 8 + 4 + 8 * self.imu_samples + 3 * (self.ground_hw.0 * self.ground_hw.1 + self.aerial_hw.0 * self.aerial_hw.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    /// Episodes stored contiguously, in episode order.
    pub records: Vec<TrajectoryRecord>,
}

impl Dataset {
    pub fn from_episodes(header: DatasetHeader, episodes: Vec<Vec<TrajectoryRecord>>) -> Self {
        Self {
            header,
            records: episodes.into_iter().flatten().collect(),
        }
    }

    pub fn is_labeled(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.label.is_some())
    }

    pub fn manifest(&self) -> String {
        let h = &self.header;
        let mut s = String::new();
        let _ = writeln!(s, "profile = {}", h.profile);
        let _ = writeln!(s, "num_classes = {}", h.num_classes);
        let _ = writeln!(s, "ground_hw = {},{}", h.ground_hw.0, h.ground_hw.1);
        let _ = writeln!(s, "aerial_hw = {},{}", h.aerial_hw.0, h.aerial_hw.1);
        let _ = writeln!(s, "imu_samples = {}", h.imu_samples);
        let _ = writeln!(s, "imu_rate_hz = {:?}", h.imu_rate_hz);
        let _ = writeln!(s, "episodes = {}", h.episodes);
        let _ = writeln!(s, "records = {}", self.records.len());
        let _ = writeln!(s, "labeled = {}", self.is_labeled());
        let _ = writeln!(s, "world_seed = {}", h.world_seed);
        let _ = writeln!(s, "collect_seed = {}", h.collect_seed);
        if let Some(seed) = h.labeling_seed {
            let _ = writeln!(s, "labeling_seed = {seed}");
        }
        let _ = writeln!(s, "record_bytes = {}", h.record_size());
        s
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let h = &self.header;
        let manifest = self.manifest();
        let mut out = Vec::with_capacity(16 + manifest.len() + self.records.len() * h.record_size());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
        out.extend_from_slice(manifest.as_bytes());
        let (gl, al) = (3 * h.ground_hw.0 * h.ground_hw.1, 3 * h.aerial_hw.0 * h.aerial_hw.1);
        for r in &self.records {
            if r.vibration.len() != h.imu_samples || r.ground.len() != gl || r.aerial.len() != al {
                return Err(invalid(format!("record {}/{} does not match the dataset layout", r.episode, r.step)));
            }
            out.extend_from_slice(&r.episode.to_le_bytes());
            out.extend_from_slice(&r.step.to_le_bytes());
            for v in [r.x, r.y, r.heading, r.action, r.min_range, r.distance] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend_from_slice(&[r.true_class.0, r.label.map_or(UNLABELED, |l| l.0), r.collided as u8, 0]);
            for v in &r.vibration {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend_from_slice(&r.ground);
            out.extend_from_slice(&r.aerial);
        }
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8]) -> std::result::Result<Self, String> {
        if buf.len() < 16 || &buf[..8] != MAGIC {
            return Err("bad magic".into());
        }
        let version = u32::from_le_bytes(buf[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let n = u32::from_le_bytes(buf[12..16].try_into().unwrap()) as usize;
        let text = buf.get(16..16 + n).ok_or("truncated manifest")?;
        let text = std::str::from_utf8(text).map_err(|e| e.to_string())?;
        let mut kv = BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| format!("bad manifest line `{line}`"))?;
            kv.insert(k.trim(), v.trim());
        }
        let get = |k: &str| kv.get(k).copied().ok_or_else(|| format!("manifest lacks `{k}`"));
        fn parse<T: std::str::FromStr>(k: &str, v: &str) -> std::result::Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            v.parse().map_err(|e| format!("{k}: {e}"))
        }
        let pair = |k: &str| -> std::result::Result<(usize, usize), String> {
            let v = get(k)?;
            let (a, b) = v.split_once(',').ok_or_else(|| format!("{k}: expected two values"))?;
            Ok((parse(k, a.trim())?, parse(k, b.trim())?))
        };
        let header = DatasetHeader {
            profile: get("profile")?.to_string(),
            num_classes: parse("num_classes", get("num_classes")?)?,
            ground_hw: pair("ground_hw")?,
            aerial_hw: pair("aerial_hw")?,
            imu_samples: parse("imu_samples", get("imu_samples")?)?,
            imu_rate_hz: parse("imu_rate_hz", get("imu_rate_hz")?)?,
            episodes: parse("episodes", get("episodes")?)?,
            world_seed: parse("world_seed", get("world_seed")?)?,
            collect_seed: parse("collect_seed", get("collect_seed")?)?,
            labeling_seed: kv.get("labeling_seed").map(|v| parse("labeling_seed", v)).transpose()?,
        };
        let count: usize = parse("records", get("records")?)?;
        let size = header.record_size();
        let body = &buf[16 + n..];
        if body.len() != count * size {
            return Err(format!("expected {count} records of {size} bytes, found {} bytes", body.len()));
        }
        let (gl, al) = (3 * header.ground_hw.0 * header.ground_hw.1, 3 * header.aerial_hw.0 * header.aerial_hw.1);
        let mut records = Vec::with_capacity(count);
        for chunk in body.chunks_exact(size) {
            let u32_at = |o: usize| u32::from_le_bytes(chunk[o..o + 4].try_into().unwrap());
            let f64_at = |o: usize| f64::from_le_bytes(chunk[o..o + 8].try_into().unwrap());
            let flags = &chunk[56..60];
            if flags[0] as usize >= header.num_classes || (flags[1] != UNLABELED && flags[1] as usize >= header.num_classes) {
                return Err("class byte out of range".into());
            }
            let vib_end = 60 + 8 * header.imu_samples;
            records.push(TrajectoryRecord {
                episode: u32_at(0),
                step: u32_at(4),
                x: f64_at(8),
                y: f64_at(16),
                heading: f64_at(24),
                action: f64_at(32),
                min_range: f64_at(40),
                distance: f64_at(48),
                true_class: TerrainClass(flags[0]),
                label: (flags[1] != UNLABELED).then_some(TerrainClass(flags[1])),
                collided: flags[2] != 0,
                vibration: (0..header.imu_samples).map(|i| f64_at(60 + 8 * i)).collect(),
                ground: chunk[vib_end..vib_end + gl].to_vec(),
                aerial: chunk[vib_end + gl..vib_end + gl + al].to_vec(),
            });
        }
        Ok(Self { header, records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| CoreError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = std::fs::read(path).map_err(|e| CoreError::io(path, e))?;
        Self::from_bytes(&buf).map_err(|r| CoreError::format("dataset", path, r))
    }

    /// Stacks `M` frames per sample into `[B, H, W, 3·M]`, oldest frame in
    /// the first three channels. Views the mode ignores are left out.
    pub fn observation_batch(&self, samples: &[SampleIndex], history: usize, mode: InputMode) -> ObservationBatch {
        let frames = |pick: fn(&TrajectoryRecord) -> &[u8]| -> Vec<Vec<&[u8]>> {
            samples
                .iter()
                .map(|s| (0..history).map(|f| pick(&self.records[s.anchor + 1 + f - history])).collect())
                .collect()
        };
        ObservationBatch {
            ground: mode.uses_ground().then(|| stack_frames(&frames(|r| &r.ground), self.header.ground_hw)),
            aerial: mode.uses_aerial().then(|| stack_frames(&frames(|r| &r.aerial), self.header.aerial_hw)),
        }
    }

    /// Actions following each anchor, `[B, H]`.
    pub fn action_batch(&self, samples: &[SampleIndex], horizon: usize) -> Tensor {
        Tensor::from_fn(&[samples.len(), horizon], |i| self.records[samples[i / horizon].anchor + 1 + i % horizon].action)
    }

    /// Labels following each anchor; fails on unlabeled records.
    pub fn label_batch(&self, samples: &[SampleIndex], horizon: usize) -> Result<Vec<Vec<usize>>> {
        samples
            .iter()
            .map(|s| {
                (1..=horizon)
                    .map(|i| {
                        self.records[s.anchor + i]
                            .label
                            .map(TerrainClass::index)
                            .ok_or_else(|| invalid("dataset is not labeled; run the label step first"))
                    })
                    .collect()
            })
            .collect()
    }
}

/// `[B, H, W, 3·M]` tensor from `B` lists of `M` RGB images, frame `f`
/// occupying channels `3f..3f+3`, scaled to [0, 1].
pub fn stack_frames(items: &[Vec<&[u8]>], hw: (usize, usize)) -> Tensor {
    let (h, w) = hw;
    let history = items.first().map_or(0, Vec::len);
    let c = 3 * history;
    let mut data = vec![0.0; items.len() * h * w * c];
    for (b, frames) in items.iter().enumerate() {
        for (f, img) in frames.iter().enumerate() {
            for p in 0..h * w {
                let base = (b * h * w + p) * c + 3 * f;
                for k in 0..3 {
                    data[base + k] = img[3 * p + k] as f64 / 255.0;
                }
            }
        }
    }
    Tensor::new(&[items.len(), h, w, c], data).expect("stack shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collect::{build_dataset, collect_episodes};
    use crate::config::{Profile, SamplingMode};
    use crate::sim::generate_world;

    fn small_cfg() -> RunConfig {
        let mut cfg = RunConfig::profile(Profile::Desk);
        cfg.world.width_m = 16.0;
        cfg.world.height_m = 16.0;
        cfg.collect.episodes = 3;
        cfg.collect.max_steps = 30;
        cfg
    }

    #[test]
    fn serialization_round_trips_bytes() {
        let cfg = small_cfg();
        let world = generate_world(&cfg.world, 1).unwrap();
        let eps = collect_episodes(&world, &cfg, 5).unwrap();
        let ds = Dataset::from_episodes(DatasetHeader::from_config(&cfg, 1, 5, 3), eps);
        let bytes = ds.to_bytes().unwrap();
        let back = Dataset::from_bytes(&bytes).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert!(Dataset::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn stacks_frames_oldest_first() {
        let cfg = small_cfg();
        let world = generate_world(&cfg.world, 2).unwrap();
        let eps = collect_episodes(&world, &cfg, 6).unwrap();
        let ds = Dataset::from_episodes(DatasetHeader::from_config(&cfg, 2, 6, 3), eps);
        let samples = build_dataset(&ds.records, 4, 8, SamplingMode::Time, 0.35);
        let s = samples[0];
        let obs = ds.observation_batch(&[s], 4, InputMode::Fusion);
        let g = obs.ground.unwrap();
        assert_eq!(g.shape(), &[1, 24, 32, 12]);
        // Channel 3·f of pixel 0 is frame f's red value.
        for f in 0..4 {
            let expect = ds.records[s.anchor - 3 + f].ground[0] as f64 / 255.0;
            assert_eq!(g.data()[3 * f], expect);
        }
        let a = ds.action_batch(&[s], 8);
        assert_eq!(a.data()[0], ds.records[s.anchor + 1].action);
        assert!(ds.label_batch(&[s], 8).is_err());
        assert!(ds.observation_batch(&[s], 4, InputMode::GroundOnly).aerial.is_none());
    }
}
