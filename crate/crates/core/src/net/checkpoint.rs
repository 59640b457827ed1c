//! Checkpoint layout (all integers little-endian):
//!
//! ```text
//! "OFFRDNET"            8-byte magic
//! u32 version
//! u32 n, n bytes        architecture as key = value text
//! u32 blocks
//! per block:            u32 name length, name, u32 rank, rank × u64 dims,
//!                       product(dims) × f64
//! u8 has_optimizer
//! if set:               u64 step count, 4 × f64 (α, β1, β2, ε), then the
//!                       first- and second-moment blocks in parameter order
//! ```

use std::path::Path;

use offroad_nn::{AdamConfig, AdamState, Tensor};

use crate::error::{CoreError, Result};
use crate::net::arch::Architecture;
use crate::net::model::TerrainNet;

const MAGIC: &[u8; 8] = b"OFFRDNET";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: TerrainNet,
    pub optimizer: Option<AdamState>,
}

fn put_block(out: &mut Vec<u8>, name: &str, t: &Tensor) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn checkpoint_bytes(net: &TerrainNet, optimizer: Option<&AdamState>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let text = net.arch.to_text();
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    let named = net.named_tensors();
    out.extend_from_slice(&(named.len() as u32).to_le_bytes());
    for (name, t) in &named {
        put_block(&mut out, name, t);
    }
    match optimizer {
        None => out.push(0),
        Some(adam) => {
            out.push(1);
            out.extend_from_slice(&adam.step_count.to_le_bytes());
            let c = adam.config;
            for v in [c.learning_rate, c.beta1, c.beta2, c.epsilon] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            for (moments, tag) in [(&adam.first_moment, "m"), (&adam.second_moment, "v")] {
                for ((name, _), t) in named.iter().zip(moments) {
                    put_block(&mut out, &format!("{tag}:{name}"), t);
                }
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

type R<T> = std::result::Result<T, String>;

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> R<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or("truncated file")?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> R<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> R<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> R<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn block(&mut self, expect_name: &str, expect_shape: &[usize]) -> R<Tensor> {
        let n = self.u32()? as usize;
        let name = std::str::from_utf8(self.take(n)?).map_err(|e| e.to_string())?;
        if name != expect_name {
            return Err(format!("expected block `{expect_name}`, found `{name}`"));
        }
        let rank = self.u32()? as usize;
        let shape = (0..rank).map(|_| self.u64().map(|d| d as usize)).collect::<R<Vec<_>>>()?;
        if shape != expect_shape {
            return Err(format!("block `{name}` has shape {shape:?}, architecture needs {expect_shape:?}"));
        }
        let len: usize = shape.iter().product();
        let data = (0..len).map(|_| self.f64()).collect::<R<Vec<_>>>()?;
        Tensor::new(&shape, data).map_err(|e| e.to_string())
    }
}

pub fn checkpoint_from_bytes(buf: &[u8]) -> R<Checkpoint> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err("bad magic".into());
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let n = r.u32()? as usize;
    let arch = Architecture::from_text(std::str::from_utf8(r.take(n)?).map_err(|e| e.to_string())?)?;
    // A zero-seeded template provides names and shapes; every value is
    // overwritten below.
    let mut net = TerrainNet::init(&arch, 0).map_err(|e| e.to_string())?;
    let blocks = r.u32()? as usize;
    let spec: Vec<(String, Vec<usize>)> = net.named_tensors().iter().map(|(n, t)| (n.clone(), t.shape().to_vec())).collect();
    if blocks != spec.len() {
        return Err(format!("{blocks} parameter blocks, architecture needs {}", spec.len()));
    }
    let mut loaded = Vec::with_capacity(spec.len());
    for (name, shape) in &spec {
        loaded.push(r.block(name, shape)?);
    }
    for (slot, t) in net.tensors_mut().into_iter().zip(loaded) {
        *slot = t;
    }
    let optimizer = match r.take(1)?[0] {
        0 => None,
        1 => {
            let step_count = r.u64()?;
            let config = AdamConfig {
                learning_rate: r.f64()?,
                beta1: r.f64()?,
                beta2: r.f64()?,
                epsilon: r.f64()?,
            };
            let mut moments = [Vec::new(), Vec::new()];
            for (m, tag) in moments.iter_mut().zip(["m", "v"]) {
                for (name, shape) in &spec {
                    m.push(r.block(&format!("{tag}:{name}"), shape)?);
                }
            }
            let [first_moment, second_moment] = moments;
            Some(AdamState {
                config,
                first_moment,
                second_moment,
                step_count,
            })
        }
        f => return Err(format!("bad optimizer flag {f}")),
    };
    if r.pos != buf.len() {
        return Err("trailing bytes".into());
    }
    Ok(Checkpoint { net, optimizer })
}

pub fn save_checkpoint(path: &Path, net: &TerrainNet, optimizer: Option<&AdamState>) -> Result<()> {
    std::fs::write(path, checkpoint_bytes(net, optimizer)).map_err(|e| CoreError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let buf = std::fs::read(path).map_err(|e| CoreError::io(path, e))?;
    checkpoint_from_bytes(&buf).map_err(|r| CoreError::format("checkpoint", path, r))
}
