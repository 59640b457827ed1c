//! World files: magic, version, the generating config as key-value text,
//! then one class byte and one flag byte per cell.

use std::path::Path;

use crate::config::WorldConfig;
use crate::error::{CoreError, Result};
use crate::sim::world::WorldMap;

const MAGIC: &[u8; 8] = b"OFFRWRLD";
const VERSION: u32 = 1;
const FLAG_OBSTACLE: u8 = 1;
const FLAG_CANOPY: u8 = 2;
const FLAG_GRASS: u8 = 4;

pub fn world_bytes(world: &WorldMap) -> Vec<u8> {
    let text = toml::to_string(&world.config).expect("world config serializes");
    let mut out = Vec::with_capacity(64 + text.len() + 2 * world.classes.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    out.extend_from_slice(&world.seed.to_le_bytes());
    out.extend_from_slice(&(world.cols as u32).to_le_bytes());
    out.extend_from_slice(&(world.rows as u32).to_le_bytes());
    out.extend_from_slice(&world.cell_size.to_le_bytes());
    for i in 0..world.classes.len() {
        let flags = (world.obstacle[i] as u8 * FLAG_OBSTACLE)
            | (world.canopy[i] as u8 * FLAG_CANOPY)
            | (world.grass[i] as u8 * FLAG_GRASS);
        out.push(world.classes[i]);
        out.push(flags);
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or("truncated file")?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn world_from_bytes(buf: &[u8]) -> std::result::Result<WorldMap, String> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err("bad magic".into());
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let len = r.u32()? as usize;
    let text = std::str::from_utf8(r.take(len)?).map_err(|e| e.to_string())?;
    let config: WorldConfig = toml::from_str(text).map_err(|e| e.to_string())?;
    let seed = r.u64()?;
    let cols = r.u32()? as usize;
    let rows = r.u32()? as usize;
    let cell_size = f64::from_bits(r.u64()?);
    let n = cols.checked_mul(rows).ok_or("grid too large")?;
    let cells = r.take(2 * n)?;
    if r.pos != buf.len() {
        return Err("trailing bytes".into());
    }
    let mut world = WorldMap {
        config,
        seed,
        cols,
        rows,
        cell_size,
        classes: Vec::with_capacity(n),
        obstacle: Vec::with_capacity(n),
        canopy: Vec::with_capacity(n),
        grass: Vec::with_capacity(n),
    };
    for pair in cells.chunks_exact(2) {
        if pair[0] as usize >= world.config.num_classes {
            return Err(format!("class {} out of range", pair[0]));
        }
        world.classes.push(pair[0]);
        world.obstacle.push(pair[1] & FLAG_OBSTACLE != 0);
        world.canopy.push(pair[1] & FLAG_CANOPY != 0);
        world.grass.push(pair[1] & FLAG_GRASS != 0);
    }
    Ok(world)
}

pub fn save_world(world: &WorldMap, path: &Path) -> Result<()> {
    std::fs::write(path, world_bytes(world)).map_err(|e| CoreError::io(path, e))
}

pub fn load_world(path: &Path) -> Result<WorldMap> {
    let buf = std::fs::read(path).map_err(|e| CoreError::io(path, e))?;
    world_from_bytes(&buf).map_err(|reason| CoreError::format("world", path, reason))
}
