use std::fmt;

use crate::error::{invalid, Result};

/// Ordinal terrain label: 0 is smoothest, larger is rougher, and the top
/// index `|C| - 1` is reserved for obstacles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct TerrainClass(pub u8);

impl TerrainClass {
    pub fn obstacle(num_classes: usize) -> Self {
        Self((num_classes - 1) as u8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn is_obstacle(self, num_classes: usize) -> bool {
        self.index() == num_classes - 1
    }
}

impl fmt::Display for TerrainClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Per-step reward `|C| - 1 - y`.
pub fn reward_map(class: TerrainClass, num_classes: usize) -> Result<f64> {
    if num_classes < 2 || class.index() >= num_classes {
        return Err(invalid(format!("class {class} outside 0..{num_classes}")));
    }
    Ok((num_classes - 1 - class.index()) as f64)
}
