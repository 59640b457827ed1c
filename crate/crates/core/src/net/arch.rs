use std::collections::BTreeMap;
use std::fmt::Write as _;

use offroad_nn::{conv_output_extent, ConvGeometry};

use crate::config::{InputMode, RunConfig};
use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvSpec {
    pub fn geometry(&self) -> ConvGeometry {
        ConvGeometry {
            stride: self.stride,
            padding: self.padding,
        }
    }
}

/// Everything that fixes the parameter shapes of a terrain predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub num_classes: usize,
    pub horizon: usize,
    pub history: usize,
    pub ground_hw: (usize, usize),
    pub aerial_hw: (usize, usize),
    pub conv: Vec<ConvSpec>,
    pub hidden: usize,
    pub action_embed: usize,
    pub mode: InputMode,
    pub dropout: f64,
}

impl Architecture {
    pub fn from_config(cfg: &RunConfig) -> Self {
        let m = &cfg.model;
        Self {
            num_classes: cfg.world.num_classes,
            horizon: m.horizon,
            history: m.history,
            ground_hw: (cfg.camera.ground_height_px, cfg.camera.ground_width_px),
            aerial_hw: (cfg.camera.aerial_height_px, cfg.camera.aerial_width_px),
            conv: (0..m.conv_channels.len())
                .map(|i| ConvSpec {
                    channels: m.conv_channels[i],
                    kernel: m.conv_kernels[i],
                    stride: m.conv_strides[i],
                    padding: m.conv_padding[i],
                })
                .collect(),
            hidden: m.hidden,
            action_embed: m.action_embed,
            mode: m.mode,
            dropout: m.dropout,
        }
    }

    pub fn input_channels(&self) -> usize {
        3 * self.history
    }

    /// Feature-map shape `[H, W, C]` after every conv layer for an input of
    /// extent `hw`.
    pub fn conv_shapes(&self, hw: (usize, usize)) -> Result<Vec<[usize; 3]>> {
        let (mut h, mut w) = hw;
        let mut out = Vec::with_capacity(self.conv.len());
        for (i, l) in self.conv.iter().enumerate() {
            if l.channels == 0 || l.kernel == 0 || l.stride == 0 {
                return Err(CoreError::Config(format!("conv layer {i} has a zero size")));
            }
            let g = l.geometry();
            match (conv_output_extent(h, l.kernel, g), conv_output_extent(w, l.kernel, g)) {
                (Some(nh), Some(nw)) if nh > 0 && nw > 0 => {
                    h = nh;
                    w = nw;
                }
                _ => {
                    return Err(CoreError::Config(format!(
                        "conv layer {i} ({}x{} stride {} padding {}) does not fit a {h}x{w} map",
                        l.kernel, l.kernel, l.stride, l.padding
                    )))
                }
            }
            out.push([h, w, l.channels]);
        }
        Ok(out)
    }

    fn branch_features(&self, hw: (usize, usize)) -> Result<usize> {
        let shapes = self.conv_shapes(hw)?;
        Ok(shapes.last().map_or(hw.0 * hw.1 * self.input_channels(), |s| s[0] * s[1] * s[2]))
    }

    pub fn ground_features(&self) -> Result<usize> {
        if self.mode.uses_ground() {
            self.branch_features(self.ground_hw)
        } else {
            Ok(0)
        }
    }

    pub fn aerial_features(&self) -> Result<usize> {
        if self.mode.uses_aerial() {
            self.branch_features(self.aerial_hw)
        } else {
            Ok(0)
        }
    }

    pub fn feature_dim(&self) -> Result<usize> {
        Ok(self.ground_features()? + self.aerial_features()?)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(CoreError::Config(format!("architecture: {m}")));
        if self.num_classes < 2 {
            return fail("needs at least two classes");
        }
        if self.horizon == 0 || self.history == 0 || self.hidden == 0 || self.action_embed == 0 {
            return fail("sizes must be positive");
        }
        if self.conv.is_empty() {
            return fail("needs at least one conv layer");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must lie in [0, 1)");
        }
        self.ground_features()?;
        self.aerial_features()?;
        Ok(())
    }

    /// Same family: shared classes, horizon and history, so predictions
    /// from different input modes are comparable.
    pub fn same_family(&self, other: &Self) -> bool {
        self.num_classes == other.num_classes && self.horizon == other.horizon && self.history == other.history
    }

    pub fn to_text(&self) -> String {
        let join = |f: fn(&ConvSpec) -> usize| self.conv.iter().map(|c| f(c).to_string()).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let _ = writeln!(s, "num_classes = {}", self.num_classes);
        let _ = writeln!(s, "horizon = {}", self.horizon);
        let _ = writeln!(s, "history = {}", self.history);
        let _ = writeln!(s, "ground_hw = {},{}", self.ground_hw.0, self.ground_hw.1);
        let _ = writeln!(s, "aerial_hw = {},{}", self.aerial_hw.0, self.aerial_hw.1);
        let _ = writeln!(s, "conv_channels = {}", join(|c| c.channels));
        let _ = writeln!(s, "conv_kernels = {}", join(|c| c.kernel));
        let _ = writeln!(s, "conv_strides = {}", join(|c| c.stride));
        let _ = writeln!(s, "conv_padding = {}", join(|c| c.padding));
        let _ = writeln!(s, "hidden = {}", self.hidden);
        let _ = writeln!(s, "action_embed = {}", self.action_embed);
        let _ = writeln!(s, "mode = {}", self.mode);
        let _ = writeln!(s, "dropout = {:?}", self.dropout);
        s
    }

    pub fn from_text(text: &str) -> std::result::Result<Self, String> {
        let mut kv = BTreeMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| format!("expected key = value, got `{line}`"))?;
            kv.insert(k.trim(), v.trim());
        }
        let get = |k: &str| kv.get(k).copied().ok_or_else(|| format!("missing `{k}`"));
        let int = |k: &str| -> std::result::Result<usize, String> { get(k)?.parse().map_err(|e| format!("{k}: {e}")) };
        let list = |k: &str| -> std::result::Result<Vec<usize>, String> {
            get(k)?.split(',').map(|v| v.trim().parse().map_err(|e| format!("{k}: {e}"))).collect()
        };
        let pair = |k: &str| -> std::result::Result<(usize, usize), String> {
            match list(k)?.as_slice() {
                [a, b] => Ok((*a, *b)),
                _ => Err(format!("{k}: expected two values")),
            }
        };
        let (ch, ks, st, pd) = (list("conv_channels")?, list("conv_kernels")?, list("conv_strides")?, list("conv_padding")?);
        if ks.len() != ch.len() || st.len() != ch.len() || pd.len() != ch.len() {
            return Err("conv lists differ in length".into());
        }
        let arch = Self {
            num_classes: int("num_classes")?,
            horizon: int("horizon")?,
            history: int("history")?,
            ground_hw: pair("ground_hw")?,
            aerial_hw: pair("aerial_hw")?,
            conv: (0..ch.len())
                .map(|i| ConvSpec {
                    channels: ch[i],
                    kernel: ks[i],
                    stride: st[i],
                    padding: pd[i],
                })
                .collect(),
            hidden: int("hidden")?,
            action_embed: int("action_embed")?,
            mode: get("mode")?.parse().map_err(|e: CoreError| e.to_string())?,
            dropout: get("dropout")?.parse().map_err(|e| format!("dropout: {e}"))?,
        };
        arch.validate().map_err(|e| e.to_string())?;
        Ok(arch)
    }
}
