use alloc::format;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::classifier::SvmParams;
use crate::error::{Error, Result};
use crate::supervise::LagParams;

/// How the ED and ES fields are stacked along depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ConcatMode {
    /// `ED₀, ES₀, ED₁, ES₁, …`
    #[default]
    Interlaced,
    /// `ED₀ … ED_{Z−1}, ES₀ … ES_{Z−1}`
    Plain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerConfig {
    /// Saab output channels `F_l`.
    pub filters: usize,
    /// Union window `(h, w, z)`.
    pub window: [usize; 3],
}

/// Per-phase region of interest. `origin = None` centers the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoiConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<[usize; 3]>,
    pub size: [usize; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LagConfig {
    pub centroids_per_class: usize,
    pub alpha: f64,
    pub ridge: f64,
}

impl Default for LagConfig {
    fn default() -> Self {
        Self {
            centroids_per_class: 5,
            alpha: 10.0,
            ridge: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    pub c: f64,
    pub tol: f64,
    pub max_epochs: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        let p = SvmParams::default();
        Self {
            c: p.c,
            tol: p.tol,
            max_epochs: p.max_epochs,
        }
    }
}

impl From<SvmConfig> for SvmParams {
    fn from(c: SvmConfig) -> Self {
        SvmParams {
            c: c.c,
            tol: c.tol,
            max_epochs: c.max_epochs,
        }
    }
}

fn default_keep_ratio() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub layers: Vec<LayerConfig>,
    /// Fraction of channels kept by entropy-guided selection.
    #[serde(default = "default_keep_ratio")]
    pub keep_ratio: f64,
    #[serde(default)]
    pub lag: LagConfig,
    #[serde(default)]
    pub svm: SvmConfig,
    /// Saab bias scale `d`; every output gets `d·√F`.
    #[serde(default)]
    pub bias_scale: f64,
    #[serde(default)]
    pub concat: ConcatMode,
    /// `None` keeps the full field.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roi: Option<RoiConfig>,
    /// Drop the last depth slice of the fifth layer's Saab output (3×3×4 →
    /// 3×3×3) before pooling.
    #[serde(default)]
    pub truncate_layer5: bool,
    #[serde(default)]
    pub seed: u64,
}

impl PipelineConfig {
    /// Five layers, `F = (5, 5, 15, 20, 25)`, on a centered 100×100×64 ROI.
    pub fn full() -> Self {
        let f = [5, 5, 15, 20, 25];
        let layers = f
            .iter()
            .enumerate()
            .map(|(i, &filters)| LayerConfig {
                filters,
                window: if i == 0 { [3, 3, 6] } else { [3, 3, 3] },
            })
            .collect();
        Self {
            layers,
            keep_ratio: 0.5,
            lag: LagConfig::default(),
            svm: SvmConfig::default(),
            bias_scale: 0.0,
            concat: ConcatMode::Interlaced,
            roi: Some(RoiConfig {
                origin: None,
                size: [100, 100, 64],
            }),
            truncate_layer5: false,
            seed: 42,
        }
    }

    /// First three layers of [`full`](Self::full) on the full field; sized
    /// for 32×32×16 inputs.
    pub fn reduced() -> Self {
        let mut cfg = Self::full();
        cfg.layers.truncate(3);
        cfg.roi = None;
        cfg
    }

    pub fn lag_params(&self, seed: u64) -> LagParams {
        LagParams {
            centroids_per_class: self.lag.centroids_per_class,
            alpha: self.lag.alpha,
            ridge: self.lag.ridge,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.layers.is_empty() {
            return bad("at least one layer is required");
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.filters == 0 || l.window.contains(&0) {
                return Err(Error::InvalidArgument(format!(
                    "layer {}: filters and window dims must be >= 1",
                    i + 1
                )));
            }
        }
        if !(self.keep_ratio > 0.0 && self.keep_ratio <= 1.0) {
            return bad("keep_ratio must be in (0, 1]");
        }
        if self.lag.centroids_per_class == 0 || !(self.lag.alpha > 0.0) || !(self.lag.ridge > 0.0) {
            return bad("lag needs centroids_per_class >= 1, alpha > 0, ridge > 0");
        }
        if !(self.svm.c > 0.0) || !(self.svm.tol > 0.0) || self.svm.max_epochs == 0 {
            return bad("svm needs c > 0, tol > 0, max_epochs >= 1");
        }
        if !self.bias_scale.is_finite() {
            return bad("bias_scale must be finite");
        }
        if let Some(roi) = &self.roi {
            if roi.size.contains(&0) {
                return bad("roi size must be >= 1");
            }
        }
        Ok(())
    }

    /// Spatial dims of the assembled input for per-phase fields of `dims`.
    pub fn assembled_dims(&self, phase_dims: [usize; 3]) -> [usize; 3] {
        let s = self.roi.map_or(phase_dims, |r| r.size);
        [s[0], s[1], 2 * s[2]]
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::full()
    }
}
