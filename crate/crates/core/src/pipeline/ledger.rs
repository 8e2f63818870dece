use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::PipelineConfig;
use crate::error::{Error, Result};
use crate::neighborhood::{pooled_dims, union_grid};
use crate::supervise::kept_count;
use crate::tensor::DIRECTIONS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    /// Map entering the Saab transform.
    SaabInput,
    /// Map entering max-pooling (Saab output, after optional truncation).
    PoolInput,
    PoolOutput,
    /// Channels retained for regression.
    Selected,
}

impl StageKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StageKind::SaabInput => "saab_input",
            StageKind::PoolInput => "pool_input",
            StageKind::PoolOutput => "pool_output",
            StageKind::Selected => "selected",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerStage {
    /// 1-based layer number.
    pub layer: usize,
    pub kind: StageKind,
    /// Per-direction `(H, W, Z, C)`.
    pub dims: [usize; 4],
}

/// Expected per-direction dims at every stage, computed without data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeLedger {
    pub input: [usize; 3],
    pub stages: Vec<LedgerStage>,
    /// Per-layer regression output length (`K·M`).
    pub lag_dim: usize,
}

impl ShapeLedger {
    /// Dry-run the configured layers on an assembled input of `input` dims.
    pub fn compute(cfg: &PipelineConfig, input: [usize; 3], classes: usize) -> Result<Self> {
        cfg.validate()?;
        let mut stages = Vec::new();
        let mut spatial = input;
        let mut channels = 1;
        for (i, layer) in cfg.layers.iter().enumerate() {
            let n = i + 1;
            stages.push(LedgerStage {
                layer: n,
                kind: StageKind::SaabInput,
                dims: [spatial[0], spatial[1], spatial[2], channels],
            });
            let mut grid = union_grid(spatial, layer.window).map_err(|_| {
                Error::InvalidArgument(format!(
                    "layer {n}: window {:?} does not fit input {spatial:?}",
                    layer.window
                ))
            })?;
            if cfg.truncate_layer5 && n == 5 && grid[2] > 1 {
                grid[2] -= 1;
            }
            stages.push(LedgerStage {
                layer: n,
                kind: StageKind::PoolInput,
                dims: [grid[0], grid[1], grid[2], layer.filters],
            });
            spatial = pooled_dims(grid);
            channels = layer.filters;
            stages.push(LedgerStage {
                layer: n,
                kind: StageKind::PoolOutput,
                dims: [spatial[0], spatial[1], spatial[2], channels],
            });
            stages.push(LedgerStage {
                layer: n,
                kind: StageKind::Selected,
                dims: [spatial[0], spatial[1], spatial[2], kept_count(channels, cfg.keep_ratio)],
            });
        }
        Ok(Self {
            input,
            stages,
            lag_dim: classes * cfg.lag.centroids_per_class,
        })
    }

    pub fn layers(&self) -> usize {
        self.stages.iter().map(|s| s.layer).max().unwrap_or(0)
    }

    pub fn stage(&self, layer: usize, kind: StageKind) -> Option<[usize; 4]> {
        self.stages
            .iter()
            .find(|s| s.layer == layer && s.kind == kind)
            .map(|s| s.dims)
    }

    /// The Saab-input and pool-input rows, in order; the layout of the
    /// per-layer unsupervised module table.
    pub fn table_rows(&self) -> Vec<LedgerStage> {
        self.stages
            .iter()
            .filter(|s| matches!(s.kind, StageKind::SaabInput | StageKind::PoolInput))
            .copied()
            .collect()
    }

    /// LAG input length per direction for `layer`.
    pub fn lag_input_dim(&self, layer: usize) -> usize {
        self.stage(layer, StageKind::Selected)
            .map_or(0, |d| d.iter().product())
    }

    /// Final concatenated feature length `L × 3 × K·M`.
    pub fn feature_dim(&self) -> usize {
        self.layers() * DIRECTIONS * self.lag_dim
    }

    pub fn check(&self, layer: usize, kind: StageKind, actual: [usize; 4]) -> Result<()> {
        match self.stage(layer, kind) {
            Some(expected) if expected == actual => Ok(()),
            Some(expected) => Err(Error::ShapeLedgerMismatch {
                stage: stage_name(layer, kind),
                expected,
                actual,
            }),
            None => Err(Error::ShapeLedgerMismatch {
                stage: stage_name(layer, kind),
                expected: [0; 4],
                actual,
            }),
        }
    }
}

fn stage_name(layer: usize, kind: StageKind) -> String {
    format!("layer {layer} {}", kind.as_str())
}
