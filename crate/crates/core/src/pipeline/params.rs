use serde::{Deserialize, Serialize};

use super::{PipelineConfig, PipelineModel, ShapeLedger, StageKind};
use crate::error::Result;
use crate::neighborhood::union_dim;
use crate::tensor::DIRECTIONS;

/// Learned-parameter counts. Saab anchors are counted as entries (`F·D` per
/// kernel, plus `F` biases when the bias scale is nonzero); regressions count
/// weights with the bias row plus centroid entries; the SVM counts
/// `K·(dim + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterCount {
    pub saab: u64,
    pub lag: u64,
    pub svm: u64,
    pub total: u64,
}

impl ParameterCount {
    fn new(saab: u64, lag: u64, svm: u64) -> Self {
        Self {
            saab,
            lag,
            svm,
            total: saab + lag + svm,
        }
    }
}

/// Count the parameters actually stored in a fitted model.
pub fn count_parameters(model: &PipelineModel) -> ParameterCount {
    let with_bias = model.config.bias_scale != 0.0;
    let mut saab = 0u64;
    let mut lag = 0u64;
    for layer in &model.layers {
        for d in &layer.directions {
            let f = d.kernel.filters() as u64;
            saab += f * d.kernel.dim() as u64;
            if with_bias {
                saab += f;
            }
            let (din, out) = (d.lag.input_dim() as u64, d.lag.output_dim() as u64);
            lag += (din + 1) * out + out * din;
        }
    }
    let svm = model.svm.classes() as u64 * (model.svm.feature_dim() as u64 + 1);
    ParameterCount::new(saab, lag, svm)
}

/// Closed-form count for a configuration, from the shape ledger alone.
pub fn count_parameters_for_config(cfg: &PipelineConfig, input: [usize; 3], classes: usize) -> Result<ParameterCount> {
    let ledger = ShapeLedger::compute(cfg, input, classes)?;
    let dirs = DIRECTIONS as u64;
    let mut saab = 0u64;
    let mut lag = 0u64;
    let out = ledger.lag_dim as u64;
    for (i, layer) in cfg.layers.iter().enumerate() {
        let c_in = ledger.stage(i + 1, StageKind::SaabInput).map_or(1, |d| d[3]);
        let f = layer.filters as u64;
        saab += dirs * f * union_dim(layer.window, c_in) as u64;
        if cfg.bias_scale != 0.0 {
            saab += dirs * f;
        }
        let din = ledger.lag_input_dim(i + 1) as u64;
        lag += dirs * ((din + 1) * out + out * din);
    }
    let svm = classes as u64 * (ledger.feature_dim() as u64 + 1);
    Ok(ParameterCount::new(saab, lag, svm))
}
