//! End-to-end model: per-direction stacked layers (unions → Saab →
//! max-pool), per-layer channel selection and regression, feature
//! concatenation and the SVM head.

mod config;
mod ledger;
mod params;

pub use config::{ConcatMode, LagConfig, LayerConfig, PipelineConfig, RoiConfig, SvmConfig};
pub use ledger::{LedgerStage, ShapeLedger, StageKind};
pub use params::{count_parameters, count_parameters_for_config, ParameterCount};

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::classifier::{self, SvmModel};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::math::fnv1a;
use crate::neighborhood::max_pool;
use crate::saab::{fit_saab_maps, SaabKernel};
use crate::supervise::{channel_entropy, fit_lag, select_channels, ChannelEntropy, LagModel};
use crate::tensor::{centered_origin, crop_roi, interlace_concat, plain_concat, DeformationSample, FeatureMap, Field3D, DIRECTIONS};

/// Model file format version written by this crate.
pub const FORMAT_VERSION: (u8, u8) = (1, 0);

/// Fitted state of one direction within one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionModel {
    pub kernel: SaabKernel,
    pub selection: ChannelEntropy,
    pub lag: LagModel,
}

/// Fitted state of one layer, one entry per direction.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerModel {
    pub directions: Vec<DirectionModel>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub format_version: (u8, u8),
    pub crate_version: String,
}

/// A fitted pipeline. Read-only: it exposes transforms and predictions, no
/// refitting.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineModel {
    pub config: PipelineConfig,
    pub classes: usize,
    pub ledger: ShapeLedger,
    pub layers: Vec<LayerModel>,
    pub svm: SvmModel,
    pub provenance: Provenance,
    /// Sorted FNV-1a digests of the subject ids the model was fitted on.
    pub training_digests: Vec<u64>,
}

/// Digest used to track which subjects touched a fit.
pub fn subject_digest(id: &str) -> u64 {
    fnv1a(id.as_bytes())
}

/// Crop both phases to the configured ROI and stack them per `cfg.concat`.
pub fn assemble(ed: &Field3D, es: &Field3D, cfg: &PipelineConfig) -> Result<Field3D> {
    let (ed, es) = match cfg.roi {
        Some(roi) => {
            let origin = match roi.origin {
                Some(o) => o,
                None => centered_origin(ed.dims(), roi.size)?,
            };
            (crop_roi(ed, origin, roi.size)?, crop_roi(es, origin, roi.size)?)
        }
        None => (ed.clone(), es.clone()),
    };
    match cfg.concat {
        ConcatMode::Interlaced => interlace_concat(&ed, &es),
        ConcatMode::Plain => plain_concat(&ed, &es),
    }
}

fn layer_seed(seed: u64, layer: usize, direction: usize) -> u64 {
    seed ^ ((layer as u64 + 1) << 32 | (direction as u64 + 1)).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn flatten(maps: &[FeatureMap]) -> Result<Matrix> {
    let cols = maps.first().map_or(0, |m| m.as_slice().len());
    let mut data = Vec::with_capacity(maps.len() * cols);
    for m in maps {
        data.extend_from_slice(m.as_slice());
    }
    Matrix::from_vec(maps.len(), cols, data)
}

/// Saab → optional truncation → pool for one map, checked against the ledger.
fn forward_layer(
    ledger: &ShapeLedger,
    cfg: &PipelineConfig,
    layer: usize,
    kernel: &SaabKernel,
    input: &FeatureMap,
) -> Result<FeatureMap> {
    let n = layer + 1;
    ledger.check(n, StageKind::SaabInput, input.dims())?;
    let mut out = kernel.apply_map(input, cfg.layers[layer].window)?;
    if cfg.truncate_layer5 && n == 5 && out.dims()[2] > 1 {
        out = out.truncate_depth(out.dims()[2] - 1)?;
    }
    ledger.check(n, StageKind::PoolInput, out.dims())?;
    let pooled = max_pool(&out);
    ledger.check(n, StageKind::PoolOutput, pooled.dims())?;
    Ok(pooled)
}

struct DirectionFit {
    layers: Vec<DirectionModel>,
    /// Per layer, `N × K·M` regression features of the training samples.
    features: Vec<Matrix>,
}

fn fit_direction(
    samples: &[DeformationSample],
    labels: &[usize],
    classes: usize,
    cfg: &PipelineConfig,
    ledger: &ShapeLedger,
    direction: usize,
) -> Result<DirectionFit> {
    let mut maps: Vec<FeatureMap> = samples.iter().map(|s| s.interlaced.direction_map(direction)).collect();
    let mut layers = Vec::with_capacity(cfg.layers.len());
    let mut features = Vec::with_capacity(cfg.layers.len());
    for (l, layer) in cfg.layers.iter().enumerate() {
        let refs: Vec<&FeatureMap> = maps.iter().collect();
        let kernel = fit_saab_maps(&refs, layer.window, layer.filters, cfg.bias_scale)?;
        let pooled: Result<Vec<FeatureMap>> =
            crate::par::map_indexed(maps.len(), |i| forward_layer(ledger, cfg, l, &kernel, &maps[i]))
                .into_iter()
                .collect();
        maps = pooled?;

        let refs: Vec<&FeatureMap> = maps.iter().collect();
        let selection = channel_entropy(&refs, labels, cfg.keep_ratio)?;
        let selected: Result<Vec<FeatureMap>> = maps.iter().map(|m| select_channels(m, &selection.kept)).collect();
        let selected = selected?;
        ledger.check(l + 1, StageKind::Selected, selected[0].dims())?;
        let x = flatten(&selected)?;
        drop(selected);
        let lag = fit_lag(&x, labels, classes, &cfg.lag_params(layer_seed(cfg.seed, l, direction)))?;
        features.push(crate::supervise::apply_lag(&lag, &x)?);
        layers.push(DirectionModel {
            kernel,
            selection,
            lag,
        });
    }
    Ok(DirectionFit { layers, features })
}

/// A fitted model plus the training features computed while fitting.
pub struct FittedPipeline {
    pub model: PipelineModel,
    /// `N × feature_dim`, rows in training-sample order.
    pub train_features: Matrix,
}

/// Fit every stage on `train` only.
pub fn fit_pipeline(train: &[DeformationSample], cfg: &PipelineConfig) -> Result<PipelineModel> {
    fit_pipeline_detailed(train, cfg).map(|f| f.model)
}

pub fn fit_pipeline_detailed(train: &[DeformationSample], cfg: &PipelineConfig) -> Result<FittedPipeline> {
    cfg.validate()?;
    let first = train
        .first()
        .ok_or_else(|| Error::InvalidArgument("no training samples".into()))?;
    let input = first.interlaced.dims();
    if let Some(s) = train.iter().find(|s| s.interlaced.dims() != input) {
        return Err(Error::ShapeMismatch(format!(
            "sample {} has dims {:?}, expected {input:?}",
            s.subject_id,
            s.interlaced.dims()
        )));
    }
    if let Some(roi) = cfg.roi {
        let expected = [roi.size[0], roi.size[1], 2 * roi.size[2]];
        if input != expected {
            return Err(Error::ShapeMismatch(format!(
                "assembled input {input:?} does not match ROI {expected:?}"
            )));
        }
    }
    let labels: Vec<usize> = train.iter().map(|s| s.label).collect();
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    if (0..classes).filter(|k| labels.contains(k)).count() < 2 {
        return Err(Error::SingleClass);
    }
    let ledger = ShapeLedger::compute(cfg, input, classes)?;

    let fits: Vec<Result<DirectionFit>> =
        crate::par::map_indexed(DIRECTIONS, |d| fit_direction(train, &labels, classes, cfg, &ledger, d));
    let mut per_direction = Vec::with_capacity(DIRECTIONS);
    for f in fits {
        per_direction.push(f?);
    }

    // layer-major, direction-minor
    let n = train.len();
    let dim = ledger.feature_dim();
    let mut features = Matrix::zeros(n, dim);
    let mut layers = Vec::with_capacity(cfg.layers.len());
    let mut offset = 0;
    for l in 0..cfg.layers.len() {
        let mut directions = Vec::with_capacity(DIRECTIONS);
        for fit in per_direction.iter_mut() {
            let f = &fit.features[l];
            for i in 0..n {
                features.row_mut(i)[offset..offset + f.cols()].copy_from_slice(f.row(i));
            }
            offset += f.cols();
            directions.push(fit.layers[l].clone());
        }
        layers.push(LayerModel { directions });
    }
    if offset != dim {
        // a k-means collapse shrank a regression block
        log::warn!("feature length {offset} differs from nominal {dim}");
        let mut trimmed = Matrix::zeros(n, offset);
        for i in 0..n {
            trimmed.row_mut(i).copy_from_slice(&features.row(i)[..offset]);
        }
        features = trimmed;
    }

    let svm = classifier::fit_svm(&features, &labels, classes, &cfg.svm.into())?;
    let mut training_digests: Vec<u64> = train.iter().map(|s| subject_digest(&s.subject_id)).collect();
    training_digests.sort_unstable();
    let model = PipelineModel {
        config: cfg.clone(),
        classes,
        ledger,
        layers,
        svm,
        provenance: Provenance {
            seed: cfg.seed,
            format_version: FORMAT_VERSION,
            crate_version: env!("CARGO_PKG_VERSION").into(),
        },
        training_digests,
    };
    Ok(FittedPipeline {
        model,
        train_features: features,
    })
}

impl PipelineModel {
    pub fn feature_dim(&self) -> usize {
        self.svm.feature_dim()
    }

    /// Feature vector of one sample from the stored kernels, selections and
    /// regressions.
    pub fn transform(&self, sample: &DeformationSample) -> Result<Vec<f64>> {
        let input = sample.interlaced.dims();
        if input != self.ledger.input {
            return Err(Error::ShapeLedgerMismatch {
                stage: "input".into(),
                expected: [self.ledger.input[0], self.ledger.input[1], self.ledger.input[2], 1],
                actual: [input[0], input[1], input[2], 1],
            });
        }
        let mut per_layer: Vec<Vec<Vec<f64>>> = (0..self.layers.len()).map(|_| Vec::new()).collect();
        for d in 0..DIRECTIONS {
            let mut map = sample.interlaced.direction_map(d);
            for (l, layer) in self.layers.iter().enumerate() {
                let dm = &layer.directions[d];
                map = forward_layer(&self.ledger, &self.config, l, &dm.kernel, &map)?;
                let selected = select_channels(&map, &dm.selection.kept)?;
                if selected.as_slice().len() != dm.lag.input_dim() {
                    return Err(Error::ShapeMismatch("regression input length".into()));
                }
                let mut out = alloc::vec![0.0; dm.lag.output_dim()];
                dm.lag.apply_row(selected.as_slice(), &mut out);
                per_layer[l].push(out);
            }
        }
        Ok(per_layer.into_iter().flatten().flatten().collect())
    }

    /// Features for many samples, rows in input order.
    pub fn transform_batch(&self, samples: &[DeformationSample]) -> Result<Matrix> {
        let rows: Vec<Result<Vec<f64>>> = crate::par::map_indexed(samples.len(), |i| self.transform(&samples[i]));
        let mut data = Vec::with_capacity(samples.len() * self.feature_dim());
        for r in rows {
            data.extend(r?);
        }
        Matrix::from_vec(samples.len(), self.feature_dim(), data)
    }

    /// Predicted labels and the `N × K` SVM decision values.
    pub fn predict(&self, samples: &[DeformationSample]) -> Result<(Vec<usize>, Matrix)> {
        classifier::predict(&self.svm, &self.transform_batch(samples)?)
    }

    /// True if `subject_id` was part of the training set.
    pub fn trained_on(&self, subject_id: &str) -> bool {
        self.training_digests.binary_search(&subject_digest(subject_id)).is_ok()
    }
}
