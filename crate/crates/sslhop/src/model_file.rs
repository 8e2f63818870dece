//! Binary container for fitted pipelines.
//!
//! | offset   | size | content                                              |
//! |----------|------|------------------------------------------------------|
//! | 0        | 8    | magic `SSLHOPMD`                                     |
//! | 8        | 1    | format major version                                 |
//! | 9        | 1    | format minor version                                 |
//! | 10       | 8    | metadata length `n`, u64 little-endian               |
//! | 18       | n    | UTF-8 JSON metadata, including the tensor table      |
//! | 18 + n   | …    | tensors, f64 little-endian, in tensor-table order    |
//! | end − 4  | 4    | CRC-32 (IEEE) of every preceding byte                |
//!
//! The version is checked before the checksum so that files from a newer
//! major version are reported as such rather than as corrupt.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sslhop_core::classifier::SvmModel;
use sslhop_core::linalg::Matrix;
use sslhop_core::pipeline::{
    DirectionModel, LayerModel, PipelineConfig, PipelineModel, Provenance, ShapeLedger, FORMAT_VERSION,
};
use sslhop_core::saab::SaabKernel;
use sslhop_core::supervise::{ChannelEntropy, LagModel};

use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"SSLHOPMD";
const PREFIX: usize = 18;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct KernelMeta {
    degenerate: bool,
    padded: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct DirectionMeta {
    kernel: KernelMeta,
    kept: Vec<usize>,
    lag_blocks: Vec<usize>,
    lag_alpha: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Metadata {
    config: PipelineConfig,
    classes: usize,
    ledger: ShapeLedger,
    provenance: Provenance,
    training_digests: Vec<u64>,
    layers: Vec<Vec<DirectionMeta>>,
    svm_c: f64,
    tensors: Vec<TensorEntry>,
}

#[derive(Default)]
struct TensorWriter {
    table: Vec<TensorEntry>,
    data: Vec<u8>,
}

impl TensorWriter {
    fn put(&mut self, name: String, shape: Vec<usize>, values: &[f64]) {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        for v in values {
            self.data.extend_from_slice(&v.to_le_bytes());
        }
        self.table.push(TensorEntry { name, shape });
    }

    fn matrix(&mut self, name: String, m: &Matrix) {
        self.put(name, vec![m.rows(), m.cols()], m.as_slice());
    }
}

pub fn encode_model(model: &PipelineModel) -> Vec<u8> {
    let mut w = TensorWriter::default();
    let mut layers = Vec::with_capacity(model.layers.len());
    for (l, layer) in model.layers.iter().enumerate() {
        let mut dirs = Vec::with_capacity(layer.directions.len());
        for (d, dm) in layer.directions.iter().enumerate() {
            let p = format!("layer{}.dir{}", l + 1, d);
            let k = &dm.kernel;
            w.matrix(format!("{p}.saab.ac"), k.ac());
            w.put(format!("{p}.saab.mean_ac"), vec![k.dim()], k.mean_ac());
            w.put(format!("{p}.saab.energy"), vec![k.energy().len()], k.energy());
            w.put(format!("{p}.saab.bias"), vec![1], &[k.bias()]);
            let e = &dm.selection;
            w.put(format!("{p}.entropy.per_channel"), vec![e.per_channel.len()], &e.per_channel);
            w.matrix(format!("{p}.entropy.per_class"), &e.per_class);
            w.matrix(format!("{p}.lag.centroids"), &dm.lag.centroids);
            w.matrix(format!("{p}.lag.weights"), &dm.lag.weights);
            dirs.push(DirectionMeta {
                kernel: KernelMeta {
                    degenerate: k.is_degenerate(),
                    padded: k.padded(),
                },
                kept: e.kept.clone(),
                lag_blocks: dm.lag.blocks.clone(),
                lag_alpha: dm.lag.alpha,
            });
        }
        layers.push(dirs);
    }
    let svm = &model.svm;
    w.matrix("svm.weights".into(), &svm.weights);
    w.put("svm.intercepts".into(), vec![svm.intercepts.len()], &svm.intercepts);
    w.put("svm.mean".into(), vec![svm.mean.len()], &svm.mean);
    w.put("svm.scale".into(), vec![svm.scale.len()], &svm.scale);

    let meta = Metadata {
        config: model.config.clone(),
        classes: model.classes,
        ledger: model.ledger.clone(),
        provenance: model.provenance.clone(),
        training_digests: model.training_digests.clone(),
        layers,
        svm_c: svm.c,
        tensors: w.table,
    };
    let meta = serde_json::to_vec(&meta).expect("metadata serializes");

    let mut out = Vec::with_capacity(PREFIX + meta.len() + w.data.len() + 4);
    out.extend_from_slice(MODEL_MAGIC);
    out.push(FORMAT_VERSION.0);
    out.push(FORMAT_VERSION.1);
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&w.data);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct TensorReader {
    tensors: BTreeMap<String, (Vec<usize>, Vec<f64>)>,
}

impl TensorReader {
    fn take(&mut self, name: &str) -> Result<(Vec<usize>, Vec<f64>)> {
        self.tensors
            .remove(name)
            .ok_or_else(|| Error::CorruptFile(format!("missing tensor {name}")))
    }

    fn vector(&mut self, name: &str) -> Result<Vec<f64>> {
        Ok(self.take(name)?.1)
    }

    fn matrix(&mut self, name: &str) -> Result<Matrix> {
        let (shape, data) = self.take(name)?;
        if shape.len() != 2 {
            return Err(Error::CorruptFile(format!("tensor {name} is not 2-D")));
        }
        Matrix::from_vec(shape[0], shape[1], data).map_err(|e| Error::CorruptFile(e.to_string()))
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<PipelineModel> {
    if bytes.len() < PREFIX + 4 {
        return Err(Error::CorruptFile(format!("file is only {} bytes", bytes.len())));
    }
    if &bytes[..8] != MODEL_MAGIC {
        return Err(Error::CorruptFile("missing model magic".into()));
    }
    let (major, minor) = (bytes[8], bytes[9]);
    if major != FORMAT_VERSION.0 {
        return Err(Error::VersionMismatch {
            found_major: major,
            found_minor: minor,
            supported: FORMAT_VERSION.0,
        });
    }
    let body = &bytes[..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(Error::CorruptFile("checksum mismatch".into()));
    }
    let meta_len = u64::from_le_bytes(bytes[10..18].try_into().unwrap()) as usize;
    if PREFIX.checked_add(meta_len).is_none_or(|end| end > body.len()) {
        return Err(Error::CorruptFile("metadata runs past end of file".into()));
    }
    let meta: Metadata = serde_json::from_slice(&body[PREFIX..PREFIX + meta_len])
        .map_err(|e| Error::CorruptFile(format!("metadata: {e}")))?;

    let mut blob = &body[PREFIX + meta_len..];
    let mut tensors = BTreeMap::new();
    for t in &meta.tensors {
        let n: usize = t.shape.iter().product();
        if blob.len() < 8 * n {
            return Err(Error::CorruptFile(format!("tensor {} truncated", t.name)));
        }
        let (head, rest) = blob.split_at(8 * n);
        let values = head
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.insert(t.name.clone(), (t.shape.clone(), values));
        blob = rest;
    }
    if !blob.is_empty() {
        return Err(Error::CorruptFile(format!("{} trailing bytes after tensors", blob.len())));
    }
    let mut r = TensorReader { tensors };

    let mut layers = Vec::with_capacity(meta.layers.len());
    for (l, dirs) in meta.layers.into_iter().enumerate() {
        let mut directions = Vec::with_capacity(dirs.len());
        for (d, dmeta) in dirs.into_iter().enumerate() {
            let p = format!("layer{}.dir{}", l + 1, d);
            let bias = r.vector(&format!("{p}.saab.bias"))?;
            let kernel = SaabKernel::from_parts(
                r.matrix(&format!("{p}.saab.ac"))?,
                *bias.first().ok_or_else(|| Error::CorruptFile("empty bias".into()))?,
                r.vector(&format!("{p}.saab.mean_ac"))?,
                r.vector(&format!("{p}.saab.energy"))?,
                dmeta.kernel.degenerate,
                dmeta.kernel.padded,
            )
            .map_err(|e| Error::CorruptFile(e.to_string()))?;
            let selection = ChannelEntropy {
                per_channel: r.vector(&format!("{p}.entropy.per_channel"))?,
                per_class: r.matrix(&format!("{p}.entropy.per_class"))?,
                kept: dmeta.kept,
            };
            let lag = LagModel {
                centroids: r.matrix(&format!("{p}.lag.centroids"))?,
                blocks: dmeta.lag_blocks,
                alpha: dmeta.lag_alpha,
                weights: r.matrix(&format!("{p}.lag.weights"))?,
            };
            directions.push(DirectionModel { kernel, selection, lag });
        }
        layers.push(LayerModel { directions });
    }
    let svm = SvmModel {
        weights: r.matrix("svm.weights")?,
        intercepts: r.vector("svm.intercepts")?,
        mean: r.vector("svm.mean")?,
        scale: r.vector("svm.scale")?,
        c: meta.svm_c,
    };
    Ok(PipelineModel {
        config: meta.config,
        classes: meta.classes,
        ledger: meta.ledger,
        layers,
        svm,
        provenance: meta.provenance,
        training_digests: meta.training_digests,
    })
}

pub fn save_model(model: &PipelineModel, path: &Path) -> Result<()> {
    fs::write(path, encode_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<PipelineModel> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}
