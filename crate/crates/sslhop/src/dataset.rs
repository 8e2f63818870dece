//! Turn a manifest into assembled pipeline samples.

use rayon::prelude::*;
use sslhop_core::pipeline::{assemble, PipelineConfig};
use sslhop_core::tensor::DeformationSample;

use crate::error::{Error, Result};
use crate::field_file::{read_field_with_header, Phase};
use crate::manifest::{DatasetManifest, SubjectRecord};

fn load_record(m: &DatasetManifest, r: &SubjectRecord, cfg: &PipelineConfig) -> Result<DeformationSample> {
    let (ed, ed_h) = read_field_with_header(&m.resolve(&r.ed_path))?;
    let (es, es_h) = read_field_with_header(&m.resolve(&r.es_path))?;
    for (h, want) in [(&ed_h, Phase::ED), (&es_h, Phase::ES)] {
        if h.phase != want || h.subject_id != r.subject_id {
            return Err(Error::BadHeader(format!(
                "subject {}: expected {want:?} field, file is {:?} of {}",
                r.subject_id, h.phase, h.subject_id
            )));
        }
    }
    if ed.dims() != es.dims() {
        return Err(Error::ShapeMismatch(format!(
            "subject {}: ED {:?} vs ES {:?}",
            r.subject_id,
            ed.dims(),
            es.dims()
        )));
    }
    let field = assemble(&ed, &es, cfg)?;
    Ok(DeformationSample::new(r.subject_id.clone(), r.label, field)?)
}

/// Read every subject's ED/ES pair and assemble it per `cfg`, in manifest
/// order. Files are read concurrently.
pub fn load_samples(m: &DatasetManifest, cfg: &PipelineConfig) -> Result<Vec<DeformationSample>> {
    m.validate()?;
    let samples: Vec<DeformationSample> = m
        .records
        .par_iter()
        .map(|r| load_record(m, r, cfg))
        .collect::<Result<_>>()?;
    if let Some(first) = samples.first() {
        let dims = first.interlaced.dims();
        if let Some(s) = samples.iter().find(|s| s.interlaced.dims() != dims) {
            return Err(Error::ShapeMismatch(format!(
                "subject {} has dims {:?}, expected {:?}",
                s.subject_id,
                s.interlaced.dims(),
                dims
            )));
        }
    }
    Ok(samples)
}
