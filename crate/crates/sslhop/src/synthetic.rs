//! Deterministic synthetic deformation datasets.
//!
//! Each class has a smooth radial template: in-plane displacement points
//! away from the slice centre with magnitude `A·sin(π·r/R)`, the through-
//! plane component follows `cos(π·z/Z)`, and each direction is scaled by the
//! class anisotropy. A subject's ED field is `j·T + ε`, its ES field
//! `j·c·T + ε'`, where `c` is the class phase contrast and `j` a per-subject
//! amplitude jitter. An optional subject offset field `s`, identical in both
//! phases, is added to each (`j·T + s + ε`, `j·c·T + s + ε'`). It is a random
//! affine displacement (per-direction constant plus linear ramps along each
//! axis), standing in for residual misalignment left by atlas registration;
//! only the ED/ES difference cancels it. All randomness is seeded per subject id, so output does
//! not depend on generation order.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sslhop_core::pipeline::subject_digest;
use sslhop_core::tensor::Field3D;

use crate::error::{Error, Result};
use crate::field_file::{write_field, FieldMeta, Phase};
use crate::manifest::{save_manifest, DatasetManifest, SubjectRecord};

const DEFAULT_NAMES: [&str; 5] = ["NOR", "MINF", "DCM", "HCM", "RV"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTemplate {
    pub amplitude: f64,
    pub anisotropy: [f64; 3],
    pub phase_contrast: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub subjects_per_class: usize,
    /// Per-phase field dims `(H, W, Z)`.
    pub dims: [usize; 3],
    pub noise_sigma: f64,
    /// Minimum amplitude gap between any two class templates.
    pub margin: f64,
    /// Subject amplitude factor is drawn from `1 ± amplitude_jitter`.
    #[serde(default)]
    pub amplitude_jitter: f64,
    /// Std of the coefficients of the affine offset field shared by both
    /// phases.
    #[serde(default)]
    pub shared_sigma: f64,
    pub seed: u64,
    /// Explicit templates; generated from `margin` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates: Option<Vec<ClassTemplate>>,
}

impl SyntheticSpec {
    /// The desk-scale benchmark set: 5 classes × 20 subjects, 32×32×16.
    pub fn standard(seed: u64) -> Self {
        Self {
            classes: 5,
            subjects_per_class: 20,
            dims: [32, 32, 16],
            noise_sigma: 0.1,
            margin: 0.25,
            amplitude_jitter: 0.0,
            shared_sigma: 0.0,
            seed,
            templates: None,
        }
    }

    /// Templates in use: explicit ones, or an evenly spaced default family
    /// whose amplitudes step by `margin` and whose phase contrast and
    /// anisotropy also vary by class.
    pub fn resolved_templates(&self) -> Vec<ClassTemplate> {
        if let Some(t) = &self.templates {
            return t.clone();
        }
        (0..self.classes)
            .map(|k| {
                let t = k as f64;
                ClassTemplate {
                    amplitude: 1.0 + self.margin * t,
                    anisotropy: [1.0, 1.0 - 0.1 * (k % 3) as f64, 0.5 + 0.1 * (k % 2) as f64],
                    phase_contrast: 0.3 + 0.15 * t,
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.subjects_per_class == 0 {
            return bad("subjects_per_class must be positive".into());
        }
        if self.dims.contains(&0) {
            return bad(format!("dims must be positive, got {:?}", self.dims));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma must be finite and ≥ 0, got {}", self.noise_sigma));
        }
        if !(self.shared_sigma >= 0.0 && self.shared_sigma.is_finite()) {
            return bad(format!("shared_sigma must be finite and ≥ 0, got {}", self.shared_sigma));
        }
        if !(0.0..1.0).contains(&self.amplitude_jitter) {
            return bad(format!("amplitude_jitter must lie in [0, 1), got {}", self.amplitude_jitter));
        }
        if !(self.margin >= 0.0) {
            return bad(format!("margin must be ≥ 0, got {}", self.margin));
        }
        let t = self.resolved_templates();
        if t.len() != self.classes {
            return bad(format!("{} templates for {} classes", t.len(), self.classes));
        }
        for i in 0..t.len() {
            for j in i + 1..t.len() {
                let gap = (t[i].amplitude - t[j].amplitude).abs();
                if gap < self.margin * (1.0 - 1e-9) {
                    return bad(format!(
                        "templates {i} and {j} differ in amplitude by {gap}, below margin {}",
                        self.margin
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn class_name(&self, k: usize) -> String {
        if self.classes <= DEFAULT_NAMES.len() {
            DEFAULT_NAMES[k].to_string()
        } else {
            format!("C{k}")
        }
    }
}

/// One generated subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSubject {
    pub subject_id: String,
    pub label: usize,
    pub ed: Field3D,
    pub es: Field3D,
}

pub fn subject_id(label: usize, index: usize) -> String {
    format!("c{label}_s{index:03}")
}

/// Noise-free template field, values rounded through f32 so they survive
/// the field file format unchanged.
pub fn template_field(t: &ClassTemplate, dims: [usize; 3], scale: f64) -> Field3D {
    let [h, w, z] = dims;
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let radius = (cy.max(cx)).max(0.5) * 1.2;
    let zs = z.max(2) as f64 - 1.0;
    Field3D::from_fn(dims, |d, y, x, k| {
        let dy = y as f64 - cy;
        let dx = x as f64 - cx;
        let r = dy.hypot(dx);
        let profile = t.amplitude * scale * (PI * r / radius).sin();
        let v = match d {
            0 if r > 0.0 => profile * dy / r,
            1 if r > 0.0 => profile * dx / r,
            2 => profile * (PI * k as f64 / zs).cos(),
            _ => 0.0,
        };
        round_f32(v * t.anisotropy[d])
    })
    .expect("template dims are validated")
}

fn round_f32(v: f64) -> f64 {
    v as f32 as f64
}

fn subject_rng(seed: u64, id: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ subject_digest(id).rotate_left(17))
}

fn add_noise(base: &Field3D, sigma: f64, rng: &mut ChaCha8Rng) -> Field3D {
    if sigma == 0.0 {
        return base.clone();
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    let data = base
        .as_slice()
        .iter()
        .map(|&v| round_f32(v + normal.sample(rng)))
        .collect();
    Field3D::from_vec(base.dims(), data).expect("same dims")
}

/// Random affine displacement: for each direction, an offset plus ramps
/// spanning `±1` across each axis, all coefficients `N(0, sigma²)`.
fn affine_offset(dims: [usize; 3], sigma: f64, rng: &mut ChaCha8Rng) -> Field3D {
    if sigma == 0.0 {
        return Field3D::zeros(dims).expect("dims validated");
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    let coef: Vec<[f64; 4]> = (0..3).map(|_| std::array::from_fn(|_| normal.sample(rng))).collect();
    let ramp = |i: usize, n: usize| if n > 1 { 2.0 * i as f64 / (n - 1) as f64 - 1.0 } else { 0.0 };
    Field3D::from_fn(dims, |d, y, x, z| {
        let c = coef[d];
        c[0] + c[1] * ramp(y, dims[0]) + c[2] * ramp(x, dims[1]) + c[3] * ramp(z, dims[2])
    })
    .expect("dims validated")
}

fn sum(a: &Field3D, b: &Field3D) -> Field3D {
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| round_f32(x + y)).collect();
    Field3D::from_vec(a.dims(), data).expect("same dims")
}

/// Generate every subject in memory, class-major.
pub fn generate_subjects(spec: &SyntheticSpec) -> Result<Vec<SyntheticSubject>> {
    spec.validate()?;
    let templates = spec.resolved_templates();
    let mut out = Vec::with_capacity(spec.classes * spec.subjects_per_class);
    for (label, t) in templates.iter().enumerate() {
        for i in 0..spec.subjects_per_class {
            let id = subject_id(label, i);
            let mut rng = subject_rng(spec.seed, &id);
            let j = if spec.amplitude_jitter > 0.0 {
                1.0 + rng.random_range(-spec.amplitude_jitter..spec.amplitude_jitter)
            } else {
                1.0
            };
            let texture = affine_offset(spec.dims, spec.shared_sigma, &mut rng);
            let ed_t = sum(&template_field(t, spec.dims, j), &texture);
            let es_t = sum(&template_field(t, spec.dims, j * t.phase_contrast), &texture);
            let ed = add_noise(&ed_t, spec.noise_sigma, &mut rng);
            let es = add_noise(&es_t, spec.noise_sigma, &mut rng);
            out.push(SyntheticSubject {
                subject_id: id,
                label,
                ed,
                es,
            });
        }
    }
    Ok(out)
}

/// Write field files under `out/fields/` and `out/manifest.json`.
pub fn gen_synthetic(spec: &SyntheticSpec, out: &Path) -> Result<DatasetManifest> {
    let subjects = generate_subjects(spec)?;
    let dir = out.join("fields");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut records = Vec::with_capacity(subjects.len());
    for s in &subjects {
        let ed_rel = Path::new("fields").join(format!("{}_ED.fld", s.subject_id));
        let es_rel = Path::new("fields").join(format!("{}_ES.fld", s.subject_id));
        for (field, phase, rel) in [(&s.ed, Phase::ED, &ed_rel), (&s.es, Phase::ES, &es_rel)] {
            let meta = FieldMeta {
                phase,
                subject_id: s.subject_id.clone(),
            };
            write_field(field, &meta, &out.join(rel))?;
        }
        records.push(SubjectRecord {
            subject_id: s.subject_id.clone(),
            ed_path: ed_rel,
            es_path: es_rel,
            label: s.label,
            label_name: spec.class_name(s.label),
        });
    }
    let manifest = DatasetManifest {
        classes: (0..spec.classes).map(|k| spec.class_name(k)).collect(),
        records,
        root: out.to_path_buf(),
    };
    save_manifest(&manifest, &out.join("manifest.json"))?;
    Ok(manifest)
}
