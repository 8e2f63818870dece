use std::fs;

use sslhop::dataset::load_samples;
use sslhop::manifest::load_manifest;
use sslhop::model_file::{decode_model, encode_model, load_model, save_model};
use sslhop::synthetic::{gen_synthetic, generate_subjects, SyntheticSpec};
use sslhop::Error;
use sslhop_core::pipeline::{fit_pipeline, LagConfig, LayerConfig, PipelineConfig};
use sslhop_core::tensor::Field3D;

fn small_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        classes: 3,
        subjects_per_class: 4,
        dims: [10, 10, 4],
        ..SyntheticSpec::standard(seed)
    }
}

fn small_config() -> PipelineConfig {
    PipelineConfig {
        layers: vec![
            LayerConfig {
                filters: 4,
                window: [3, 3, 2],
            },
            LayerConfig {
                filters: 3,
                window: [2, 2, 2],
            },
        ],
        lag: LagConfig {
            centroids_per_class: 2,
            ..LagConfig::default()
        },
        roi: None,
        bias_scale: 0.25,
        ..PipelineConfig::full()
    }
}

#[test]
fn model_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let m = gen_synthetic(&small_spec(1), dir.path()).unwrap();
    let cfg = small_config();
    let samples = load_samples(&m, &cfg).unwrap();
    let model = fit_pipeline(&samples, &cfg).unwrap();
    let path = dir.path().join("model.sslhop");
    save_model(&model, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back, model);
    for s in &samples {
        assert_eq!(back.transform(s).unwrap(), model.transform(s).unwrap());
    }
    assert_eq!(encode_model(&back), fs::read(&path).unwrap());
}

#[test]
fn damaged_model_files_are_rejected() {
    let samples: Vec<_> = generate_subjects(&small_spec(2))
        .unwrap()
        .into_iter()
        .map(|s| {
            let f = sslhop_core::tensor::interlace_concat(&s.ed, &s.es).unwrap();
            sslhop_core::tensor::DeformationSample::new(s.subject_id, s.label, f).unwrap()
        })
        .collect();
    let bytes = encode_model(&fit_pipeline(&samples, &small_config()).unwrap());
    assert!(decode_model(&bytes).is_ok());

    let truncated = &bytes[..bytes.len() - 9];
    assert!(matches!(decode_model(truncated), Err(Error::CorruptFile(_))));
    assert!(matches!(decode_model(&bytes[..5]), Err(Error::CorruptFile(_))));

    let mut flipped = bytes.clone();
    let mid = flipped.len() / 2;
    flipped[mid] ^= 0x40;
    assert!(matches!(decode_model(&flipped), Err(Error::CorruptFile(_))));

    let mut newer = bytes.clone();
    newer[8] += 1;
    assert!(matches!(
        decode_model(&newer),
        Err(Error::VersionMismatch { found_major: 2, .. })
    ));

    let mut minor = bytes;
    minor[9] += 1;
    // a minor bump is readable in principle, but the checksum still covers it
    assert!(matches!(decode_model(&minor), Err(Error::CorruptFile(_))));
}

#[test]
fn generation_is_byte_deterministic() {
    let spec = SyntheticSpec::standard(42);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = gen_synthetic(&spec, a.path()).unwrap();
    gen_synthetic(&spec, b.path()).unwrap();
    assert_eq!(ma.records.len(), 100);
    assert_eq!(ma.classes.len(), 5);
    for name in ["manifest.json", "fields/c0_s000_ED.fld", "fields/c4_s019_ES.fld", "fields/c2_s007_ED.fld"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let loaded = load_manifest(&a.path().join("manifest.json")).unwrap();
    assert_eq!(loaded.records, ma.records);
}

/// Leave-one-out nearest class mean on the raw ED‖ES vectors.
fn nearest_mean_accuracy(spec: &SyntheticSpec) -> f64 {
    let subjects = generate_subjects(spec).unwrap();
    let vecs: Vec<Vec<f64>> = subjects
        .iter()
        .map(|s| s.ed.as_slice().iter().chain(s.es.as_slice()).copied().collect())
        .collect();
    let mut correct = 0;
    for i in 0..subjects.len() {
        let mut best = (f64::INFINITY, usize::MAX);
        for c in 0..spec.classes {
            let members: Vec<usize> = (0..subjects.len()).filter(|&j| j != i && subjects[j].label == c).collect();
            let dist: f64 = (0..vecs[i].len())
                .map(|k| {
                    let mean = members.iter().map(|&j| vecs[j][k]).sum::<f64>() / members.len() as f64;
                    (vecs[i][k] - mean).powi(2)
                })
                .sum();
            if dist < best.0 {
                best = (dist, c);
            }
        }
        correct += usize::from(best.1 == subjects[i].label);
    }
    correct as f64 / subjects.len() as f64
}

#[test]
fn noise_free_classes_are_perfectly_separable() {
    let spec = SyntheticSpec {
        noise_sigma: 0.0,
        dims: [8, 8, 4],
        ..SyntheticSpec::standard(5)
    };
    let s = generate_subjects(&spec).unwrap();
    assert_eq!(s[0].ed, s[1].ed);
    assert_eq!(nearest_mean_accuracy(&spec), 1.0);
}

#[test]
fn separability_grows_with_margin_to_noise_ratio() {
    let accs: Vec<f64> = [0.01, 0.05, 0.25]
        .iter()
        .map(|&margin| {
            nearest_mean_accuracy(&SyntheticSpec {
                classes: 4,
                subjects_per_class: 8,
                dims: [4, 4, 2],
                noise_sigma: 1.0,
                margin,
                ..SyntheticSpec::standard(6)
            })
        })
        .collect();
    assert!(accs.windows(2).all(|w| w[1] >= w[0]), "{accs:?}");
    assert!(accs[2] > accs[0]);
}

#[test]
fn samples_follow_the_configured_assembly() {
    let dir = tempfile::tempdir().unwrap();
    let m = gen_synthetic(&small_spec(3), dir.path()).unwrap();
    let mut cfg = small_config();
    cfg.roi = Some(sslhop_core::pipeline::RoiConfig {
        origin: None,
        size: [6, 6, 4],
    });
    let s = load_samples(&m, &cfg).unwrap();
    assert_eq!(s.len(), 12);
    assert_eq!(s[0].interlaced.dims(), [6, 6, 8]);

    let subjects = generate_subjects(&small_spec(3)).unwrap();
    let ed: &Field3D = &subjects[0].ed;
    assert_eq!(s[0].interlaced.get(1, 0, 0, 0), ed.get(1, 2, 2, 0));
    assert_eq!(s[0].interlaced.get(1, 0, 0, 1), subjects[0].es.get(1, 2, 2, 0));
}
