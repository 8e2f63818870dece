use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sslhop_core::classifier::cross_validate;
use sslhop_core::pipeline::{
    count_parameters, count_parameters_for_config, fit_pipeline, fit_pipeline_detailed, LagConfig, LayerConfig,
    PipelineConfig, ShapeLedger, StageKind,
};
use sslhop_core::tensor::{DeformationSample, Field3D};

fn sample(id: &str, label: usize, dims: [usize; 3], rng: &mut ChaCha8Rng) -> DeformationSample {
    let amp = 1.0 + label as f64;
    let f = Field3D::from_fn(dims, |d, y, x, z| {
        amp * ((y + 2 * x + z + d) as f64 * 0.4).sin() + 0.3 * rng.sample::<f64, _>(StandardNormal)
    })
    .unwrap();
    DeformationSample::new(id, label, f).unwrap()
}

fn dataset(per_class: usize, classes: usize, dims: [usize; 3], seed: u64) -> Vec<DeformationSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..classes * per_class)
        .map(|i| sample(&format!("s{i:03}"), i % classes, dims, &mut rng))
        .collect()
}

fn toy_config(layers: &[(usize, [usize; 3])], m: usize) -> PipelineConfig {
    PipelineConfig {
        layers: layers.iter().map(|&(filters, window)| LayerConfig { filters, window }).collect(),
        lag: LagConfig {
            centroids_per_class: m,
            ..LagConfig::default()
        },
        roi: None,
        ..PipelineConfig::full()
    }
}

#[test]
fn single_layer_two_class_feature_length() {
    let data = dataset(4, 2, [6, 6, 4], 1);
    let cfg = toy_config(&[(3, [2, 2, 2])], 1);
    let fit = fit_pipeline_detailed(&data, &cfg).unwrap();
    assert_eq!(fit.model.feature_dim(), 6);
    assert_eq!(fit.train_features.cols(), 6);
}

#[test]
fn transform_reproduces_training_features() {
    let data = dataset(5, 3, [8, 8, 4], 2);
    let cfg = toy_config(&[(4, [3, 3, 2]), (3, [2, 2, 2])], 2);
    let fit = fit_pipeline_detailed(&data, &cfg).unwrap();
    let m = &fit.model;
    for (i, s) in data.iter().enumerate() {
        let f = m.transform(s).unwrap();
        for (a, b) in f.iter().zip(fit.train_features.row(i)) {
            assert!((a - b).abs() < 1e-10);
        }
    }
    assert_eq!(m.transform(&data[0]).unwrap(), m.transform(&data[0].clone()).unwrap());

    // batch order does not matter
    let rev: Vec<DeformationSample> = data.iter().rev().cloned().collect();
    let fwd = m.transform_batch(&data).unwrap();
    let bwd = m.transform_batch(&rev).unwrap();
    for i in 0..data.len() {
        assert_eq!(fwd.row(i), bwd.row(data.len() - 1 - i));
    }
    assert_eq!(fit_pipeline(&data, &cfg).unwrap(), fit.model);
}

#[test]
fn zero_field_has_zero_dc_and_centering_only_ac() {
    let data = dataset(4, 2, [6, 6, 4], 3);
    let cfg = toy_config(&[(4, [2, 2, 2])], 1);
    let m = fit_pipeline(&data, &cfg).unwrap();
    let zero = vec![0.0; 8];
    for dm in &m.layers[0].directions {
        let k = &dm.kernel;
        let mut scratch = vec![0.0; 8];
        let mut out = vec![0.0; 4];
        k.transform_row(&zero, &mut scratch, &mut out);
        assert_eq!(out[0], 0.0);
        for c in 1..4 {
            let shift: f64 = -k.ac().row(c - 1).iter().zip(k.mean_ac()).map(|(a, b)| a * b).sum::<f64>();
            assert!((out[c] - shift).abs() < 1e-12);
        }
    }
    let z = DeformationSample::new("z", 0, Field3D::zeros([6, 6, 4]).unwrap()).unwrap();
    let f = m.transform(&z).unwrap();
    assert!(f.iter().all(|v| v.is_finite()));
}

#[test]
fn full_config_ledger_matches_layer_table() {
    let cfg = PipelineConfig::full();
    let ledger = ShapeLedger::compute(&cfg, [100, 100, 128], 5).unwrap();
    // (Saab input, pooling input), channels last
    let table = [
        ([100, 100, 128, 1], [98, 98, 123, 5]),
        ([49, 49, 62, 5], [47, 47, 60, 5]),
        ([24, 24, 30, 5], [22, 22, 28, 15]),
        ([11, 11, 14, 15], [9, 9, 12, 20]),
        ([5, 5, 6, 20], [3, 3, 4, 25]),
    ];
    for (l, (saab, pool)) in table.iter().enumerate() {
        assert_eq!(ledger.stage(l + 1, StageKind::SaabInput), Some(*saab));
        assert_eq!(ledger.stage(l + 1, StageKind::PoolInput), Some(*pool));
    }
    assert_eq!(ledger.feature_dim(), 375);

    let truncated = PipelineConfig {
        truncate_layer5: true,
        ..cfg
    };
    let t = ShapeLedger::compute(&truncated, [100, 100, 128], 5).unwrap();
    assert_eq!(t.stage(5, StageKind::PoolInput), Some([3, 3, 3, 25]));
}

/// Independent arithmetic for the full configuration: union lengths from
/// the windows and previous channel counts, regression inputs from the
/// pooled shapes and kept channels.
#[test]
fn full_config_parameter_count_closed_form() {
    let cfg = PipelineConfig::full();
    let filters = [5u64, 5, 15, 20, 25];
    let windows = [54u64, 27, 27, 27, 27];
    let mut c_prev = 1;
    let mut saab = 0;
    for l in 0..5 {
        saab += 3 * filters[l] * windows[l] * c_prev;
        c_prev = filters[l];
    }
    assert_eq!(saab, 73_710);

    let pooled = [[49u64, 49, 62], [24, 24, 30], [11, 11, 14], [5, 5, 6], [2, 2, 2]];
    let kept = filters.map(|f| (f / 2).max(1));
    let out = 25u64;
    let mut lag = 0;
    for l in 0..5 {
        let din = pooled[l].iter().product::<u64>() * kept[l];
        lag += 3 * ((din + 1) * out + out * din);
    }
    let svm = 5 * (375 + 1);
    let got = count_parameters_for_config(&cfg, [100, 100, 128], 5).unwrap();
    assert_eq!((got.saab, got.lag, got.svm), (saab, lag, svm));
    assert_eq!(got.total, saab + lag + svm);
}

#[test]
fn fitted_count_equals_closed_form() {
    let data = dataset(3, 2, [7, 7, 6], 4);
    let mut cfg = toy_config(&[(3, [2, 2, 2]), (4, [2, 2, 2])], 2);
    cfg.bias_scale = 0.5;
    let m = fit_pipeline(&data, &cfg).unwrap();
    assert_eq!(count_parameters(&m), count_parameters_for_config(&cfg, [7, 7, 6], 2).unwrap());

    let one = toy_config(&[(1, [1, 1, 1])], 1);
    let c = count_parameters_for_config(&one, [2, 2, 2], 2).unwrap();
    assert_eq!(c.saab, 3);
    assert_eq!(c.svm, 2 * 7);
}

#[test]
fn cross_validation_is_stratified_deterministic_and_leak_free() {
    let data = dataset(5, 2, [6, 6, 4], 5);
    let cfg = toy_config(&[(3, [2, 2, 2])], 2);
    let a = cross_validate(&data, 5, &cfg, 9).unwrap();
    let b = cross_validate(&data, 5, &cfg, 9).unwrap();
    assert_eq!(a.report, b.report);
    assert_eq!(a.report.leakage_checks, 10);
    assert_eq!(a.report.fold_accuracy.len(), 5);
    for f in 0..5 {
        let labels: Vec<usize> = a.report.predictions.iter().filter(|p| p.fold == f).map(|p| p.label).collect();
        assert_eq!(labels.len(), 2);
        assert!(labels.contains(&0) && labels.contains(&1));
    }
    let total: usize = a.report.confusion.iter().flatten().sum();
    assert_eq!(total, 10);

    let loo = cross_validate(&data, 10, &cfg, 9).unwrap();
    assert_eq!(loo.report.fold_accuracy.len(), 10);
    assert!(loo.report.fold_accuracy.iter().all(|&x| x == 0.0 || x == 1.0));
}

#[test]
fn mismatched_input_is_a_ledger_error() {
    let data = dataset(3, 2, [6, 6, 4], 6);
    let cfg = toy_config(&[(3, [2, 2, 2])], 1);
    let m = fit_pipeline(&data, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let other = sample("x", 0, [7, 6, 4], &mut rng);
    let e = m.transform(&other).unwrap_err();
    assert!(e.is_invariant_violation());
}
