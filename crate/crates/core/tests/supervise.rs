use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sslhop_core::linalg::Matrix;
use sslhop_core::supervise::{
    apply_lag, augment_bias, channel_entropy, fit_lag, select_channels, soft_targets, LagParams, ENTROPY_EPS,
};
use sslhop_core::tensor::FeatureMap;

/// Entropy straight from the definition: shift to the minimum, add ε,
/// normalize, `−Σ p ln p`.
fn entropy_oracle(values: &[f64]) -> f64 {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let q: Vec<f64> = values.iter().map(|v| v - min + ENTROPY_EPS).collect();
    let s: f64 = q.iter().sum();
    q.iter().map(|v| -(v / s) * (v / s).ln()).sum()
}

/// `[1, 1, V, C]` map from per-voxel channel values.
fn column(voxels: &[[f64; 2]]) -> FeatureMap {
    FeatureMap::from_vec([1, 1, voxels.len(), 2], voxels.iter().flatten().copied().collect()).unwrap()
}

#[test]
fn three_class_two_channel_micro_case() {
    // class 0: two samples, class 1: one sample, class 2: one sample
    let maps = [
        column(&[[0.0, 5.0], [1.0, 5.0]]),
        column(&[[3.0, 5.0], [0.0, 6.0]]),
        column(&[[-1.0, 2.0], [1.0, 2.0]]),
        column(&[[2.0, 0.0], [2.0, 4.0]]),
    ];
    let labels = [0, 0, 1, 2];
    let refs: Vec<&FeatureMap> = maps.iter().collect();
    let e = channel_entropy(&refs, &labels, 0.5).unwrap();

    // Class 0 ch 0 pools {0, 1, 3, 0}: p ∝ (ε, 1+ε, 3+ε, ε).
    let s = 4.0 + 4.0 * ENTROPY_EPS;
    let eps_term = -2.0 * (ENTROPY_EPS / s) * (ENTROPY_EPS / s).ln();
    let h00 = eps_term - ((1.0 + ENTROPY_EPS) / s) * ((1.0 + ENTROPY_EPS) / s).ln()
        - ((3.0 + ENTROPY_EPS) / s) * ((3.0 + ENTROPY_EPS) / s).ln();
    assert!((e.per_class[(0, 0)] - h00).abs() < 1e-12);

    let pooled = [
        [vec![0.0, 1.0, 3.0, 0.0], vec![5.0, 5.0, 5.0, 6.0]],
        [vec![-1.0, 1.0], vec![2.0, 2.0]],
        [vec![2.0, 2.0], vec![0.0, 4.0]],
    ];
    for (n, chans) in pooled.iter().enumerate() {
        for (c, v) in chans.iter().enumerate() {
            assert!((e.per_class[(n, c)] - entropy_oracle(v)).abs() < 1e-12, "class {n} channel {c}");
        }
    }
    for c in 0..2 {
        let sum: f64 = (0..3).map(|n| e.per_class[(n, c)]).sum();
        assert!((e.per_channel[c] - sum).abs() < 1e-9);
    }
    let lower = if e.per_channel[0] <= e.per_channel[1] { 0 } else { 1 };
    assert_eq!(e.kept, vec![lower]);
    assert_eq!(e.pruned(), vec![1 - lower]);
}

#[test]
fn uniform_class_gives_log_v() {
    for v in [1usize, 2, 7, 8, 64] {
        let a = FeatureMap::from_vec([1, 1, v, 1], vec![3.25; v]).unwrap();
        let b = FeatureMap::from_vec([1, 1, v, 1], (0..v).map(|i| i as f64).collect()).unwrap();
        let e = channel_entropy(&[&a, &b], &[0, 1], 1.0).unwrap();
        assert!((e.per_class[(0, 0)] - (v as f64).ln()).abs() <= 1e-12, "V = {v}");
    }
}

#[test]
fn within_class_constant_channel_has_maximal_entropy() {
    // Channel 0 is constant inside each class; channel 1 is noise. After the
    // shift to the minimum a constant channel becomes uniform, which is the
    // entropy maximum, so the noise channel is the one kept.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut maps = Vec::new();
    let mut labels = Vec::new();
    for class in 0..3 {
        for _ in 0..4 {
            let voxels: Vec<[f64; 2]> = (0..10).map(|_| [class as f64 * 2.0, rng.sample(StandardNormal)]).collect();
            maps.push(column(&voxels));
            labels.push(class);
        }
    }
    let refs: Vec<&FeatureMap> = maps.iter().collect();
    let e = channel_entropy(&refs, &labels, 0.5).unwrap();
    let v = 40.0f64;
    for n in 0..3 {
        assert!((e.per_class[(n, 0)] - v.ln()).abs() < 1e-12);
        let noise: Vec<f64> = maps
            .iter()
            .zip(&labels)
            .filter(|(_, &l)| l == n)
            .flat_map(|(m, _)| m.as_slice().iter().skip(1).step_by(2).copied().collect::<Vec<_>>())
            .collect();
        assert!((e.per_class[(n, 1)] - entropy_oracle(&noise)).abs() < 1e-12);
        assert!(e.per_class[(n, 1)] < e.per_class[(n, 0)]);
    }
    assert_eq!(e.kept, vec![1]);
}

#[test]
fn entropy_is_shift_scale_and_order_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let maps: Vec<FeatureMap> = (0..6)
        .map(|_| {
            let data = (0..3 * 3 * 2 * 4).map(|_| rng.sample(StandardNormal)).collect();
            FeatureMap::from_vec([3, 3, 2, 4], data).unwrap()
        })
        .collect();
    let labels = [0, 1, 2, 0, 1, 2];
    let base = channel_entropy(&maps.iter().collect::<Vec<_>>(), &labels, 0.5).unwrap();

    let shifted: Vec<FeatureMap> = maps
        .iter()
        .map(|m| FeatureMap::from_vec(m.dims(), m.as_slice().iter().map(|v| v + 17.5).collect()).unwrap())
        .collect();
    let e = channel_entropy(&shifted.iter().collect::<Vec<_>>(), &labels, 0.5).unwrap();
    assert_eq!(e.kept, base.kept);
    for c in 0..4 {
        assert!((e.per_channel[c] - base.per_channel[c]).abs() < 1e-9);
    }

    // scaling only moves the ε term, which is far below the tolerance here
    let scaled: Vec<FeatureMap> = maps
        .iter()
        .map(|m| FeatureMap::from_vec(m.dims(), m.as_slice().iter().map(|v| v * 3.0).collect()).unwrap())
        .collect();
    let e = channel_entropy(&scaled.iter().collect::<Vec<_>>(), &labels, 0.5).unwrap();
    assert_eq!(e.kept, base.kept);
    for c in 0..4 {
        assert!((e.per_channel[c] - base.per_channel[c]).abs() < 1e-9);
    }

    let order = [5, 3, 1, 0, 4, 2];
    let shuffled: Vec<&FeatureMap> = order.iter().map(|&i| &maps[i]).collect();
    let shuffled_labels: Vec<usize> = order.iter().map(|&i| labels[i]).collect();
    let e = channel_entropy(&shuffled, &shuffled_labels, 0.5).unwrap();
    assert_eq!(e.kept, base.kept);
    for c in 0..4 {
        assert!((e.per_channel[c] - base.per_channel[c]).abs() < 1e-12);
    }
}

#[test]
fn keep_counts_and_selection() {
    let m = FeatureMap::from_vec([1, 1, 2, 15], (0..30).map(f64::from).collect()).unwrap();
    let n = FeatureMap::from_vec([1, 1, 2, 15], (0..30).map(|v| f64::from(v * v)).collect()).unwrap();
    assert_eq!(channel_entropy(&[&m, &n], &[0, 1], 0.5).unwrap().kept.len(), 7);
    assert_eq!(channel_entropy(&[&m, &n], &[0, 1], 1.0).unwrap().kept, (0..15).collect::<Vec<_>>());

    let four = FeatureMap::from_vec([1, 1, 2, 4], (0..8).map(f64::from).collect()).unwrap();
    let sel = select_channels(&four, &[0, 2]).unwrap();
    assert_eq!(sel.as_slice(), &[0.0, 2.0, 4.0, 6.0]);
    assert_eq!(select_channels(&four, &[0, 1, 2, 3]).unwrap(), four);
}

fn toy(n_per: usize, d: usize, classes: usize, seed: u64) -> (Matrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for c in 0..classes {
        for _ in 0..n_per {
            for j in 0..d {
                let centre = if j % classes == c { 4.0 } else { 0.0 };
                data.push(centre + rng.sample::<f64, _>(StandardNormal));
            }
            labels.push(c);
        }
    }
    (Matrix::from_vec(classes * n_per, d, data).unwrap(), labels)
}

fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn objective(a: &DMatrix<f64>, y: &DMatrix<f64>, w: &DMatrix<f64>, lambda: f64) -> f64 {
    (a * w - y).norm_squared() + lambda * w.norm_squared()
}

fn check_ridge_optimality(n_per: usize, d: usize) {
    let (x, labels) = toy(n_per, d, 2, 5 + d as u64);
    let params = LagParams {
        centroids_per_class: 3,
        alpha: 0.5,
        ridge: 1e-3,
        seed: 1,
    };
    let m = fit_lag(&x, &labels, 2, &params).unwrap();
    let y = to_na(&soft_targets(&x, &labels, &m.centroids, &m.blocks, m.alpha));
    let a = to_na(&augment_bias(&x));
    let w = to_na(&m.weights);

    let lhs = a.transpose() * &a + DMatrix::identity(d + 1, d + 1) * params.ridge;
    let oracle = lhs.clone().lu().solve(&(a.transpose() * &y)).unwrap();
    assert!((&w - &oracle).amax() < 1e-8, "normal equations, D = {d}");

    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..20 {
        let (i, j) = (rng.random_range(0..w.nrows()), rng.random_range(0..w.ncols()));
        let mut up = w.clone();
        up[(i, j)] += h;
        let mut down = w.clone();
        down[(i, j)] -= h;
        let g = (objective(&a, &y, &up, params.ridge) - objective(&a, &y, &down, params.ridge)) / (2.0 * h);
        assert!(g.abs() < 1e-6, "gradient {g} at ({i},{j}), D = {d}");
    }
}

#[test]
fn ridge_solution_is_optimal_primal() {
    check_ridge_optimality(25, 6);
}

#[test]
fn ridge_solution_is_optimal_dual() {
    check_ridge_optimality(10, 40);
}

#[test]
fn lag_shapes_blocks_and_linearity() {
    let (x, labels) = toy(12, 10, 5, 9);
    let params = LagParams {
        seed: 3,
        ..LagParams::default()
    };
    let m = fit_lag(&x, &labels, 5, &params).unwrap();
    assert_eq!(m.output_dim(), 25);
    assert_eq!(m.blocks, vec![5; 5]);
    // each block lies inside the bounding box of its own class
    for c in 0..5 {
        for r in 0..5 {
            let centroid = m.centroids.row(c * 5 + r);
            for j in 0..10 {
                let col: Vec<f64> = (0..x.rows()).filter(|&i| labels[i] == c).map(|i| x[(i, j)]).collect();
                let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert!(centroid[j] >= lo - 1e-12 && centroid[j] <= hi + 1e-12);
            }
        }
    }
    assert_eq!(fit_lag(&x, &labels, 5, &params).unwrap(), m);

    let (x2, _) = toy(12, 10, 5, 10);
    let (al, be) = (0.7, -1.3);
    let mix: Vec<f64> = x.as_slice().iter().zip(x2.as_slice()).map(|(p, q)| al * p + be * q).collect();
    let mix = Matrix::from_vec(x.rows(), 10, mix).unwrap();
    let (f1, f2, fm) = (apply_lag(&m, &x).unwrap(), apply_lag(&m, &x2).unwrap(), apply_lag(&m, &mix).unwrap());
    let bias = m.weights.row(10);
    for i in 0..x.rows() {
        for k in 0..25 {
            let want = al * f1[(i, k)] + be * f2[(i, k)] + (1.0 - al - be) * bias[k];
            assert!((fm[(i, k)] - want).abs() < 1e-9);
        }
    }

    let dup = Matrix::from_vec(4, 10, x.row(0).repeat(4)).unwrap();
    let out = apply_lag(&m, &dup).unwrap();
    for i in 1..4 {
        assert_eq!(out.row(i), out.row(0));
    }
    let zero = sslhop_core::supervise::LagModel {
        weights: Matrix::zeros(11, 25),
        ..m
    };
    assert!(apply_lag(&zero, &x).unwrap().as_slice().iter().all(|&v| v == 0.0));
}

#[test]
fn sharp_targets_approach_one_hot() {
    let x = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
    let centroids = Matrix::from_rows(&[vec![0.0, 0.0], vec![3.0, 4.0], vec![9.0, 9.0]]).unwrap();
    let y = soft_targets(&x, &[0, 1], &centroids, &[2, 1], 50.0);
    assert!((y[(0, 0)] - 1.0).abs() < 1e-12 && y[(0, 1)] < 1e-12 && y[(0, 2)] == 0.0);
    assert_eq!((y[(1, 0)], y[(1, 1)], y[(1, 2)]), (0.0, 0.0, 1.0));
}
