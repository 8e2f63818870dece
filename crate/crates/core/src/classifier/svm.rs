use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::math::{dot, sqrt};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    /// Hinge-loss weight.
    pub c: f64,
    /// Stopping tolerance on the projected-gradient spread.
    pub tol: f64,
    pub max_epochs: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-4,
            max_epochs: 10_000,
        }
    }
}

/// One-vs-rest linear SVM over z-scored features.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    /// `K × D`, one machine per row, in standardized feature space.
    pub weights: Matrix,
    pub intercepts: Vec<f64>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub c: f64,
}

impl SvmModel {
    pub fn classes(&self) -> usize {
        self.weights.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.cols()
    }

    /// Decision values for one raw feature vector.
    pub fn scores_row(&self, x: &[f64], scratch: &mut [f64], out: &mut [f64]) {
        for ((s, &v), (&m, &sc)) in scratch.iter_mut().zip(x).zip(self.mean.iter().zip(&self.scale)) {
            *s = (v - m) / sc;
        }
        for (k, o) in out.iter_mut().enumerate() {
            *o = dot(self.weights.row(k), scratch) + self.intercepts[k];
        }
    }
}

fn standardize_stats(x: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (x.rows(), x.cols());
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, &v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = vec![0.0; d];
    for i in 0..n {
        for ((s, &v), &m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let scale = var
        .into_iter()
        .zip(&mean)
        .map(|(s, &m)| {
            let sd = sqrt(s / n as f64);
            // treat variance at rounding level as constant
            if sd > 1e-12 * (1.0 + m.abs()) {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

/// Binary L1-loss SVM by dual coordinate descent with a unit bias feature.
/// Returns `(w, b, dual objective after each epoch)`.
fn train_binary(x: &Matrix, y: &[f64], params: &SvmParams) -> (Vec<f64>, f64, Vec<f64>) {
    let (n, d) = (x.rows(), x.cols());
    let qd: Vec<f64> = (0..n).map(|i| dot(x.row(i), x.row(i)) + 1.0).collect();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut trace = Vec::new();
    let mut alpha_sum = 0.0;
    for _ in 0..params.max_epochs {
        let mut pg_max = f64::NEG_INFINITY;
        let mut pg_min = f64::INFINITY;
        for i in 0..n {
            let xi = x.row(i);
            let g = y[i] * (dot(&w, xi) + b) - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == params.c {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg.abs() > 1e-12 {
                let old = alpha[i];
                alpha[i] = (old - g / qd[i]).clamp(0.0, params.c);
                let step = (alpha[i] - old) * y[i];
                for (wj, &xj) in w.iter_mut().zip(xi) {
                    *wj += step * xj;
                }
                b += step;
                alpha_sum += alpha[i] - old;
            }
        }
        trace.push(0.5 * (dot(&w, &w) + b * b) - alpha_sum);
        if pg_max - pg_min <= params.tol {
            break;
        }
    }
    (w, b, trace)
}

/// Fit, also returning the per-class dual objective trace (one value per
/// epoch, non-increasing).
pub fn fit_svm_traced(
    x: &Matrix,
    labels: &[usize],
    classes: usize,
    params: &SvmParams,
) -> Result<(SvmModel, Vec<Vec<f64>>)> {
    if x.rows() != labels.len() {
        return Err(Error::ShapeMismatch(format!("{} rows for {} labels", x.rows(), labels.len())));
    }
    if classes < 2 {
        return Err(Error::InvalidArgument("SVM needs at least two classes".into()));
    }
    if !(params.c > 0.0) {
        return Err(Error::InvalidArgument(format!("SVM C must be positive, got {}", params.c)));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::InvalidArgument(format!("label {bad} outside {classes} classes")));
    }
    for k in 0..classes {
        if !labels.contains(&k) {
            return Err(Error::MissingClass(k));
        }
    }
    if let Some(i) = x.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "SVM feature row {} column {}",
            i / x.cols().max(1),
            i % x.cols().max(1)
        )));
    }
    let (mean, scale) = standardize_stats(x);
    let mut z = x.clone();
    for i in 0..z.rows() {
        for ((v, &m), &s) in z.row_mut(i).iter_mut().zip(&mean).zip(&scale) {
            *v = (*v - m) / s;
        }
    }
    let mut weights = Matrix::zeros(classes, x.cols());
    let mut intercepts = vec![0.0; classes];
    let mut traces = Vec::with_capacity(classes);
    for k in 0..classes {
        let y: Vec<f64> = labels.iter().map(|&l| if l == k { 1.0 } else { -1.0 }).collect();
        let (w, b, trace) = train_binary(&z, &y, params);
        weights.row_mut(k).copy_from_slice(&w);
        intercepts[k] = b;
        traces.push(trace);
    }
    Ok((
        SvmModel {
            weights,
            intercepts,
            mean,
            scale,
            c: params.c,
        },
        traces,
    ))
}

pub fn fit_svm(x: &Matrix, labels: &[usize], classes: usize, params: &SvmParams) -> Result<SvmModel> {
    fit_svm_traced(x, labels, classes, params).map(|(m, _)| m)
}

/// Labels (argmax of decision values, lower class id on ties) and the
/// `N × K` score matrix.
pub fn predict(model: &SvmModel, x: &Matrix) -> Result<(Vec<usize>, Matrix)> {
    if x.cols() != model.feature_dim() {
        return Err(Error::ShapeMismatch(format!(
            "features {} vs model {}",
            x.cols(),
            model.feature_dim()
        )));
    }
    let k = model.classes();
    let mut scores = Matrix::zeros(x.rows(), k);
    let mut scratch = vec![0.0; x.cols()];
    let mut labels = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        model.scores_row(x.row(i), &mut scratch, scores.row_mut(i));
        labels.push(argmax(scores.row(i)));
    }
    Ok((labels, scores))
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in v.iter().enumerate() {
        if s > v[best] {
            best = i;
        }
    }
    best
}
