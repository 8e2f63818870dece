//! Supervised dimension reduction: class-wise entropy-guided channel
//! selection (CE-FS) and label-assisted regression (LAG).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_solve, Matrix};
use crate::math::{exp, ln, sq_dist, sqrt};
use crate::tensor::FeatureMap;

/// Added to every shifted value so that log terms stay finite.
pub const ENTROPY_EPS: f64 = 1e-12;

/// Per-channel entropies and the retained channel set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelEntropy {
    /// Total entropy per channel, summed over classes.
    pub per_channel: Vec<f64>,
    /// `K × C`, entropy of each class's pooled voxel distribution.
    pub per_class: Matrix,
    /// Retained channel indices, ascending.
    pub kept: Vec<usize>,
}

impl ChannelEntropy {
    pub fn pruned(&self) -> Vec<usize> {
        (0..self.per_channel.len())
            .filter(|c| !self.kept.contains(c))
            .collect()
    }
}

/// Number of channels retained out of `channels` at `keep_ratio`: the floor,
/// at least one.
pub fn kept_count(channels: usize, keep_ratio: f64) -> usize {
    let k = (channels as f64 * keep_ratio + 1e-9) as usize;
    k.clamp(1, channels.max(1))
}

/// Entropy of one pooled value set after shift-to-min, `+ε` and L1
/// normalization.
pub fn shifted_entropy<'a>(values: impl Iterator<Item = &'a f64> + Clone) -> f64 {
    let min = values.clone().fold(f64::INFINITY, |a, &b| a.min(b));
    let total: f64 = values.clone().map(|v| v - min + ENTROPY_EPS).sum();
    -values
        .map(|v| {
            let p = (v - min + ENTROPY_EPS) / total;
            p * ln(p)
        })
        .sum::<f64>()
}

/// Rank channels by summed per-class entropy and keep the lowest
/// `floor(C · keep_ratio)` (ties go to the lower channel index).
pub fn channel_entropy(
    features: &[&FeatureMap],
    labels: &[usize],
    keep_ratio: f64,
) -> Result<ChannelEntropy> {
    if features.len() != labels.len() || features.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} feature maps for {} labels",
            features.len(),
            labels.len()
        )));
    }
    if !(keep_ratio > 0.0 && keep_ratio <= 1.0) {
        return Err(Error::InvalidArgument(format!("keep_ratio {keep_ratio} not in (0, 1]")));
    }
    let dims = features[0].dims();
    if features.iter().any(|f| f.dims() != dims) {
        return Err(Error::ShapeMismatch("feature maps differ in shape".into()));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let present: Vec<bool> = (0..classes).map(|n| labels.contains(&n)).collect();
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::SingleClass);
    }
    let c = dims[3];
    let mut per_class = Matrix::zeros(classes, c);
    for n in (0..classes).filter(|&n| present[n]) {
        let members: Vec<&FeatureMap> = features
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == n)
            .map(|(f, _)| *f)
            .collect();
        for ch in 0..c {
            let pooled = members
                .iter()
                .flat_map(|m| m.as_slice().iter().skip(ch).step_by(c));
            per_class[(n, ch)] = shifted_entropy(pooled);
        }
    }
    let per_channel: Vec<f64> = (0..c)
        .map(|ch| (0..classes).map(|n| per_class[(n, ch)]).sum())
        .collect();
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| per_channel[a].total_cmp(&per_channel[b]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = order[..kept_count(c, keep_ratio)].to_vec();
    kept.sort_unstable();
    Ok(ChannelEntropy {
        per_channel,
        per_class,
        kept,
    })
}

/// Copy channels `kept[j]` into output channel `j`.
pub fn select_channels(map: &FeatureMap, kept: &[usize]) -> Result<FeatureMap> {
    let [h, w, z, c] = map.dims();
    for (i, &k) in kept.iter().enumerate() {
        if k >= c {
            return Err(Error::IndexOutOfRange { index: k, channels: c });
        }
        if i > 0 && kept[i - 1] >= k {
            return Err(Error::InvalidArgument("kept indices must be strictly increasing".into()));
        }
    }
    if kept.len() == c {
        return Ok(map.clone());
    }
    let mut data = Vec::with_capacity(h * w * z * kept.len());
    for voxel in map.as_slice().chunks_exact(c) {
        data.extend(kept.iter().map(|&k| voxel[k]));
    }
    FeatureMap::from_vec([h, w, z, kept.len()], data)
}

/// Hyper-parameters of label-assisted regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagParams {
    /// Centroids per class (`M`); output length is `K·M`.
    pub centroids_per_class: usize,
    /// Soft-label sharpness.
    pub alpha: f64,
    /// Ridge penalty λ.
    pub ridge: f64,
    pub seed: u64,
}

impl Default for LagParams {
    fn default() -> Self {
        Self {
            centroids_per_class: 5,
            alpha: 10.0,
            ridge: 1e-3,
            seed: 0,
        }
    }
}

/// Fitted label-assisted regression.
#[derive(Debug, Clone, PartialEq)]
pub struct LagModel {
    /// Centroid rows grouped by class, `Σ blocks × D_in`.
    pub centroids: Matrix,
    /// Centroids per class (normally all `M`; smaller after a collapse).
    pub blocks: Vec<usize>,
    pub alpha: f64,
    /// `(D_in + 1) × Σ blocks`, bias in the last row.
    pub weights: Matrix,
}

impl LagModel {
    pub fn input_dim(&self) -> usize {
        self.centroids.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.cols()
    }

    /// Project one input vector.
    pub fn apply_row(&self, x: &[f64], out: &mut [f64]) {
        let d = self.input_dim();
        out.copy_from_slice(self.weights.row(d));
        for (i, &v) in x.iter().enumerate() {
            if v != 0.0 {
                for (o, &w) in out.iter_mut().zip(self.weights.row(i)) {
                    *o += v * w;
                }
            }
        }
    }
}

const KMEANS_MAX_ITER: usize = 300;
const KMEANS_TOL: f64 = 1e-6;

/// Result of [`kmeans`].
#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub iterations: usize,
    /// True when an empty cluster forced a re-seed or a reduced `k`.
    pub collapsed: bool,
}

fn kmeans_pp_init(rows: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = rows.len();
    let mut centers: Vec<Vec<f64>> = vec![rows[rng.random_range(0..n)].to_vec()];
    let mut d2: Vec<f64> = rows.iter().map(|r| sq_dist(r, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            break;
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = n - 1;
        for (i, &d) in d2.iter().enumerate() {
            acc += d;
            if acc > target && d > 0.0 {
                pick = i;
                break;
            }
        }
        if d2[pick] <= 0.0 {
            pick = d2.iter().rposition(|&d| d > 0.0).unwrap_or(pick);
        }
        let c = rows[pick].to_vec();
        for (d, r) in d2.iter_mut().zip(rows) {
            *d = d.min(sq_dist(r, &c));
        }
        centers.push(c);
    }
    centers
}

fn nearest(row: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centers.iter().enumerate() {
        let d = sq_dist(row, c);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

// Lloyd iterations. With `drop_empty` unset an empty cluster aborts (None).
fn lloyd(rows: &[&[f64]], mut centers: Vec<Vec<f64>>, drop_empty: bool) -> Option<(Vec<Vec<f64>>, usize)> {
    let dim = rows[0].len();
    for it in 1..=KMEANS_MAX_ITER {
        let mut sums = vec![vec![0.0; dim]; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for r in rows {
            let j = nearest(r, &centers);
            counts[j] += 1;
            for (s, &v) in sums[j].iter_mut().zip(r.iter()) {
                *s += v;
            }
        }
        if counts.contains(&0) {
            if !drop_empty {
                return None;
            }
            let mut keep = Vec::new();
            for (j, c) in centers.into_iter().enumerate() {
                if counts[j] > 0 {
                    keep.push(c);
                }
            }
            centers = keep;
            continue;
        }
        let mut shift: f64 = 0.0;
        for ((c, s), &n) in centers.iter_mut().zip(&sums).zip(&counts) {
            let mut d2 = 0.0;
            for (cv, &sv) in c.iter_mut().zip(s) {
                let nv = sv / n as f64;
                d2 += (nv - *cv) * (nv - *cv);
                *cv = nv;
            }
            shift = shift.max(sqrt(d2));
        }
        if shift <= KMEANS_TOL {
            return Some((centers, it));
        }
    }
    Some((centers, KMEANS_MAX_ITER))
}

/// Seeded k-means with k-means++ initialization. An empty cluster triggers
/// one re-seed; if that also collapses, empty clusters are dropped and fewer
/// than `k` centroids are returned.
pub fn kmeans(rows: &[&[f64]], k: usize, seed: u64) -> Result<KMeans> {
    if k == 0 || rows.len() < k {
        return Err(Error::InvalidArgument(format!("k-means with k={k} on {} rows", rows.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = kmeans_pp_init(rows, k, &mut rng);
    if init.len() == k {
        if let Some((centroids, iterations)) = lloyd(rows, init, false) {
            return Ok(KMeans {
                centroids,
                iterations,
                collapsed: false,
            });
        }
    }
    log::warn!("k-means cluster collapse with k={k}; re-seeding");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let init = kmeans_pp_init(rows, k, &mut rng);
    let (centroids, iterations) = lloyd(rows, init, true).expect("drop_empty always succeeds");
    if centroids.len() < k {
        log::warn!("k-means reduced from {k} to {} centroids", centroids.len());
    }
    Ok(KMeans {
        centroids,
        iterations,
        collapsed: true,
    })
}

/// Soft pseudo-label targets: for a class-`n` sample, the class-`n` block
/// holds `exp(−alpha·‖x − c_j‖)` normalized over the block; other blocks are
/// zero.
pub fn soft_targets(x: &Matrix, labels: &[usize], centroids: &Matrix, blocks: &[usize], alpha: f64) -> Matrix {
    let offsets: Vec<usize> = blocks
        .iter()
        .scan(0, |acc, &b| {
            let o = *acc;
            *acc += b;
            Some(o)
        })
        .collect();
    let total: usize = blocks.iter().sum();
    let mut y = Matrix::zeros(x.rows(), total);
    for (i, &label) in labels.iter().enumerate() {
        let off = offsets[label];
        let dists: Vec<f64> = (0..blocks[label])
            .map(|j| sqrt(sq_dist(x.row(i), centroids.row(off + j))))
            .collect();
        // shift by the nearest distance; the normalization cancels it
        let dmin = dists.iter().copied().fold(f64::INFINITY, f64::min);
        let raw: Vec<f64> = dists.iter().map(|d| exp(-alpha * (d - dmin))).collect();
        let s: f64 = raw.iter().sum();
        for (j, r) in raw.iter().enumerate() {
            y[(i, off + j)] = r / s;
        }
    }
    y
}

/// `[X, 1]`.
pub fn augment_bias(x: &Matrix) -> Matrix {
    let (n, d) = (x.rows(), x.cols());
    let mut a = Matrix::zeros(n, d + 1);
    for i in 0..n {
        a.row_mut(i)[..d].copy_from_slice(x.row(i));
        a[(i, d)] = 1.0;
    }
    a
}

/// Minimizer of `‖A W − Y‖² + λ‖W‖²`. Uses the primal normal equations when
/// `A` has no more columns than rows, otherwise the equivalent dual form
/// `Aᵀ(AAᵀ + λI)⁻¹Y`.
pub fn ridge_solve(a: &Matrix, y: &Matrix, lambda: f64) -> Result<Matrix> {
    if a.rows() != y.rows() {
        return Err(Error::ShapeMismatch("ridge rows".into()));
    }
    if lambda <= 0.0 {
        return Err(Error::InvalidArgument("ridge penalty must be positive".into()));
    }
    if a.cols() <= a.rows() {
        let mut g = a.gram();
        for i in 0..g.rows() {
            g[(i, i)] += lambda;
        }
        let rhs = a.transpose().matmul(y)?;
        cholesky_solve(&g, &rhs)
    } else {
        let mut g = a.outer_gram();
        for i in 0..g.rows() {
            g[(i, i)] += lambda;
        }
        let z = cholesky_solve(&g, y)?;
        a.transpose().matmul(&z)
    }
}

/// Fit LAG on `x` (`N × D_in`) with labels in `0..classes`.
pub fn fit_lag(x: &Matrix, labels: &[usize], classes: usize, params: &LagParams) -> Result<LagModel> {
    if x.rows() != labels.len() {
        return Err(Error::ShapeMismatch(format!("{} rows for {} labels", x.rows(), labels.len())));
    }
    if x.cols() == 0 {
        return Err(Error::InvalidArgument("LAG input dimension is zero".into()));
    }
    let m = params.centroids_per_class;
    if m == 0 || !(params.alpha > 0.0) {
        return Err(Error::InvalidArgument("LAG needs M >= 1 and alpha > 0".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::InvalidArgument(format!("label {bad} outside {classes} classes")));
    }
    let mut blocks = Vec::with_capacity(classes);
    let mut centroid_rows: Vec<f64> = Vec::new();
    for n in 0..classes {
        let rows: Vec<&[f64]> = (0..x.rows()).filter(|&i| labels[i] == n).map(|i| x.row(i)).collect();
        if rows.is_empty() {
            return Err(Error::MissingClass(n));
        }
        if rows.len() < m {
            return Err(Error::TooFewSamples {
                class: n,
                have: rows.len(),
                need: m,
            });
        }
        let seed = params.seed.wrapping_add((n as u64 + 1).wrapping_mul(0x2545_f491_4f6c_dd1d));
        let km = kmeans(&rows, m, seed)?;
        blocks.push(km.centroids.len());
        for c in &km.centroids {
            centroid_rows.extend_from_slice(c);
        }
    }
    let total: usize = blocks.iter().sum();
    let centroids = Matrix::from_vec(total, x.cols(), centroid_rows)?;
    let y = soft_targets(x, labels, &centroids, &blocks, params.alpha);
    let weights = ridge_solve(&augment_bias(x), &y, params.ridge)?;
    Ok(LagModel {
        centroids,
        blocks,
        alpha: params.alpha,
        weights,
    })
}

/// `[X, 1] · W`.
pub fn apply_lag(model: &LagModel, x: &Matrix) -> Result<Matrix> {
    if x.cols() != model.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "LAG input {} vs model {}",
            x.cols(),
            model.input_dim()
        )));
    }
    let mut out = Matrix::zeros(x.rows(), model.output_dim());
    for i in 0..x.rows() {
        model.apply_row(x.row(i), out.row_mut(i));
    }
    Ok(out)
}
