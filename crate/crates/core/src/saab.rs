//! Saab transform: subspace approximation with adjusted bias.
//!
//! A fitted kernel projects a union vector `x` (length `D`) onto one DC
//! anchor `(1/√D)(1,…,1)` and `F−1` AC anchors, the leading principal
//! directions of `x_AC = x − x_DC`. Every output gets the shared bias
//! `b = d·√F`. AC coefficients are taken on `x − mean_ac`, so with `d = 0` the
//! transform is exactly a PCA projection of the AC part.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen, Matrix};
use crate::math::{dot, sqrt};
use crate::neighborhood::{for_each_union, union_grid, UnionMatrix};
use crate::tensor::FeatureMap;

const CHUNK_ROWS: usize = 512;

/// Relative eigenvalue floor below which an AC component counts as outside
/// the data's rank and is zero-padded.
const RANK_TOL: f64 = 1e-10;

/// Streaming mean/scatter accumulator.
///
/// Rows are buffered in chunks; each chunk is centered on its own mean
/// (two-pass) and merged into the running totals with the pairwise update,
/// so large offsets do not destroy precision.
#[derive(Debug, Clone)]
pub struct CovarianceAccumulator {
    dim: usize,
    count: usize,
    mean: Vec<f64>,
    // upper triangle of the centered scatter, full D×D storage
    scatter: Vec<f64>,
    chunk: Vec<f64>,
    centered: Vec<f64>,
}

/// Finalized first and second moments.
#[derive(Debug, Clone)]
pub struct Moments {
    pub count: usize,
    pub mean: Vec<f64>,
    /// Population covariance (scatter / count), symmetric.
    pub covariance: Matrix,
}

impl CovarianceAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            count: 0,
            mean: vec![0.0; dim],
            scatter: vec![0.0; dim * dim],
            chunk: Vec::with_capacity(CHUNK_ROWS * dim),
            centered: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count + self.chunk.len() / self.dim.max(1)
    }

    pub fn push(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.dim);
        self.chunk.extend_from_slice(row);
        if self.chunk.len() >= CHUNK_ROWS * self.dim {
            self.flush();
        }
    }

    fn flush(&mut self) {
        let d = self.dim;
        if d == 0 || self.chunk.is_empty() {
            self.chunk.clear();
            return;
        }
        let nb = self.chunk.len() / d;
        let mut mb = vec![0.0; d];
        for row in self.chunk.chunks_exact(d) {
            for (m, &v) in mb.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mb {
            *m /= nb as f64;
        }
        let mut sb = vec![0.0; d * d];
        for row in self.chunk.chunks_exact(d) {
            for ((c, &v), &m) in self.centered.iter_mut().zip(row).zip(&mb) {
                *c = v - m;
            }
            let c = &self.centered;
            for i in 0..d {
                let ci = c[i];
                let srow = &mut sb[i * d + i..(i + 1) * d];
                for (s, &cj) in srow.iter_mut().zip(&c[i..]) {
                    *s += ci * cj;
                }
            }
        }
        self.chunk.clear();
        self.merge_parts(nb, &mb, &sb);
    }

    fn merge_parts(&mut self, nb: usize, mb: &[f64], sb: &[f64]) {
        let d = self.dim;
        if nb == 0 {
            return;
        }
        if self.count == 0 {
            self.count = nb;
            self.mean.copy_from_slice(mb);
            self.scatter.copy_from_slice(sb);
            return;
        }
        let na = self.count as f64;
        let nbf = nb as f64;
        let n = na + nbf;
        let delta: Vec<f64> = mb.iter().zip(&self.mean).map(|(b, a)| b - a).collect();
        let w = na * nbf / n;
        for i in 0..d {
            for j in i..d {
                self.scatter[i * d + j] += sb[i * d + j] + delta[i] * delta[j] * w;
            }
        }
        for (m, dl) in self.mean.iter_mut().zip(&delta) {
            *m += dl * nbf / n;
        }
        self.count += nb;
    }

    /// Fold `other` into `self`. Merging in a fixed order keeps the result
    /// independent of how work was scheduled.
    pub fn merge(&mut self, mut other: CovarianceAccumulator) {
        assert_eq!(self.dim, other.dim);
        self.flush();
        other.flush();
        self.merge_parts(other.count, &other.mean, &other.scatter);
    }

    pub fn finish(mut self) -> Moments {
        self.flush();
        let d = self.dim;
        let mut cov = Matrix::from_vec(d, d, self.scatter).expect("square");
        if self.count > 0 {
            for v in cov.as_mut_slice() {
                *v /= self.count as f64;
            }
        }
        cov.mirror_upper();
        Moments {
            count: self.count,
            mean: self.mean,
            covariance: cov,
        }
    }
}

/// Fitted transform for one layer and direction.
#[derive(Debug, Clone, PartialEq)]
pub struct SaabKernel {
    dim: usize,
    /// `(F−1) × D`, one AC anchor per row.
    ac: Matrix,
    bias: f64,
    mean_ac: Vec<f64>,
    energy: Vec<f64>,
    degenerate: bool,
    padded: usize,
}

impl SaabKernel {
    /// Reassemble a kernel from stored parts (model loading).
    pub fn from_parts(
        ac: Matrix,
        bias: f64,
        mean_ac: Vec<f64>,
        energy: Vec<f64>,
        degenerate: bool,
        padded: usize,
    ) -> Result<Self> {
        let dim = mean_ac.len();
        if ac.cols() != dim || energy.len() != ac.rows() || dim == 0 {
            return Err(Error::ShapeMismatch("saab kernel parts".into()));
        }
        Ok(Self {
            dim,
            ac,
            bias,
            mean_ac,
            energy,
            degenerate,
            padded,
        })
    }

    /// Union vector length `D`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Output channels `F` (DC plus AC).
    pub fn filters(&self) -> usize {
        self.ac.rows() + 1
    }

    pub fn dc(&self) -> Vec<f64> {
        vec![1.0 / sqrt(self.dim as f64); self.dim]
    }

    pub fn ac(&self) -> &Matrix {
        &self.ac
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn mean_ac(&self) -> &[f64] {
        &self.mean_ac
    }

    /// Per-AC-component explained-variance ratios.
    pub fn energy(&self) -> &[f64] {
        &self.energy
    }

    /// Set when the input had fewer than two rows or no AC variance.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Number of trailing AC anchors zero-padded because the data rank was
    /// too small.
    pub fn padded(&self) -> usize {
        self.padded
    }

    /// Build a kernel from accumulated moments of the raw union vectors.
    pub fn from_moments(moments: &Moments, filters: usize, bias_scale: f64) -> Result<Self> {
        if filters == 0 {
            return Err(Error::InvalidArgument("Saab needs at least one filter".into()));
        }
        let dim = moments.mean.len();
        if dim == 0 {
            return Err(Error::InvalidArgument("empty union vectors".into()));
        }
        let n_ac = filters - 1;
        let bias = bias_scale * sqrt(filters as f64);
        let mean_dc = moments.mean.iter().sum::<f64>() / dim as f64;
        let mean_ac: Vec<f64> = moments.mean.iter().map(|m| m - mean_dc).collect();

        let mut ac = Matrix::zeros(n_ac, dim);
        let mut energy = vec![0.0; n_ac];
        let too_few = moments.count < 2;
        let mut degenerate = too_few;
        let mut usable = 0;

        if !too_few && dim > 1 {
            let q = helmert_basis(dim);
            // Covariance of x_AC restricted to the DC complement: QᵀΣQ.
            let sq = moments.covariance.matmul(&q)?;
            let reduced = q.transpose().matmul(&sq)?;
            let eig = symmetric_eigen(&reduced)?;
            let total: f64 = (0..dim - 1).map(|i| reduced[(i, i)]).sum();
            if total <= f64::MIN_POSITIVE || eig.values[0] <= 0.0 {
                degenerate = true;
            } else {
                let floor = RANK_TOL * eig.values[0];
                let mut anchors: Vec<(f64, Vec<f64>)> = Vec::new();
                for (k, &lambda) in eig.values.iter().enumerate().take(n_ac) {
                    if lambda <= floor {
                        break;
                    }
                    let v = eig.vectors.row(k);
                    let mut a = vec![0.0; dim];
                    for (i, ai) in a.iter_mut().enumerate() {
                        *ai = dot(q.row(i), v);
                    }
                    normalize_sign(&mut a);
                    anchors.push((lambda, a));
                }
                order_ties(&mut anchors, eig.values[0]);
                usable = anchors.len();
                for (k, (lambda, a)) in anchors.into_iter().enumerate() {
                    ac.row_mut(k).copy_from_slice(&a);
                    energy[k] = lambda / total;
                }
            }
        } else if dim == 1 {
            degenerate = true;
        }

        let padded = n_ac - usable;
        if degenerate {
            log::warn!("Saab input is degenerate ({} rows); AC anchors are zero", moments.count);
        } else if padded > 0 {
            log::warn!("Saab: {padded} of {n_ac} AC anchors exceed the data rank and are zero-padded");
        }
        Ok(Self {
            dim,
            ac,
            bias,
            mean_ac,
            energy,
            degenerate,
            padded,
        })
    }

    /// Transform one union vector into `out` (length `F`). `scratch` must have
    /// length `D`.
    pub fn transform_row(&self, x: &[f64], scratch: &mut [f64], out: &mut [f64]) {
        out[0] = x.iter().sum::<f64>() / sqrt(self.dim as f64) + self.bias;
        for ((s, &v), &m) in scratch.iter_mut().zip(x).zip(&self.mean_ac) {
            *s = v - m;
        }
        for (k, o) in out[1..].iter_mut().enumerate() {
            *o = dot(self.ac.row(k), scratch) + self.bias;
        }
    }

    /// Stride-1 unions of `map` transformed into a `(H−h+1, W−w+1, Z−z+1, F)`
    /// map, without materializing the union matrix.
    pub fn apply_map(&self, map: &FeatureMap, window: [usize; 3]) -> Result<FeatureMap> {
        let d = crate::neighborhood::union_dim(window, map.channels());
        if d != self.dim {
            return Err(Error::ShapeMismatch(alloc::format!(
                "union length {d} vs kernel dim {}",
                self.dim
            )));
        }
        let grid = union_grid(map.spatial(), window)?;
        let f = self.filters();
        let mut out = FeatureMap::zeros([grid[0], grid[1], grid[2], f]);
        let mut scratch = vec![0.0; d];
        let dst = out.as_mut_slice();
        for_each_union(map, window, |n, row| {
            self.transform_row(row, &mut scratch, &mut dst[n * f..(n + 1) * f]);
        })?;
        Ok(out)
    }
}

/// Orthonormal basis of the complement of `(1,…,1)`, as the columns of a
/// `D × (D−1)` matrix (Helmert contrasts).
fn helmert_basis(dim: usize) -> Matrix {
    let mut q = Matrix::zeros(dim, dim - 1);
    for j in 1..dim {
        let jf = j as f64;
        let scale = 1.0 / sqrt(jf * (jf + 1.0));
        for i in 0..j {
            q[(i, j - 1)] = scale;
        }
        q[(j, j - 1)] = -jf * scale;
    }
    q
}

/// Flip `a` so its largest-magnitude entry (first on ties) is positive.
fn normalize_sign(a: &mut [f64]) {
    let mut best = 0;
    for (i, v) in a.iter().enumerate() {
        if v.abs() > a[best].abs() {
            best = i;
        }
    }
    if a[best] < 0.0 {
        for v in a.iter_mut() {
            *v = -*v;
        }
    }
}

/// Within runs of numerically equal eigenvalues, order anchors by their
/// first differing component (larger first).
fn order_ties(anchors: &mut [(f64, Vec<f64>)], scale: f64) {
    let tol = 1e-12 * scale;
    let mut start = 0;
    while start < anchors.len() {
        let mut end = start + 1;
        while end < anchors.len() && (anchors[end - 1].0 - anchors[end].0).abs() <= tol {
            end += 1;
        }
        if end - start > 1 {
            anchors[start..end].sort_by(|a, b| {
                for (x, y) in a.1.iter().zip(&b.1) {
                    if x != y {
                        return y.total_cmp(x);
                    }
                }
                core::cmp::Ordering::Equal
            });
        }
        start = end;
    }
}

/// Fit a Saab kernel with `filters` outputs on a materialized union matrix.
pub fn fit_saab(x: &UnionMatrix, filters: usize, bias_scale: f64) -> Result<SaabKernel> {
    let mut acc = CovarianceAccumulator::new(x.dim());
    for r in 0..x.rows() {
        acc.push(x.matrix.row(r));
    }
    SaabKernel::from_moments(&acc.finish(), filters, bias_scale)
}

/// Streaming fit over the unions of several maps. Per-map moments are
/// computed independently (in parallel when enabled) and merged in map order.
pub fn fit_saab_maps(
    maps: &[&FeatureMap],
    window: [usize; 3],
    filters: usize,
    bias_scale: f64,
) -> Result<SaabKernel> {
    let first = maps
        .first()
        .ok_or_else(|| Error::InvalidArgument("no maps to fit".into()))?;
    let dim = crate::neighborhood::union_dim(window, first.channels());
    let parts = crate::par::map_indexed(maps.len(), |i| -> Result<CovarianceAccumulator> {
        let mut acc = CovarianceAccumulator::new(dim);
        if maps[i].channels() != first.channels() {
            return Err(Error::ShapeMismatch("maps differ in channel count".into()));
        }
        for_each_union(maps[i], window, |_, row| acc.push(row))?;
        acc.flush();
        Ok(acc)
    });
    let mut total = CovarianceAccumulator::new(dim);
    for part in parts {
        total.merge(part?);
    }
    SaabKernel::from_moments(&total.finish(), filters, bias_scale)
}

/// Transform every row of `x`; returns an `N × F` matrix.
pub fn apply_saab(kernel: &SaabKernel, x: &UnionMatrix) -> Result<Matrix> {
    if x.dim() != kernel.dim() {
        return Err(Error::ShapeMismatch(alloc::format!(
            "union length {} vs kernel dim {}",
            x.dim(),
            kernel.dim()
        )));
    }
    let f = kernel.filters();
    let mut out = Matrix::zeros(x.rows(), f);
    let mut scratch = vec![0.0; kernel.dim()];
    for r in 0..x.rows() {
        kernel.transform_row(x.matrix.row(r), &mut scratch, out.row_mut(r));
    }
    Ok(out)
}

/// Cumulative explained-variance ratios over the AC components.
pub fn energy_curve(kernel: &SaabKernel) -> Vec<f64> {
    let mut acc = 0.0;
    kernel
        .energy()
        .iter()
        .map(|e| {
            acc += e;
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unions(n: usize, d: usize, seed: u64) -> UnionMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        UnionMatrix {
            matrix: Matrix::from_vec(n, d, data).unwrap(),
            source_dims: [n, 1, 1, d],
            window: [1, 1, 1],
        }
    }

    #[test]
    fn full_config_layer_one_kernel_shape() {
        let x = random_unions(300, 54, 1);
        let k = fit_saab(&x, 5, 0.0).unwrap();
        assert_eq!(k.filters(), 5);
        assert_eq!(k.ac().rows(), 4);
        let dc = k.dc();
        assert!(dc.iter().all(|&v| (v - 1.0 / 54f64.sqrt()).abs() < 1e-15));
    }

    #[test]
    fn constant_rows_have_no_ac_energy() {
        let c = 2.5;
        let x = UnionMatrix {
            matrix: Matrix::from_vec(10, 6, vec![c; 60]).unwrap(),
            source_dims: [10, 1, 1, 6],
            window: [1, 1, 1],
        };
        let k = fit_saab(&x, 4, 0.0).unwrap();
        assert!(k.is_degenerate());
        let f = apply_saab(&k, &x).unwrap();
        for r in 0..10 {
            assert!((f[(r, 0)] - c * 6f64.sqrt()).abs() < 1e-12);
            assert!(f.row(r)[1..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn single_row_is_degenerate() {
        let x = random_unions(1, 5, 3);
        let k = fit_saab(&x, 3, 0.0).unwrap();
        assert!(k.is_degenerate());
        assert_eq!(k.ac().rows(), 2);
    }

    #[test]
    fn dc_of_constant_patch() {
        let x = random_unions(40, 4, 9);
        let k = fit_saab(&x, 2, 0.0).unwrap();
        let patch = UnionMatrix {
            matrix: Matrix::from_vec(1, 4, vec![4.0; 4]).unwrap(),
            source_dims: [1, 1, 1, 4],
            window: [1, 1, 1],
        };
        let f = apply_saab(&k, &patch).unwrap();
        assert!((f[(0, 0)] - 8.0).abs() < 1e-12);
    }

    #[test]
    fn bias_is_scaled_by_root_filters() {
        let x = random_unions(50, 6, 4);
        let k = fit_saab(&x, 4, 0.5).unwrap();
        assert!((k.bias() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rank_deficient_pads_and_flags() {
        // rows vary along one AC direction only
        let mut data = vec![];
        for i in 0..20 {
            let t = i as f64;
            data.extend_from_slice(&[t, -t, 0.0, 0.0]);
        }
        let x = UnionMatrix {
            matrix: Matrix::from_vec(20, 4, data).unwrap(),
            source_dims: [20, 1, 1, 4],
            window: [1, 1, 1],
        };
        let k = fit_saab(&x, 4, 0.0).unwrap();
        assert_eq!(k.padded(), 2);
        assert!((energy_curve(&k)[0] - 1.0).abs() < 1e-12);
        assert!(k.ac().row(2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn too_many_filters_are_padded() {
        let x = random_unions(100, 3, 5);
        let k = fit_saab(&x, 6, 0.0).unwrap();
        assert_eq!(k.filters(), 6);
        assert_eq!(k.padded(), 3);
    }

    #[test]
    fn zero_filters_rejected() {
        let x = random_unions(10, 3, 5);
        assert!(matches!(fit_saab(&x, 0, 0.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn streaming_matches_materialized() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let maps: Vec<FeatureMap> = (0..3)
            .map(|_| {
                let dims = [6, 5, 7, 2];
                let n = dims.iter().product();
                FeatureMap::from_vec(dims, (0..n).map(|_| rng.random::<f64>() + 3.0).collect()).unwrap()
            })
            .collect();
        let refs: Vec<&FeatureMap> = maps.iter().collect();
        let streamed = fit_saab_maps(&refs, [3, 3, 3], 8, 0.0).unwrap();

        let mut rows = vec![];
        for m in &maps {
            let u = crate::neighborhood::extract_unions(m, [3, 3, 3]).unwrap();
            rows.extend_from_slice(u.matrix.as_slice());
        }
        let n = rows.len() / 54;
        let all = UnionMatrix {
            matrix: Matrix::from_vec(n, 54, rows).unwrap(),
            source_dims: [0; 4],
            window: [3, 3, 3],
        };
        let direct = fit_saab(&all, 8, 0.0).unwrap();
        assert!(streamed.ac().max_abs_diff(direct.ac()) < 1e-10);
        for (a, b) in streamed.mean_ac().iter().zip(direct.mean_ac()) {
            assert!((a - b).abs() < 1e-10);
        }

        let applied = streamed.apply_map(&maps[0], [3, 3, 3]).unwrap();
        let u = crate::neighborhood::extract_unions(&maps[0], [3, 3, 3]).unwrap();
        let m = apply_saab(&streamed, &u).unwrap();
        assert_eq!(applied.as_slice(), m.as_slice());
    }
}
