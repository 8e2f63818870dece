//! Neighborhood unions (stride-1 3D windows flattened to vectors) and
//! ceil-mode 2×2×2 max-pooling.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::tensor::FeatureMap;

/// Materialized unions: one row per window origin, `D = h·w·z·C` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct UnionMatrix {
    pub matrix: Matrix,
    pub source_dims: [usize; 4],
    pub window: [usize; 3],
}

impl UnionMatrix {
    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }
}

/// Spatial dims of the union grid: `(H−h+1, W−w+1, Z−z+1)`.
pub fn union_grid(spatial: [usize; 3], window: [usize; 3]) -> Result<[usize; 3]> {
    if (0..3).any(|a| window[a] == 0 || window[a] > spatial[a]) {
        return Err(Error::WindowTooLarge {
            window,
            dims: spatial,
        });
    }
    Ok([
        spatial[0] - window[0] + 1,
        spatial[1] - window[1] + 1,
        spatial[2] - window[2] + 1,
    ])
}

/// Union vector length `h·w·z·C`.
pub fn union_dim(window: [usize; 3], channels: usize) -> usize {
    window[0] * window[1] * window[2] * channels
}

/// Visit every union in lexicographic `(y, x, z)` origin order. Each row is
/// laid out `(dy, dx, dz, c)` with the channel fastest. The buffer passed to
/// `f` is reused between calls.
pub fn for_each_union<F>(map: &FeatureMap, window: [usize; 3], mut f: F) -> Result<()>
where
    F: FnMut(usize, &[f64]),
{
    let [h, w, z, c] = map.dims();
    let grid = union_grid([h, w, z], window)?;
    let run = window[2] * c;
    let mut buf = alloc::vec![0.0; union_dim(window, c)];
    let src = map.as_slice();
    let mut n = 0;
    for y in 0..grid[0] {
        for x in 0..grid[1] {
            for oz in 0..grid[2] {
                let mut o = 0;
                for dy in 0..window[0] {
                    for dx in 0..window[1] {
                        let start = map.index(y + dy, x + dx, oz, 0);
                        buf[o..o + run].copy_from_slice(&src[start..start + run]);
                        o += run;
                    }
                }
                f(n, &buf);
                n += 1;
            }
        }
    }
    Ok(())
}

pub fn extract_unions(map: &FeatureMap, window: [usize; 3]) -> Result<UnionMatrix> {
    let [h, w, z, c] = map.dims();
    let grid = union_grid([h, w, z], window)?;
    let rows = grid.iter().product::<usize>();
    let cols = union_dim(window, c);
    let mut data = Vec::with_capacity(rows * cols);
    for_each_union(map, window, |_, row| data.extend_from_slice(row))?;
    Ok(UnionMatrix {
        matrix: Matrix::from_vec(rows, cols, data)?,
        source_dims: map.dims(),
        window,
    })
}

/// Output spatial dims of the 2×2×2 / stride 2 / ceil-mode pool.
pub fn pooled_dims(spatial: [usize; 3]) -> [usize; 3] {
    [
        spatial[0].div_ceil(2),
        spatial[1].div_ceil(2),
        spatial[2].div_ceil(2),
    ]
}

/// 2×2×2 max-pool with stride 2; windows at the far boundary may be partial.
pub fn max_pool(map: &FeatureMap) -> FeatureMap {
    let [h, w, z, c] = map.dims();
    let [oh, ow, oz] = pooled_dims([h, w, z]);
    let mut out = FeatureMap::zeros([oh, ow, oz, c]);
    let src = map.as_slice();
    for y in 0..oh {
        for x in 0..ow {
            for k in 0..oz {
                let o = out.index(y, x, k, 0);
                let dst = &mut out.as_mut_slice()[o..o + c];
                dst.fill(f64::NEG_INFINITY);
                for sy in 2 * y..(2 * y + 2).min(h) {
                    for sx in 2 * x..(2 * x + 2).min(w) {
                        for sz in 2 * k..(2 * k + 2).min(z) {
                            let s = map.index(sy, sx, sz, 0);
                            for (d, &v) in dst.iter_mut().zip(&src[s..s + c]) {
                                if v > *d {
                                    *d = v;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}
