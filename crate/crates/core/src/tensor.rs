//! Dense arrays for deformation fields and per-direction feature maps, plus
//! input assembly (ROI crop and ED/ES concatenation).
//!
//! Storage is row-major. A [`Field3D`] is direction-major `(d, y, x, z)`; a
//! [`FeatureMap`] is `(y, x, z, c)` with the channel fastest.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of displacement directions per voxel.
pub const DIRECTIONS: usize = 3;

/// One cardiac phase's displacement field, `3 × H × W × Z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field3D {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Field3D {
    pub fn zeros(dims: [usize; 3]) -> Result<Self> {
        check_dims(dims)?;
        Ok(Self {
            dims,
            data: alloc::vec![0.0; DIRECTIONS * dims[0] * dims[1] * dims[2]],
        })
    }

    /// Wraps `data` laid out as `(d, y, x, z)`. Rejects non-finite values.
    pub fn from_vec(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        check_dims(dims)?;
        let expected = DIRECTIONS * dims[0] * dims[1] * dims[2];
        if data.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "{} values for field dims 3x{}x{}x{}",
                data.len(),
                dims[0],
                dims[1],
                dims[2]
            )));
        }
        let field = Self { dims, data };
        if let Some(at) = field.first_non_finite() {
            return Err(Error::NonFinite(format!(
                "field at (d={}, y={}, x={}, z={})",
                at[0], at[1], at[2], at[3]
            )));
        }
        Ok(field)
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Result<Self> {
        let mut field = Self::zeros(dims)?;
        for d in 0..DIRECTIONS {
            for y in 0..dims[0] {
                for x in 0..dims[1] {
                    for z in 0..dims[2] {
                        let i = field.index(d, y, x, z);
                        field.data[i] = f(d, y, x, z);
                    }
                }
            }
        }
        if let Some(at) = field.first_non_finite() {
            return Err(Error::NonFinite(format!("field at {at:?}")));
        }
        Ok(field)
    }

    /// Spatial dims `(H, W, Z)`.
    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn index(&self, d: usize, y: usize, x: usize, z: usize) -> usize {
        ((d * self.dims[0] + y) * self.dims[1] + x) * self.dims[2] + z
    }

    #[inline]
    pub fn get(&self, d: usize, y: usize, x: usize, z: usize) -> f64 {
        self.data[self.index(d, y, x, z)]
    }

    /// Contiguous `(y, x, z)` block for one direction.
    pub fn direction(&self, d: usize) -> &[f64] {
        let n = self.dims[0] * self.dims[1] * self.dims[2];
        &self.data[d * n..(d + 1) * n]
    }

    /// Single-channel feature map for one direction.
    pub fn direction_map(&self, d: usize) -> FeatureMap {
        FeatureMap {
            dims: [self.dims[0], self.dims[1], self.dims[2], 1],
            data: self.direction(d).to_vec(),
        }
    }

    /// `(d, y, x, z)` of the first NaN/Inf, if any.
    pub fn first_non_finite(&self) -> Option<[usize; 4]> {
        let pos = self.data.iter().position(|v| !v.is_finite())?;
        let [h, w, z] = self.dims;
        Some([pos / (h * w * z), (pos / (w * z)) % h, (pos / z) % w, pos % z])
    }
}

fn check_dims(dims: [usize; 3]) -> Result<()> {
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::InvalidArgument(format!("field dims must be >= 1, got {dims:?}")));
    }
    Ok(())
}

/// Per-direction intermediate representation, `H × W × Z × C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    dims: [usize; 4],
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(dims: [usize; 4]) -> Self {
        Self {
            dims,
            data: alloc::vec![0.0; dims.iter().product()],
        }
    }

    pub fn from_vec(dims: [usize; 4], data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.iter().product::<usize>() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for feature map dims {dims:?}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    /// `(H, W, Z, C)`.
    #[inline]
    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    #[inline]
    pub fn spatial(&self) -> [usize; 3] {
        [self.dims[0], self.dims[1], self.dims[2]]
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.dims[3]
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, z: usize, c: usize) -> usize {
        ((y * self.dims[1] + x) * self.dims[2] + z) * self.dims[3] + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, z: usize, c: usize) -> f64 {
        self.data[self.index(y, x, z, c)]
    }

    /// Drop trailing depth slices so the depth becomes `depth`.
    pub fn truncate_depth(&self, depth: usize) -> Result<FeatureMap> {
        let [h, w, z, c] = self.dims;
        if depth == 0 || depth > z {
            return Err(Error::InvalidArgument(format!("cannot truncate depth {z} to {depth}")));
        }
        let mut data = Vec::with_capacity(h * w * depth * c);
        for y in 0..h {
            for x in 0..w {
                let start = self.index(y, x, 0, 0);
                data.extend_from_slice(&self.data[start..start + depth * c]);
            }
        }
        Ok(FeatureMap {
            dims: [h, w, depth, c],
            data,
        })
    }
}

/// Two-phase input field with depth `2Z`, labelled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformationSample {
    pub subject_id: String,
    pub label: usize,
    pub interlaced: Field3D,
}

impl DeformationSample {
    pub fn new(subject_id: impl Into<String>, label: usize, interlaced: Field3D) -> Result<Self> {
        if interlaced.dims()[2] % 2 != 0 {
            return Err(Error::ShapeMismatch(format!(
                "assembled depth {} is odd",
                interlaced.dims()[2]
            )));
        }
        Ok(Self {
            subject_id: subject_id.into(),
            label,
            interlaced,
        })
    }
}

/// Copy the window `origin .. origin + size` out of `field`.
pub fn crop_roi(field: &Field3D, origin: [usize; 3], size: [usize; 3]) -> Result<Field3D> {
    let dims = field.dims();
    let fits = (0..3).all(|a| size[a] >= 1 && origin[a] + size[a] <= dims[a]);
    if !fits {
        return Err(Error::OutOfBounds {
            origin,
            window: size,
            dims,
        });
    }
    let mut data = Vec::with_capacity(DIRECTIONS * size.iter().product::<usize>());
    for d in 0..DIRECTIONS {
        for y in origin[0]..origin[0] + size[0] {
            for x in origin[1]..origin[1] + size[1] {
                let start = field.index(d, y, x, origin[2]);
                data.extend_from_slice(&field.data[start..start + size[2]]);
            }
        }
    }
    Ok(Field3D { dims: size, data })
}

/// In-plane centered origin for a crop of `size`, full-depth aligned at 0
/// when `size[2]` equals the depth.
pub fn centered_origin(dims: [usize; 3], size: [usize; 3]) -> Result<[usize; 3]> {
    if (0..3).any(|a| size[a] > dims[a]) {
        return Err(Error::OutOfBounds {
            origin: [0; 3],
            window: size,
            dims,
        });
    }
    Ok([
        (dims[0] - size[0]) / 2,
        (dims[1] - size[1]) / 2,
        (dims[2] - size[2]) / 2,
    ])
}

fn same_dims(ed: &Field3D, es: &Field3D) -> Result<()> {
    if ed.dims() != es.dims() {
        return Err(Error::ShapeMismatch(format!(
            "ED dims {:?} vs ES dims {:?}",
            ed.dims(),
            es.dims()
        )));
    }
    Ok(())
}

/// Depth-wise alternation: output slice `2k` is ED slice `k`, `2k+1` is ES
/// slice `k`.
pub fn interlace_concat(ed: &Field3D, es: &Field3D) -> Result<Field3D> {
    same_dims(ed, es)?;
    let [h, w, z] = ed.dims();
    let mut data = Vec::with_capacity(2 * ed.data.len());
    for d in 0..DIRECTIONS {
        for y in 0..h {
            for x in 0..w {
                let start = ed.index(d, y, x, 0);
                let a = &ed.data[start..start + z];
                let b = &es.data[start..start + z];
                for (&p, &q) in a.iter().zip(b) {
                    data.push(p);
                    data.push(q);
                }
            }
        }
    }
    Ok(Field3D {
        dims: [h, w, 2 * z],
        data,
    })
}

/// Block concatenation along depth: all ED slices, then all ES slices.
pub fn plain_concat(ed: &Field3D, es: &Field3D) -> Result<Field3D> {
    same_dims(ed, es)?;
    let [h, w, z] = ed.dims();
    let mut data = Vec::with_capacity(2 * ed.data.len());
    for d in 0..DIRECTIONS {
        for y in 0..h {
            for x in 0..w {
                let start = ed.index(d, y, x, 0);
                data.extend_from_slice(&ed.data[start..start + z]);
                data.extend_from_slice(&es.data[start..start + z]);
            }
        }
    }
    Ok(Field3D {
        dims: [h, w, 2 * z],
        data,
    })
}
