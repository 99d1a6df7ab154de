//! Uniform grids, bounding boxes and multilinear interpolation shared by
//! fields, sinogram rows and backprojection.

use crate::error::{Error, Result};

/// Axis-aligned box in chart coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        Self { lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.iter()
            .zip(self.lo.iter().zip(self.hi.iter()))
            .all(|(c, (lo, hi))| *c >= *lo && *c <= *hi)
    }

    /// Box grown by `margin` on every face.
    pub fn expanded(&self, margin: f64) -> Bounds {
        Bounds {
            lo: self.lo.iter().map(|c| c - margin).collect(),
            hi: self.hi.iter().map(|c| c + margin).collect(),
        }
    }
}

/// Uniform grid specification: sample k of axis a sits at
/// origin[a] + k * spacing[a].
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub dims: Vec<usize>,
    pub origin: Vec<f64>,
    pub spacing: Vec<f64>,
}

impl GridSpec {
    pub fn new(dims: Vec<usize>, origin: Vec<f64>, spacing: Vec<f64>) -> Result<Self> {
        if dims.len() != origin.len() || dims.len() != spacing.len() {
            return Err(Error::InvalidGrid(
                "dims, origin and spacing must have equal length".into(),
            ));
        }
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::InvalidGrid("every axis needs at least 2 samples".into()));
        }
        if spacing.iter().any(|&s| s <= 0.0) {
            return Err(Error::InvalidGrid("spacing must be positive".into()));
        }
        Ok(Self {
            dims,
            origin,
            spacing,
        })
    }

    /// Grid covering `[lo, hi]` with `dims[a]` samples per axis, endpoints
    /// included.
    pub fn covering(lo: &[f64], hi: &[f64], dims: &[usize]) -> Result<Self> {
        let spacing = lo
            .iter()
            .zip(hi.iter())
            .zip(dims.iter())
            .map(|((l, h), d)| (h - l) / (*d as f64 - 1.0))
            .collect();
        Self::new(dims.to_vec(), lo.to_vec(), spacing)
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major strides, first axis slowest.
    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1usize; self.dims.len()];
        for a in (0..self.dims.len().saturating_sub(1)).rev() {
            s[a] = s[a + 1] * self.dims[a + 1];
        }
        s
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(self.strides().iter())
            .map(|(i, s)| i * s)
            .sum()
    }

    /// Multi-index of a flat offset.
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let strides = self.strides();
        let mut idx = vec![0usize; self.dims.len()];
        for a in 0..self.dims.len() {
            idx[a] = flat / strides[a];
            flat %= strides[a];
        }
        idx
    }

    pub fn point_at(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .enumerate()
            .map(|(a, &i)| self.origin[a] + i as f64 * self.spacing[a])
            .collect()
    }

    pub fn bounds(&self) -> Bounds {
        let hi = self
            .dims
            .iter()
            .enumerate()
            .map(|(a, &d)| self.origin[a] + (d as f64 - 1.0) * self.spacing[a])
            .collect();
        Bounds::new(self.origin.clone(), hi)
    }
}

/// Multilinear interpolation of row-major `data` on `spec` at point `z`.
/// Points outside the grid bounds return 0, consistent with the standing
/// compact-support assumption.
pub fn interpolate(spec: &GridSpec, data: &[f64], z: &[f64]) -> f64 {
    let rank = spec.rank();
    debug_assert_eq!(z.len(), rank);
    debug_assert_eq!(data.len(), spec.len());
    let mut cell = [0usize; 8];
    let mut frac = [0.0f64; 8];
    debug_assert!(rank <= 8);
    for a in 0..rank {
        let u = (z[a] - spec.origin[a]) / spec.spacing[a];
        let top = spec.dims[a] as f64 - 1.0;
        if u < 0.0 || u > top {
            return 0.0;
        }
        let mut i = u.floor() as usize;
        if i >= spec.dims[a] - 1 {
            i = spec.dims[a] - 2;
        }
        cell[a] = i;
        frac[a] = u - i as f64;
    }
    let strides = spec.strides();
    let mut acc = 0.0;
    for corner in 0..(1usize << rank) {
        let mut w = 1.0;
        let mut off = 0usize;
        for a in 0..rank {
            if corner >> a & 1 == 1 {
                w *= frac[a];
                off += (cell[a] + 1) * strides[a];
            } else {
                w *= 1.0 - frac[a];
                off += cell[a] * strides[a];
            }
        }
        if w != 0.0 {
            acc += w * data[off];
        }
    }
    acc
}
