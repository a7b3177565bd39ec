//! Dense 3D scalar volumes and binary masks.
//!
//! Voxels are stored row-major with `z` outermost, so the linear index of
//! `(x, y, z)` is `(z * ny + y) * nx + x`.

use crate::error::{Error, Result};

/// Voxel counts along `(x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims(pub [usize; 3]);

impl Dims {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        let d = [nx, ny, nz];
        if d.contains(&0) {
            return Err(Error::InvalidDims(d));
        }
        Ok(Dims(d))
    }

    #[inline]
    pub fn nx(&self) -> usize {
        self.0[0]
    }
    #[inline]
    pub fn ny(&self) -> usize {
        self.0[1]
    }
    #[inline]
    pub fn nz(&self) -> usize {
        self.0[2]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0[0] * self.0[1] * self.0[2]
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.0[1] + y) * self.0[0] + x
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let x = idx % self.0[0];
        let r = idx / self.0[0];
        [x, r % self.0[1], r / self.0[1]]
    }

    /// Linear index of `c + offset`, or `None` when it leaves the array.
    #[inline]
    pub fn offset(&self, c: [usize; 3], offset: [isize; 3]) -> Option<usize> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let v = c[a] as isize + offset[a];
            if v < 0 || v >= self.0[a] as isize {
                return None;
            }
            out[a] = v as usize;
        }
        Some(self.index(out[0], out[1], out[2]))
    }
}

fn check_spacing(spacing: [f64; 3]) -> Result<()> {
    if spacing.iter().all(|s| s.is_finite() && *s > 0.0) {
        Ok(())
    } else {
        Err(Error::InvalidSpacing(spacing))
    }
}

/// A 3D scalar image with physical voxel spacing in millimetres.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageVolume {
    dims: Dims,
    spacing: [f64; 3],
    voxels: Vec<f64>,
}

impl ImageVolume {
    pub fn new(dims: Dims, spacing: [f64; 3], voxels: Vec<f64>) -> Result<Self> {
        check_spacing(spacing)?;
        if voxels.len() != dims.len() {
            return Err(Error::InvalidArgument(format!(
                "voxel buffer holds {} values, dims {:?} need {}",
                voxels.len(),
                dims.0,
                dims.len()
            )));
        }
        if let Some(index) = voxels.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(ImageVolume {
            dims,
            spacing,
            voxels,
        })
    }

    pub fn filled(dims: Dims, spacing: [f64; 3], value: f64) -> Result<Self> {
        Self::new(dims, spacing, vec![value; dims.len()])
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn voxels(&self) -> &[f64] {
        &self.voxels
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.voxels[self.dims.index(x, y, z)]
    }

    pub fn into_voxels(self) -> Vec<f64> {
        self.voxels
    }

    /// Builds a volume with the same geometry and new intensities.
    pub fn with_voxels(&self, voxels: Vec<f64>) -> Result<Self> {
        Self::new(self.dims, self.spacing, voxels)
    }

    /// Whole-volume z-score normalization. A constant volume maps to zeros.
    pub fn zscore(&self) -> ImageVolume {
        let n = self.voxels.len() as f64;
        let mean = self.voxels.iter().sum::<f64>() / n;
        let var = self.voxels.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        let voxels = if sd > 0.0 {
            self.voxels.iter().map(|v| (v - mean) / sd).collect()
        } else {
            vec![0.0; self.voxels.len()]
        };
        ImageVolume {
            dims: self.dims,
            spacing: self.spacing,
            voxels,
        }
    }
}

/// A boolean voxel mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    dims: Dims,
    voxels: Vec<bool>,
}

impl BinaryMask {
    pub fn new(dims: Dims, voxels: Vec<bool>) -> Result<Self> {
        if voxels.len() != dims.len() {
            return Err(Error::InvalidArgument(format!(
                "mask buffer holds {} values, dims {:?} need {}",
                voxels.len(),
                dims.0,
                dims.len()
            )));
        }
        Ok(BinaryMask { dims, voxels })
    }

    pub fn empty(dims: Dims) -> Self {
        BinaryMask {
            dims,
            voxels: vec![false; dims.len()],
        }
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let mut voxels = Vec::with_capacity(dims.len());
        for z in 0..dims.nz() {
            for y in 0..dims.ny() {
                for x in 0..dims.nx() {
                    voxels.push(f(x, y, z));
                }
            }
        }
        BinaryMask { dims, voxels }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn voxels(&self) -> &[bool] {
        &self.voxels
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.voxels[self.dims.index(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, v: bool) {
        let i = self.dims.index(x, y, z);
        self.voxels[i] = v;
    }

    pub fn count(&self) -> usize {
        self.voxels.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.voxels.iter().any(|&v| v)
    }

    pub fn complement(&self) -> BinaryMask {
        BinaryMask {
            dims: self.dims,
            voxels: self.voxels.iter().map(|v| !v).collect(),
        }
    }

    /// True when every foreground voxel of `self` is foreground in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims == other.dims
            && self
                .voxels
                .iter()
                .zip(&other.voxels)
                .all(|(&a, &b)| !a || b)
    }

    pub fn intersection_count(&self, other: &BinaryMask) -> usize {
        self.voxels
            .iter()
            .zip(&other.voxels)
            .filter(|(&a, &b)| a && b)
            .count()
    }

    /// Inclusive axis-aligned bounding box `(min, max)` of the foreground.
    pub fn bounding_box(&self) -> Option<([usize; 3], [usize; 3])> {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any = false;
        for (i, &v) in self.voxels.iter().enumerate() {
            if v {
                any = true;
                let c = self.dims.coords(i);
                for a in 0..3 {
                    lo[a] = lo[a].min(c[a]);
                    hi[a] = hi[a].max(c[a]);
                }
            }
        }
        any.then_some((lo, hi))
    }

    /// Whether any foreground voxel lies on the outer face of the array.
    pub fn touches_border(&self) -> bool {
        let d = self.dims.0;
        self.voxels.iter().enumerate().any(|(i, &v)| {
            v && {
                let c = self.dims.coords(i);
                (0..3).any(|a| c[a] == 0 || c[a] + 1 == d[a])
            }
        })
    }

    pub fn ensure_same_dims(&self, dims: Dims) -> Result<()> {
        if self.dims == dims {
            Ok(())
        } else {
            Err(Error::DimsMismatch {
                left: self.dims.0,
                right: dims.0,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        let d = Dims::new(3, 4, 5).unwrap();
        for i in 0..d.len() {
            let c = d.coords(i);
            assert_eq!(d.index(c[0], c[1], c[2]), i);
        }
        assert_eq!(d.offset([0, 0, 0], [-1, 0, 0]), None);
        assert_eq!(d.offset([2, 3, 4], [0, 0, 1]), None);
        assert_eq!(d.offset([1, 1, 1], [1, 1, 1]), Some(d.index(2, 2, 2)));
    }

    #[test]
    fn zero_dim_rejected() {
        assert!(Dims::new(0, 2, 2).is_err());
    }

    #[test]
    fn volume_rejects_nan_and_bad_spacing() {
        let d = Dims::new(2, 1, 1).unwrap();
        assert!(matches!(
            ImageVolume::new(d, [1.0; 3], vec![0.0, f64::NAN]),
            Err(Error::NonFinite { index: 1 })
        ));
        assert!(ImageVolume::new(d, [1.0, 0.0, 1.0], vec![0.0, 0.0]).is_err());
        assert!(ImageVolume::new(d, [1.0; 3], vec![0.0]).is_err());
    }

    #[test]
    fn zscore_moments() {
        let d = Dims::new(4, 1, 1).unwrap();
        let v = ImageVolume::new(d, [1.0; 3], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let z = v.zscore();
        let m: f64 = z.voxels().iter().sum::<f64>() / 4.0;
        let s: f64 = z.voxels().iter().map(|x| x * x).sum::<f64>() / 4.0;
        assert!(m.abs() < 1e-12);
        assert!((s - 1.0).abs() < 1e-12);
        let c = ImageVolume::filled(d, [1.0; 3], 5.0).unwrap().zscore();
        assert!(c.voxels().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn bbox_and_border() {
        let d = Dims::new(5, 5, 5).unwrap();
        let mut m = BinaryMask::empty(d);
        assert!(m.bounding_box().is_none());
        m.set(1, 2, 3, true);
        m.set(3, 2, 1, true);
        assert_eq!(m.bounding_box(), Some(([1, 2, 1], [3, 2, 3])));
        assert!(!m.touches_border());
        m.set(0, 2, 2, true);
        assert!(m.touches_border());
    }
}
