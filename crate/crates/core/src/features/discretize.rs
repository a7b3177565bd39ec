//! Fixed-bin-count discretization of an ROI.

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Dims, ImageVolume};

/// 13 unique neighbour offsets at distance 1 (one of each opposite pair).
pub const DIRECTIONS: [[isize; 3]; 13] = [
    [1, 0, 0],
    [-1, 1, 0],
    [0, 1, 0],
    [1, 1, 0],
    [-1, -1, 1],
    [0, -1, 1],
    [1, -1, 1],
    [-1, 0, 1],
    [0, 0, 1],
    [1, 0, 1],
    [-1, 1, 1],
    [0, 1, 1],
    [1, 1, 1],
];

/// Gray-level image cropped to the mask bounding box.
///
/// `labels` uses 0 for voxels outside the mask and `1..=bins` inside.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedRoi {
    pub dims: Dims,
    pub labels: Vec<u16>,
    pub bins: usize,
    pub bin_edges: Vec<f64>,
    /// In-mask intensity range was zero; every voxel sits in bin 1.
    pub degenerate: bool,
}

impl DiscretizedRoi {
    /// Builds an ROI directly from labels (0 = outside).
    pub fn from_labels(dims: Dims, labels: Vec<u16>, bins: usize) -> Result<Self> {
        if labels.len() != dims.len() {
            return Err(Error::InvalidArgument(format!(
                "{} labels for {} voxels",
                labels.len(),
                dims.len()
            )));
        }
        if labels.iter().any(|&l| l as usize > bins) {
            return Err(Error::InvalidArgument(format!(
                "label above bin count {bins}"
            )));
        }
        if labels.iter().all(|&l| l == 0) {
            return Err(Error::EmptyMask);
        }
        Ok(DiscretizedRoi {
            dims,
            labels,
            bins,
            bin_edges: (0..=bins).map(|i| i as f64).collect(),
            degenerate: false,
        })
    }

    /// Number of in-mask voxels.
    pub fn voxel_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l > 0).count()
    }

    /// Largest label present.
    pub fn max_level(&self) -> usize {
        self.labels.iter().copied().max().unwrap_or(0) as usize
    }

    #[inline]
    pub fn label_at(&self, c: [usize; 3], offset: [isize; 3]) -> u16 {
        match self.dims.offset(c, offset) {
            Some(i) => self.labels[i],
            None => 0,
        }
    }
}

/// Equal-width bin edges over `[lo, hi]`.
pub fn bin_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let w = (hi - lo) / bins as f64;
    let mut e: Vec<f64> = (0..=bins).map(|i| lo + w * i as f64).collect();
    e[bins] = hi;
    e
}

/// Bin index in `1..=bins`: left-closed bins, last bin also right-closed.
pub fn bin_of(value: f64, edges: &[f64]) -> u16 {
    let bins = edges.len() - 1;
    // count of interior edges <= value
    let k = edges[1..bins].partition_point(|&e| e <= value);
    (k + 1) as u16
}

/// Crops to the mask bounding box and assigns bin labels.
pub fn discretize(v: &ImageVolume, m: &BinaryMask, bins: usize) -> Result<DiscretizedRoi> {
    m.ensure_same_dims(v.dims())?;
    if bins == 0 {
        return Err(Error::InvalidArgument("bin count must be positive".into()));
    }
    let (lo, hi) = m.bounding_box().ok_or(Error::EmptyMask)?;
    let cd = Dims::new(hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1)?;
    let mut values = Vec::with_capacity(cd.len());
    for z in lo[2]..=hi[2] {
        for y in lo[1]..=hi[1] {
            for x in lo[0]..=hi[0] {
                values.push(m.get(x, y, z).then(|| v.get(x, y, z)));
            }
        }
    }
    let (mn, mx) = values
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        });
    let degenerate = mx <= mn;
    let edges = if degenerate {
        bin_edges(mn, mn + 1.0, bins)
    } else {
        bin_edges(mn, mx, bins)
    };
    if degenerate {
        log::warn!("constant intensity inside ROI; all voxels assigned to bin 1");
    }
    let labels = values
        .iter()
        .map(|x| match x {
            None => 0,
            Some(_) if degenerate => 1,
            Some(x) => bin_of(*x, &edges),
        })
        .collect();
    Ok(DiscretizedRoi {
        dims: cd,
        labels,
        bins,
        bin_edges: edges,
        degenerate,
    })
}
