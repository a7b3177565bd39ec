//! Radiomic feature extraction.
//!
//! Per (image, mask): the image is z-scored over the whole volume, filtered
//! into the configured set of images, and each filtered image is
//! discretized into a fixed number of bins inside the mask before the
//! texture families are computed. Shape features come from the mask alone
//! and are computed once.
//!
//! Feature names follow `filter|matrix|feature`, for example
//! `wavelet-HLH|glszm|ZoneEntropy` or `original|shape|Sphericity`.

pub mod discretize;
pub mod firstorder;
pub mod shape;
pub mod texture;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::filters::{apply_filters, FilterConfig, FilterId};
use crate::volume::{BinaryMask, ImageVolume};

pub use discretize::{discretize, DiscretizedRoi};
pub use firstorder::{first_order_features, FIRSTORDER_NAMES};
pub use shape::{shape_features, SHAPE_NAMES};
pub use texture::{
    glcm_features, gldm_features, glrlm_features, glszm_features, ngtdm_features, GLCM_NAMES,
    GLDM_NAMES, GLRLM_NAMES, GLSZM_NAMES, NGTDM_NAMES,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Families {
    pub shape: bool,
    pub firstorder: bool,
    pub glcm: bool,
    pub glrlm: bool,
    pub glszm: bool,
    pub gldm: bool,
    pub ngtdm: bool,
}

impl Default for Families {
    fn default() -> Self {
        Families {
            shape: true,
            firstorder: true,
            glcm: true,
            glrlm: true,
            glszm: true,
            gldm: true,
            ngtdm: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub bins: usize,
    /// Whole-volume z-score before filtering.
    pub normalize: bool,
    pub filters: FilterConfig,
    pub families: Families,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            bins: 50,
            normalize: true,
            filters: FilterConfig::default(),
            families: Families::default(),
        }
    }
}

impl FeatureConfig {
    fn per_image_families(&self) -> Vec<(&'static str, &'static [&'static str])> {
        let f = &self.families;
        let mut out: Vec<(&'static str, &'static [&'static str])> = Vec::new();
        if f.firstorder {
            out.push(("firstorder", &FIRSTORDER_NAMES));
        }
        if f.glcm {
            out.push(("glcm", &GLCM_NAMES));
        }
        if f.glrlm {
            out.push(("glrlm", &GLRLM_NAMES));
        }
        if f.glszm {
            out.push(("glszm", &GLSZM_NAMES));
        }
        if f.gldm {
            out.push(("gldm", &GLDM_NAMES));
        }
        if f.ngtdm {
            out.push(("ngtdm", &NGTDM_NAMES));
        }
        out
    }

    /// Column names produced by this configuration, in output order.
    pub fn feature_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        if self.families.shape {
            names.extend(SHAPE_NAMES.iter().map(|n| format!("original|shape|{n}")));
        }
        let fams = self.per_image_families();
        for id in self.filters.filter_ids() {
            for (tag, list) in &fams {
                names.extend(list.iter().map(|n| format!("{id}|{tag}|{n}")));
            }
        }
        names
    }
}

/// Named feature values plus warnings about degenerate inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub flags: Vec<String>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i])
    }
}

/// Normalized and filtered images for one patient.
pub fn filtered_images(
    v: &ImageVolume,
    config: &FeatureConfig,
) -> Result<Vec<(FilterId, ImageVolume)>> {
    if config.normalize {
        apply_filters(&v.zscore(), &config.filters)
    } else {
        apply_filters(v, &config.filters)
    }
}

fn image_features(
    id: FilterId,
    img: &ImageVolume,
    m: &BinaryMask,
    config: &FeatureConfig,
) -> Result<(Vec<f64>, Vec<String>)> {
    let roi = discretize(img, m, config.bins)?;
    let mut flags = Vec::new();
    if roi.degenerate {
        flags.push(format!("{id}: constant intensity in ROI"));
    }
    let f = &config.families;
    let mut out = Vec::with_capacity(93);
    if f.firstorder {
        let values: Vec<f64> = img
            .voxels()
            .iter()
            .zip(m.voxels())
            .filter_map(|(v, &b)| b.then_some(*v))
            .collect();
        let vv: f64 = img.spacing().iter().product();
        out.extend(first_order_features(&values, &roi, vv));
    }
    let mut push = |tag: &str, vals: &[f64]| {
        if vals.iter().any(|v| v.is_nan()) {
            flags.push(format!("{id}|{tag}: empty matrix"));
        }
        out.extend_from_slice(vals);
    };
    if f.glcm {
        push("glcm", &glcm_features(&roi));
    }
    if f.glrlm {
        push("glrlm", &glrlm_features(&roi));
    }
    if f.glszm {
        push("glszm", &glszm_features(&roi));
    }
    if f.gldm {
        push("gldm", &gldm_features(&roi));
    }
    if f.ngtdm {
        push("ngtdm", &ngtdm_features(&roi));
    }
    Ok((out, flags))
}

/// Features of one mask over pre-filtered images.
pub fn extract_from_filtered(
    filtered: &[(FilterId, ImageVolume)],
    m: &BinaryMask,
    config: &FeatureConfig,
) -> Result<FeatureVector> {
    let first = filtered
        .first()
        .ok_or_else(|| crate::Error::InvalidArgument("no filtered images".into()))?;
    m.ensure_same_dims(first.1.dims())?;
    let mut values = Vec::new();
    let mut flags = Vec::new();
    if config.families.shape {
        values.extend(shape_features(m, first.1.spacing())?);
    }
    let per_image: Vec<(Vec<f64>, Vec<String>)> = filtered
        .par_iter()
        .map(|(id, img)| image_features(*id, img, m, config))
        .collect::<Result<_>>()?;
    for (v, f) in per_image {
        values.extend(v);
        flags.extend(f);
    }
    let names = config.feature_names();
    debug_assert_eq!(names.len(), values.len());
    Ok(FeatureVector {
        names,
        values,
        flags,
    })
}

/// Full extraction for one (image, mask) pair.
pub fn extract_all(
    v: &ImageVolume,
    m: &BinaryMask,
    config: &FeatureConfig,
) -> Result<FeatureVector> {
    m.ensure_same_dims(v.dims())?;
    if m.is_empty() {
        return Err(crate::Error::EmptyMask);
    }
    let filtered = filtered_images(v, config)?;
    extract_from_filtered(&filtered, m, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Dims;

    #[test]
    fn default_config_has_1130_names() {
        let names = FeatureConfig::default().feature_names();
        assert_eq!(names.len(), 1130);
        let unique: std::collections::HashSet<_> = names.iter().collect();
        assert_eq!(unique.len(), 1130);
        assert!(names.contains(&"wavelet-HLH|firstorder|Skewness".to_string()));
        assert!(names.contains(&"log-sigma-3-0-mm|glszm|ZoneEntropy".to_string()));
    }

    #[test]
    fn family_toggles_shrink_names() {
        let mut cfg = FeatureConfig::default();
        cfg.families.glcm = false;
        cfg.filters.wavelet = false;
        assert_eq!(cfg.feature_names().len(), 14 + 69 * 4);
    }

    #[test]
    fn extraction_matches_names_and_is_deterministic() {
        let d = Dims::new(16, 16, 16).unwrap();
        let mut s = 7u64;
        let vox: Vec<f64> = (0..d.len())
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
                (s >> 40) as f64 / (1u64 << 24) as f64
            })
            .collect();
        let v = ImageVolume::new(d, [1.0; 3], vox).unwrap();
        let m = BinaryMask::from_fn(d, |x, y, z| {
            let r2 = (x as f64 - 8.0).powi(2) + (y as f64 - 8.0).powi(2) + (z as f64 - 7.5).powi(2);
            r2 < 20.0
        });
        let cfg = FeatureConfig {
            filters: FilterConfig {
                log_sigmas: vec![1.0],
                ..FilterConfig::default()
            },
            ..FeatureConfig::default()
        };
        let a = extract_all(&v, &m, &cfg).unwrap();
        let b = extract_all(&v, &m, &cfg).unwrap();
        assert_eq!(a.len(), 14 + 93 * 10);
        assert_eq!(a.names, cfg.feature_names());
        assert!(a
            .values
            .iter()
            .zip(&b.values)
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(a.values.iter().all(|x| x.is_finite()), "{:?}", a.flags);
    }
}
