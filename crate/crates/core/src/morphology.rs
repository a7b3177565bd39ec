//! Binary morphology on voxel grids and the segmentation-variant recipes.
//!
//! Morphology works in voxel space and ignores physical spacing. At the array
//! border the structuring element is clipped: dilation never writes outside
//! the array and erosion treats out-of-array voxels as foreground, which keeps
//! dilation and erosion dual under complement inside the array and keeps
//! closing extensive.
//!
//! Ball elements take a fast path through an exact squared Euclidean distance
//! transform; arbitrary offset sets fall back to direct stamping.

use std::fmt;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Dims};

/// A symmetric set of integer offsets containing the origin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuringElement {
    radius: usize,
    ball: bool,
    offsets: Vec<[isize; 3]>,
}

/// Voxels within Euclidean distance `radius` of the centre.
pub fn ball(radius: usize) -> Result<StructuringElement> {
    if radius < 1 {
        return Err(Error::InvalidArgument("ball radius must be >= 1".into()));
    }
    let r = radius as isize;
    let r2 = r * r;
    let mut offsets = Vec::new();
    for z in -r..=r {
        for y in -r..=r {
            for x in -r..=r {
                if x * x + y * y + z * z <= r2 {
                    offsets.push([x, y, z]);
                }
            }
        }
    }
    Ok(StructuringElement {
        radius,
        ball: true,
        offsets,
    })
}

impl StructuringElement {
    /// Arbitrary element; the origin is added and the set is closed under
    /// negation.
    pub fn from_offsets(offsets: impl IntoIterator<Item = [isize; 3]>) -> Self {
        let mut set: Vec<[isize; 3]> = vec![[0, 0, 0]];
        for o in offsets {
            set.push(o);
            set.push([-o[0], -o[1], -o[2]]);
        }
        set.sort_unstable();
        set.dedup();
        let radius = set
            .iter()
            .map(|o| o.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0))
            .max()
            .unwrap_or(0);
        StructuringElement {
            radius,
            ball: false,
            offsets: set,
        }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn offsets(&self) -> &[[isize; 3]] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }
}

/// Stand-in for "no seed voxel"; large enough to dominate any in-array
/// squared distance while keeping the envelope arithmetic finite.
const FAR: f64 = 1e30;

/// One-dimensional squared distance transform (lower envelope of parabolas).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let meet = |q: usize, p: usize| {
        ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64))
    };
    for q in 1..n {
        let mut s = meet(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = meet(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Squared Euclidean distance (in voxels) from every voxel to the nearest
/// voxel where `seed` is true. At least `1e30` when there is no seed.
pub fn squared_distance_to(dims: Dims, seed: &[bool]) -> Vec<f64> {
    let mut d: Vec<f64> = seed.iter().map(|&s| if s { 0.0 } else { FAR }).collect();
    let n_max = dims.0.iter().copied().max().unwrap_or(1);
    let mut line = vec![0.0; n_max];
    let mut out = vec![0.0; n_max];
    let mut v = vec![0usize; n_max];
    let mut z = vec![0.0; n_max + 1];
    let [nx, ny, nz] = dims.0;
    let strides = [1, nx, nx * ny];
    for axis in 0..3 {
        let n = dims.0[axis];
        let stride = strides[axis];
        // enumerate line starts: all voxels whose coordinate on `axis` is 0
        let (a, b) = match axis {
            0 => ((ny, nx), (nz, nx * ny)),
            1 => ((nx, 1), (nz, nx * ny)),
            _ => ((nx, 1), (ny, nx)),
        };
        for j in 0..b.0 {
            for i in 0..a.0 {
                let start = i * a.1 + j * b.1;
                for t in 0..n {
                    line[t] = d[start + t * stride];
                }
                edt_1d(&line[..n], &mut out[..n], &mut v[..n], &mut z[..n + 1]);
                for t in 0..n {
                    d[start + t * stride] = out[t];
                }
            }
        }
    }
    d
}

fn dilate_naive(m: &BinaryMask, s: &StructuringElement) -> BinaryMask {
    let dims = m.dims();
    let mut out = vec![false; dims.len()];
    for (i, &v) in m.voxels().iter().enumerate() {
        if v {
            let c = dims.coords(i);
            for &o in s.offsets() {
                if let Some(j) = dims.offset(c, o) {
                    out[j] = true;
                }
            }
        }
    }
    BinaryMask::new(dims, out).expect("same dims")
}

fn erode_naive(m: &BinaryMask, s: &StructuringElement) -> BinaryMask {
    let dims = m.dims();
    let src = m.voxels();
    let out = (0..dims.len())
        .map(|i| {
            src[i] && {
                let c = dims.coords(i);
                s.offsets()
                    .iter()
                    .all(|&o| dims.offset(c, o).is_none_or(|j| src[j]))
            }
        })
        .collect();
    BinaryMask::new(dims, out).expect("same dims")
}

pub fn dilate(m: &BinaryMask, s: &StructuringElement) -> BinaryMask {
    if !s.ball {
        return dilate_naive(m, s);
    }
    let r2 = (s.radius * s.radius) as f64;
    let d = squared_distance_to(m.dims(), m.voxels());
    BinaryMask::new(m.dims(), d.iter().map(|&x| x <= r2).collect()).expect("same dims")
}

pub fn erode(m: &BinaryMask, s: &StructuringElement) -> BinaryMask {
    if !s.ball {
        return erode_naive(m, s);
    }
    let r2 = (s.radius * s.radius) as f64;
    let background: Vec<bool> = m.voxels().iter().map(|v| !v).collect();
    let d = squared_distance_to(m.dims(), &background);
    BinaryMask::new(m.dims(), d.iter().map(|&x| x > r2).collect()).expect("same dims")
}

/// Dilation by `dilate_with` followed by erosion by `erode_with`.
pub fn closing(
    m: &BinaryMask,
    dilate_with: &StructuringElement,
    erode_with: &StructuringElement,
) -> BinaryMask {
    erode(&dilate(m, dilate_with), erode_with)
}

/// Ellipsoid inscribed in the foreground's axis-aligned bounding box.
pub fn bbox_ellipsoid(m: &BinaryMask) -> Option<BinaryMask> {
    let (lo, hi) = m.bounding_box()?;
    let centre: Vec<f64> = (0..3).map(|a| (lo[a] + hi[a]) as f64 / 2.0).collect();
    let semi: Vec<f64> = (0..3).map(|a| (hi[a] - lo[a] + 1) as f64 / 2.0).collect();
    Some(BinaryMask::from_fn(m.dims(), |x, y, z| {
        let c = [x as f64, y as f64, z as f64];
        (0..3)
            .map(|a| ((c[a] - centre[a]) / semi[a]).powi(2))
            .sum::<f64>()
            <= 1.0
    }))
}

/// Dice similarity coefficient `2|a∩b| / (|a| + |b|)`.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    b.ensure_same_dims(a.dims())?;
    let (na, nb) = (a.count(), b.count());
    if na + nb == 0 {
        return Err(Error::Undefined("dice of two empty masks".into()));
    }
    Ok(2.0 * a.intersection_count(b) as f64 / (na + nb) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "closing_08")]
    Closing08,
    #[serde(rename = "closing_07")]
    Closing07,
    #[serde(rename = "closing_06")]
    Closing06,
    #[serde(rename = "ellipsoid_04")]
    Ellipsoid04,
}

pub const MANUAL: &str = "manual";

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Closing08,
        Variant::Closing07,
        Variant::Closing06,
        Variant::Ellipsoid04,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Closing08 => "closing_08",
            Variant::Closing07 => "closing_07",
            Variant::Closing06 => "closing_06",
            Variant::Ellipsoid04 => "ellipsoid_04",
        }
    }

    /// Display label used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            Variant::Closing08 => "Closing 08",
            Variant::Closing07 => "Closing 07",
            Variant::Closing06 => "Closing 06",
            Variant::Ellipsoid04 => "Ellipsoid 04",
        }
    }

    pub fn from_name(s: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.name() == s)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Ball radii `(dilation, erosion)` for the three closing variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantRecipe {
    pub closing_08: (usize, usize),
    pub closing_07: (usize, usize),
    pub closing_06: (usize, usize),
}

impl Default for VariantRecipe {
    fn default() -> Self {
        VariantRecipe {
            closing_08: (5, 5),
            closing_07: (9, 9),
            closing_06: (11, 9),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantMask {
    pub variant: Variant,
    pub mask: BinaryMask,
    pub dsc: f64,
    /// Foreground reaches the array border (the true variant may be clipped).
    pub border_contact: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantSet {
    pub variants: Vec<VariantMask>,
    /// Variants that came out empty and were dropped.
    pub dropped: Vec<Variant>,
}

impl VariantSet {
    pub fn get(&self, v: Variant) -> Option<&VariantMask> {
        self.variants.iter().find(|m| m.variant == v)
    }
}

pub fn make_variants(reference: &BinaryMask, recipe: &VariantRecipe) -> Result<VariantSet> {
    if reference.is_empty() {
        return Err(Error::EmptyMask);
    }
    let mut variants = Vec::new();
    let mut dropped = Vec::new();
    for v in Variant::ALL {
        let mask = match v {
            Variant::Ellipsoid04 => bbox_ellipsoid(reference).expect("nonempty reference"),
            _ => {
                let (d, e) = match v {
                    Variant::Closing08 => recipe.closing_08,
                    Variant::Closing07 => recipe.closing_07,
                    _ => recipe.closing_06,
                };
                closing(reference, &ball(d)?, &ball(e)?)
            }
        };
        if mask.is_empty() {
            warn!("variant {v} is empty; dropped");
            dropped.push(v);
            continue;
        }
        let dsc = dice(reference, &mask)?;
        let border_contact = mask.touches_border();
        variants.push(VariantMask {
            variant: v,
            mask,
            dsc,
            border_contact,
        });
    }
    Ok(VariantSet { variants, dropped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dims(n: usize) -> Dims {
        Dims::new(n, n, n).unwrap()
    }

    #[test]
    fn ball_one_is_seven_offsets() {
        // enumerate integer vectors in [-1,1]^3 with squared norm <= 1
        let mut count = 0;
        for x in -1i32..=1 {
            for y in -1i32..=1 {
                for z in -1i32..=1 {
                    if x * x + y * y + z * z <= 1 {
                        count += 1;
                    }
                }
            }
        }
        assert_eq!(count, 7);
        assert_eq!(ball(1).unwrap().len(), 7);
        assert!(ball(0).is_err());
    }

    #[test]
    fn ball_is_symmetric_and_contains_origin() {
        for r in 1..6 {
            let b = ball(r).unwrap();
            assert!(b.offsets().contains(&[0, 0, 0]));
            for o in b.offsets() {
                assert!(b.offsets().contains(&[-o[0], -o[1], -o[2]]));
            }
        }
    }

    #[test]
    fn single_voxel_dilates_to_cross() {
        let d = dims(5);
        let mut m = BinaryMask::empty(d);
        m.set(2, 2, 2, true);
        let out = dilate(&m, &ball(1).unwrap());
        assert_eq!(out.count(), 7);
        for (x, y, z) in [
            (1, 2, 2),
            (3, 2, 2),
            (2, 1, 2),
            (2, 3, 2),
            (2, 2, 1),
            (2, 2, 3),
        ] {
            assert!(out.get(x, y, z));
        }
    }

    #[test]
    fn border_voxel_stays_in_bounds() {
        let d = dims(4);
        let mut m = BinaryMask::empty(d);
        m.set(0, 0, 0, true);
        let out = dilate(&m, &ball(1).unwrap());
        assert_eq!(out.count(), 4);
        assert_eq!(out.dims(), d);
    }

    #[test]
    fn erosion_clips_at_border() {
        // a full array erodes to itself: outside counts as foreground
        let d = dims(4);
        let full = BinaryMask::from_fn(d, |_, _, _| true);
        assert_eq!(erode(&full, &ball(2).unwrap()), full);
    }

    #[test]
    fn solid_ball_closings_are_extensive() {
        let d = dims(48);
        let r = 8.0f64;
        let reference = BinaryMask::from_fn(d, |x, y, z| {
            let (x, y, z) = (x as f64 - 24.0, y as f64 - 24.0, z as f64 - 24.0);
            x * x + y * y + z * z <= r * r
        });
        let set = make_variants(&reference, &VariantRecipe::default()).unwrap();
        for v in &set.variants[..3] {
            assert!(reference.is_subset_of(&v.mask), "{}", v.variant);
        }
        let c06 = set.get(Variant::Closing06).unwrap();
        assert!(c06.mask.count() > reference.count());
        assert!(set.dropped.is_empty());
    }

    #[test]
    fn cube_ellipsoid_matches_continuum() {
        let d = dims(40);
        let cube = BinaryMask::from_fn(d, |x, y, z| {
            (4..36).contains(&x) && (4..36).contains(&y) && (4..36).contains(&z)
        });
        let e = bbox_ellipsoid(&cube).unwrap();
        assert!(e.is_subset_of(&cube));
        let ratio = e.count() as f64 / cube.count() as f64;
        let pi6 = std::f64::consts::PI / 6.0;
        assert!((ratio - pi6).abs() < 0.05, "volume ratio {ratio}");
        // nested masks: dice = 2|E| / (|E| + |C|)
        let dsc = dice(&cube, &e).unwrap();
        assert!((dsc - 2.0 * pi6 / (1.0 + pi6)).abs() < 0.05, "dsc {dsc}");
    }

    #[test]
    fn dice_examples() {
        let d = Dims::new(10, 1, 1).unwrap();
        let a = BinaryMask::new(d, (0..10).map(|i| i < 4).collect()).unwrap();
        let b = BinaryMask::new(d, (0..10).map(|i| (1..7).contains(&i)).collect()).unwrap();
        assert!((dice(&a, &b).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        let c = BinaryMask::new(d, (0..10).map(|i| i >= 8).collect()).unwrap();
        assert_eq!(dice(&a, &c).unwrap(), 0.0);
        let e = BinaryMask::empty(d);
        assert!(dice(&e, &e).is_err());
        let other = BinaryMask::empty(Dims::new(5, 2, 1).unwrap());
        assert!(dice(&a, &other).is_err());
    }

    #[test]
    fn single_voxel_reference_keeps_variants() {
        let d = dims(30);
        let mut m = BinaryMask::empty(d);
        m.set(15, 15, 15, true);
        let set = make_variants(&m, &VariantRecipe::default()).unwrap();
        assert_eq!(set.variants.len() + set.dropped.len(), 4);
        assert!(make_variants(&BinaryMask::empty(d), &VariantRecipe::default()).is_err());
    }

    fn arb_mask(n: usize) -> impl Strategy<Value = BinaryMask> {
        proptest::collection::vec(proptest::bool::weighted(0.3), n * n * n)
            .prop_map(move |v| BinaryMask::new(dims(n), v).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn distance_path_matches_stamping(m in arb_mask(7), r in 1usize..4) {
            let b = ball(r).unwrap();
            let naive = StructuringElement::from_offsets(b.offsets().iter().copied());
            prop_assert_eq!(dilate(&m, &b), dilate(&m, &naive));
            prop_assert_eq!(erode(&m, &b), erode(&m, &naive));
        }

        #[test]
        fn morphology_laws(m in arb_mask(6), r in 1usize..3) {
            let b = ball(r).unwrap();
            let d = dilate(&m, &b);
            let e = erode(&m, &b);
            prop_assert!(m.is_subset_of(&d));
            prop_assert!(e.is_subset_of(&m));
            prop_assert!(m.is_subset_of(&erode(&d, &b)));
            prop_assert_eq!(e, dilate(&m.complement(), &b).complement());
        }

        #[test]
        fn dice_is_symmetric(a in arb_mask(4), b in arb_mask(4)) {
            if let (Ok(x), Ok(y)) = (dice(&a, &b), dice(&b, &a)) {
                prop_assert_eq!(x, y);
            }
        }
    }
}
