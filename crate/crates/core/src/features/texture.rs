//! Second-order texture families computed on a discretized ROI.
//!
//! Conventions follow the common open-source radiomics implementation:
//! matrices are indexed by actual gray level (`1..=Ng`, `Ng` = largest level
//! present), logarithms are base 2 with `eps = f64::EPSILON` added, and
//! directional families are averaged over the non-empty directions. A
//! family with no usable matrix yields NaN for every feature.

use nalgebra::{DMatrix, SymmetricEigen};

use super::discretize::{DiscretizedRoi, DIRECTIONS};

const EPS: f64 = f64::EPSILON;

fn log2e(p: f64) -> f64 {
    (p + EPS).log2()
}

/// Dense row-major matrix with 1-based semantic indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Entry at gray level `i` and column `j`, both 1-based.
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[(i - 1) * self.cols + (j - 1)]
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[(i - 1) * self.cols + (j - 1)] += v;
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Drops trailing all-zero columns (keeps at least one).
    fn trim_cols(self) -> Matrix {
        let last = (1..=self.cols)
            .rev()
            .find(|&j| (1..=self.rows).any(|i| self.at(i, j) > 0.0))
            .unwrap_or(1);
        if last == self.cols {
            return self;
        }
        let mut out = Matrix::zeros(self.rows, last);
        for i in 1..=self.rows {
            for j in 1..=last {
                out.data[(i - 1) * last + (j - 1)] = self.at(i, j);
            }
        }
        out
    }
}

fn for_each_voxel(roi: &DiscretizedRoi, mut f: impl FnMut([usize; 3], usize)) {
    for (idx, &l) in roi.labels.iter().enumerate() {
        if l > 0 {
            f(roi.dims.coords(idx), l as usize);
        }
    }
}

fn nanmean(rows: &[Vec<f64>], width: usize) -> Vec<f64> {
    if rows.is_empty() {
        return vec![f64::NAN; width];
    }
    (0..width)
        .map(|k| {
            let vals: Vec<f64> = rows.iter().map(|r| r[k]).filter(|v| !v.is_nan()).collect();
            if vals.is_empty() {
                f64::NAN
            } else {
                vals.iter().sum::<f64>() / vals.len() as f64
            }
        })
        .collect()
}

// ---------------------------------------------------------------- GLCM

pub const GLCM_NAMES: [&str; 24] = [
    "Autocorrelation",
    "JointAverage",
    "ClusterProminence",
    "ClusterShade",
    "ClusterTendency",
    "Contrast",
    "Correlation",
    "DifferenceAverage",
    "DifferenceEntropy",
    "DifferenceVariance",
    "JointEnergy",
    "JointEntropy",
    "Imc1",
    "Imc2",
    "Idm",
    "MCC",
    "Idmn",
    "Id",
    "Idn",
    "InverseVariance",
    "MaximumProbability",
    "SumAverage",
    "SumEntropy",
    "SumSquares",
];

/// Symmetric co-occurrence counts for one direction, `Ng x Ng`.
pub fn glcm_matrix(roi: &DiscretizedRoi, dir: [isize; 3]) -> Matrix {
    let ng = roi.max_level();
    let mut p = Matrix::zeros(ng, ng);
    for_each_voxel(roi, |c, i| {
        let j = roi.label_at(c, dir) as usize;
        if j > 0 {
            p.add(i, j, 1.0);
            p.add(j, i, 1.0);
        }
    });
    p
}

/// Features of one normalized symmetric co-occurrence matrix.
pub fn glcm_from_matrix(p: &Matrix) -> [f64; 24] {
    let ng = p.rows;
    let ngf = ng as f64;
    let mut px = vec![0.0; ng + 1];
    let mut py = vec![0.0; ng + 1];
    let mut psum = vec![0.0; 2 * ng + 1];
    let mut pdiff = vec![0.0; ng];
    let (mut autocorr, mut ux, mut uy, mut energy, mut hxy, mut maxp) =
        (0.0, 0.0, 0.0, 0.0, 0.0, 0.0f64);
    let mut contrast = 0.0;
    for i in 1..=ng {
        for j in 1..=ng {
            let v = p.at(i, j);
            if v == 0.0 {
                continue;
            }
            let (fi, fj) = (i as f64, j as f64);
            px[i] += v;
            py[j] += v;
            psum[i + j] += v;
            pdiff[i.abs_diff(j)] += v;
            autocorr += v * fi * fj;
            ux += v * fi;
            uy += v * fj;
            energy += v * v;
            hxy -= v * log2e(v);
            maxp = maxp.max(v);
            contrast += v * (fi - fj).powi(2);
        }
    }
    let (mut prom, mut shade, mut tend, mut sumsq) = (0.0, 0.0, 0.0, 0.0);
    let mut hxy1 = 0.0;
    let mut hxy2 = 0.0;
    for i in 1..=ng {
        for j in 1..=ng {
            let pp = px[i] * py[j];
            hxy2 -= pp * log2e(pp);
            let v = p.at(i, j);
            if v == 0.0 {
                continue;
            }
            let s = i as f64 + j as f64 - ux - uy;
            prom += v * s.powi(4);
            shade += v * s.powi(3);
            tend += v * s * s;
            sumsq += v * (i as f64 - ux).powi(2);
            hxy1 -= v * log2e(pp);
        }
    }
    let sigx = (1..=ng)
        .map(|i| px[i] * (i as f64 - ux).powi(2))
        .sum::<f64>()
        .sqrt();
    let sigy = (1..=ng)
        .map(|j| py[j] * (j as f64 - uy).powi(2))
        .sum::<f64>()
        .sqrt();
    let correlation = if sigx * sigy == 0.0 {
        1.0
    } else {
        (autocorr - ux * uy) / (sigx * sigy)
    };
    let hx: f64 = -(1..=ng).map(|i| px[i] * log2e(px[i])).sum::<f64>();
    let hy: f64 = -(1..=ng).map(|j| py[j] * log2e(py[j])).sum::<f64>();
    let hmax = hx.max(hy);
    let imc1 = if hmax == 0.0 {
        0.0
    } else {
        (hxy - hxy1) / hmax
    };
    let imc2 = (1.0 - (-2.0 * (hxy2 - hxy)).exp()).max(0.0).sqrt();

    let diff_avg: f64 = pdiff.iter().enumerate().map(|(k, v)| k as f64 * v).sum();
    let diff_ent: f64 = -pdiff.iter().map(|v| v * log2e(*v)).sum::<f64>();
    let diff_var: f64 = pdiff
        .iter()
        .enumerate()
        .map(|(k, v)| (k as f64 - diff_avg).powi(2) * v)
        .sum();
    let (mut idm, mut idmn, mut id, mut idn, mut inv_var) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (k, v) in pdiff.iter().enumerate() {
        let kf = k as f64;
        idm += v / (1.0 + kf * kf);
        idmn += v / (1.0 + kf * kf / (ngf * ngf));
        id += v / (1.0 + kf);
        idn += v / (1.0 + kf / ngf);
        if k > 0 {
            inv_var += v / (kf * kf);
        }
    }
    let sum_avg: f64 = psum.iter().enumerate().map(|(k, v)| k as f64 * v).sum();
    let sum_ent: f64 = -psum.iter().map(|v| v * log2e(*v)).sum::<f64>();

    [
        autocorr,
        ux,
        prom,
        shade,
        tend,
        contrast,
        correlation,
        diff_avg,
        diff_ent,
        diff_var,
        energy,
        hxy,
        imc1,
        imc2,
        idm,
        mcc(p, &px),
        idmn,
        id,
        idn,
        inv_var,
        maxp,
        sum_avg,
        sum_ent,
        sumsq,
    ]
}

/// Maximal correlation coefficient, restricted to levels with nonzero
/// marginal. Uses `S = D^-1/2 P D^-1/2`, whose squared eigenvalues are the
/// eigenvalues of the usual `Q` matrix.
fn mcc(p: &Matrix, px: &[f64]) -> f64 {
    let present: Vec<usize> = (1..=p.rows).filter(|&i| px[i] > 0.0).collect();
    let n = present.len();
    if n < 2 {
        return 1.0;
    }
    let s = DMatrix::from_fn(n, n, |a, b| {
        let (i, j) = (present[a], present[b]);
        p.at(i, j) / (px[i] * px[j]).sqrt()
    });
    let mut ev: Vec<f64> = SymmetricEigen::new(s)
        .eigenvalues
        .iter()
        .map(|l| l * l)
        .collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev[1].sqrt()
}

pub fn glcm_features(roi: &DiscretizedRoi) -> [f64; 24] {
    let rows: Vec<Vec<f64>> = DIRECTIONS
        .iter()
        .filter_map(|&d| {
            let mut p = glcm_matrix(roi, d);
            let total = p.sum();
            if total == 0.0 {
                return None;
            }
            p.data.iter_mut().for_each(|v| *v /= total);
            Some(glcm_from_matrix(&p).to_vec())
        })
        .collect();
    nanmean(&rows, 24).try_into().expect("24 values")
}

// ------------------------------------------- gray level x size matrices

/// Sums shared by run-length, size-zone and dependence matrices, where
/// rows are gray levels and columns are sizes (both 1-based).
struct SizeStats {
    n: f64,
    pg: Vec<f64>,
    ps: Vec<f64>,
    small: f64,
    large: f64,
    low: f64,
    high: f64,
    small_low: f64,
    small_high: f64,
    large_low: f64,
    large_high: f64,
    gray_var: f64,
    size_var: f64,
    entropy: f64,
}

impl SizeStats {
    fn new(p: &Matrix) -> SizeStats {
        let n = p.sum();
        let mut pg = vec![0.0; p.rows];
        let mut ps = vec![0.0; p.cols];
        let mut s = SizeStats {
            n,
            pg: Vec::new(),
            ps: Vec::new(),
            small: 0.0,
            large: 0.0,
            low: 0.0,
            high: 0.0,
            small_low: 0.0,
            small_high: 0.0,
            large_low: 0.0,
            large_high: 0.0,
            gray_var: 0.0,
            size_var: 0.0,
            entropy: 0.0,
        };
        let (mut mu_g, mut mu_s) = (0.0, 0.0);
        for i in 1..=p.rows {
            for j in 1..=p.cols {
                let v = p.at(i, j);
                if v == 0.0 {
                    continue;
                }
                let (i2, j2) = ((i * i) as f64, (j * j) as f64);
                pg[i - 1] += v;
                ps[j - 1] += v;
                s.small += v / j2;
                s.large += v * j2;
                s.low += v / i2;
                s.high += v * i2;
                s.small_low += v / (i2 * j2);
                s.small_high += v * i2 / j2;
                s.large_low += v * j2 / i2;
                s.large_high += v * i2 * j2;
                let q = v / n;
                mu_g += q * i as f64;
                mu_s += q * j as f64;
                s.entropy -= q * log2e(q);
            }
        }
        for i in 1..=p.rows {
            for j in 1..=p.cols {
                let q = p.at(i, j) / n;
                if q > 0.0 {
                    s.gray_var += q * (i as f64 - mu_g).powi(2);
                    s.size_var += q * (j as f64 - mu_s).powi(2);
                }
            }
        }
        for v in [
            &mut s.small,
            &mut s.large,
            &mut s.low,
            &mut s.high,
            &mut s.small_low,
            &mut s.small_high,
            &mut s.large_low,
            &mut s.large_high,
        ] {
            *v /= n;
        }
        s.pg = pg;
        s.ps = ps;
        s
    }

    fn gray_nonuniformity(&self) -> f64 {
        self.pg.iter().map(|v| v * v).sum::<f64>() / self.n
    }

    fn size_nonuniformity(&self) -> f64 {
        self.ps.iter().map(|v| v * v).sum::<f64>() / self.n
    }
}

// ---------------------------------------------------------------- GLRLM

pub const GLRLM_NAMES: [&str; 16] = [
    "ShortRunEmphasis",
    "LongRunEmphasis",
    "GrayLevelNonUniformity",
    "GrayLevelNonUniformityNormalized",
    "RunLengthNonUniformity",
    "RunLengthNonUniformityNormalized",
    "RunPercentage",
    "GrayLevelVariance",
    "RunVariance",
    "RunEntropy",
    "LowGrayLevelRunEmphasis",
    "HighGrayLevelRunEmphasis",
    "ShortRunLowGrayLevelEmphasis",
    "ShortRunHighGrayLevelEmphasis",
    "LongRunLowGrayLevelEmphasis",
    "LongRunHighGrayLevelEmphasis",
];

/// Run-length counts along one direction; out-of-mask voxels end a run.
pub fn glrlm_matrix(roi: &DiscretizedRoi, dir: [isize; 3]) -> Matrix {
    let ng = roi.max_level();
    let lmax = *roi.dims.0.iter().max().expect("3 dims");
    let mut p = Matrix::zeros(ng, lmax);
    let back = [-dir[0], -dir[1], -dir[2]];
    for_each_voxel(roi, |c, g| {
        if roi.label_at(c, back) as usize == g {
            return;
        }
        let mut len = 1;
        let mut cur = c;
        while let Some(next) = roi.dims.offset(cur, dir) {
            if roi.labels[next] as usize != g {
                break;
            }
            len += 1;
            cur = roi.dims.coords(next);
        }
        p.add(g, len, 1.0);
    });
    p.trim_cols()
}

pub fn glrlm_from_matrix(p: &Matrix, voxels: usize) -> [f64; 16] {
    let s = SizeStats::new(p);
    let gln = s.gray_nonuniformity();
    let rln = s.size_nonuniformity();
    [
        s.small,
        s.large,
        gln,
        gln / s.n,
        rln,
        rln / s.n,
        s.n / voxels as f64,
        s.gray_var,
        s.size_var,
        s.entropy,
        s.low,
        s.high,
        s.small_low,
        s.small_high,
        s.large_low,
        s.large_high,
    ]
}

pub fn glrlm_features(roi: &DiscretizedRoi) -> [f64; 16] {
    let np = roi.voxel_count();
    let rows: Vec<Vec<f64>> = DIRECTIONS
        .iter()
        .map(|&d| glrlm_matrix(roi, d))
        .filter(|p| p.sum() > 0.0)
        .map(|p| glrlm_from_matrix(&p, np).to_vec())
        .collect();
    nanmean(&rows, 16).try_into().expect("16 values")
}

// ---------------------------------------------------------------- GLSZM

pub const GLSZM_NAMES: [&str; 16] = [
    "SmallAreaEmphasis",
    "LargeAreaEmphasis",
    "GrayLevelNonUniformity",
    "GrayLevelNonUniformityNormalized",
    "SizeZoneNonUniformity",
    "SizeZoneNonUniformityNormalized",
    "ZonePercentage",
    "GrayLevelVariance",
    "ZoneVariance",
    "ZoneEntropy",
    "LowGrayLevelZoneEmphasis",
    "HighGrayLevelZoneEmphasis",
    "SmallAreaLowGrayLevelEmphasis",
    "SmallAreaHighGrayLevelEmphasis",
    "LargeAreaLowGrayLevelEmphasis",
    "LargeAreaHighGrayLevelEmphasis",
];

fn neighbours26() -> impl Iterator<Item = [isize; 3]> {
    DIRECTIONS.iter().flat_map(|d| [*d, [-d[0], -d[1], -d[2]]])
}

/// Zone counts: 26-connected components of equal gray level.
pub fn glszm_matrix(roi: &DiscretizedRoi) -> Matrix {
    let ng = roi.max_level();
    let np = roi.voxel_count();
    let mut p = Matrix::zeros(ng, np);
    let mut seen = vec![false; roi.labels.len()];
    let mut stack = Vec::new();
    for start in 0..roi.labels.len() {
        let g = roi.labels[start];
        if g == 0 || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut size = 0;
        while let Some(idx) = stack.pop() {
            size += 1;
            let c = roi.dims.coords(idx);
            for d in neighbours26() {
                if let Some(n) = roi.dims.offset(c, d) {
                    if !seen[n] && roi.labels[n] == g {
                        seen[n] = true;
                        stack.push(n);
                    }
                }
            }
        }
        p.add(g as usize, size, 1.0);
    }
    p.trim_cols()
}

pub fn glszm_from_matrix(p: &Matrix, voxels: usize) -> [f64; 16] {
    let s = SizeStats::new(p);
    let gln = s.gray_nonuniformity();
    let szn = s.size_nonuniformity();
    [
        s.small,
        s.large,
        gln,
        gln / s.n,
        szn,
        szn / s.n,
        s.n / voxels as f64,
        s.gray_var,
        s.size_var,
        s.entropy,
        s.low,
        s.high,
        s.small_low,
        s.small_high,
        s.large_low,
        s.large_high,
    ]
}

pub fn glszm_features(roi: &DiscretizedRoi) -> [f64; 16] {
    glszm_from_matrix(&glszm_matrix(roi), roi.voxel_count())
}

// ----------------------------------------------------------------- GLDM

pub const GLDM_NAMES: [&str; 14] = [
    "SmallDependenceEmphasis",
    "LargeDependenceEmphasis",
    "GrayLevelNonUniformity",
    "DependenceNonUniformity",
    "DependenceNonUniformityNormalized",
    "GrayLevelVariance",
    "DependenceVariance",
    "DependenceEntropy",
    "LowGrayLevelEmphasis",
    "HighGrayLevelEmphasis",
    "SmallDependenceLowGrayLevelEmphasis",
    "SmallDependenceHighGrayLevelEmphasis",
    "LargeDependenceLowGrayLevelEmphasis",
    "LargeDependenceHighGrayLevelEmphasis",
];

/// Dependence counts: `1 +` number of in-mask 26-neighbours with the same
/// gray level (threshold 0).
pub fn gldm_matrix(roi: &DiscretizedRoi) -> Matrix {
    let ng = roi.max_level();
    let mut p = Matrix::zeros(ng, 27);
    for_each_voxel(roi, |c, g| {
        let dep = 1 + neighbours26()
            .filter(|&d| roi.label_at(c, d) as usize == g)
            .count();
        p.add(g, dep, 1.0);
    });
    p.trim_cols()
}

pub fn gldm_from_matrix(p: &Matrix) -> [f64; 14] {
    let s = SizeStats::new(p);
    let dn = s.size_nonuniformity();
    [
        s.small,
        s.large,
        s.gray_nonuniformity(),
        dn,
        dn / s.n,
        s.gray_var,
        s.size_var,
        s.entropy,
        s.low,
        s.high,
        s.small_low,
        s.small_high,
        s.large_low,
        s.large_high,
    ]
}

pub fn gldm_features(roi: &DiscretizedRoi) -> [f64; 14] {
    gldm_from_matrix(&gldm_matrix(roi))
}

// ---------------------------------------------------------------- NGTDM

pub const NGTDM_NAMES: [&str; 5] = [
    "Coarseness",
    "Contrast",
    "Busyness",
    "Complexity",
    "Strength",
];

/// Per gray level: `(n_i, s_i)`, counting only voxels with at least one
/// in-mask neighbour. Index 0 is unused.
pub fn ngtdm_table(roi: &DiscretizedRoi) -> Vec<(f64, f64)> {
    let ng = roi.max_level();
    let mut t = vec![(0.0, 0.0); ng + 1];
    for_each_voxel(roi, |c, g| {
        let (mut sum, mut cnt) = (0.0, 0usize);
        for d in neighbours26() {
            let l = roi.label_at(c, d);
            if l > 0 {
                sum += l as f64;
                cnt += 1;
            }
        }
        if cnt > 0 {
            t[g].0 += 1.0;
            t[g].1 += (g as f64 - sum / cnt as f64).abs();
        }
    });
    t
}

pub fn ngtdm_from_table(t: &[(f64, f64)]) -> [f64; 5] {
    let nvp: f64 = t.iter().map(|e| e.0).sum();
    if nvp == 0.0 {
        return [f64::NAN; 5];
    }
    let levels: Vec<(f64, f64, f64)> = t
        .iter()
        .enumerate()
        .filter(|(_, e)| e.0 > 0.0)
        .map(|(i, e)| (i as f64, e.0 / nvp, e.1))
        .collect();
    let ngp = levels.len() as f64;
    let s_total: f64 = levels.iter().map(|l| l.2).sum();
    let ps_sum: f64 = levels.iter().map(|l| l.1 * l.2).sum();
    let coarseness = if ps_sum == 0.0 { 1e6 } else { 1.0 / ps_sum };
    let (mut c2, mut busy_den, mut complexity, mut strength_num) = (0.0, 0.0, 0.0, 0.0);
    for &(i, pi, si) in &levels {
        for &(j, pj, sj) in &levels {
            c2 += pi * pj * (i - j).powi(2);
            busy_den += (i * pi - j * pj).abs();
            complexity += (i - j).abs() * (pi * si + pj * sj) / (pi + pj);
            strength_num += (pi + pj) * (i - j).powi(2);
        }
    }
    let contrast = if ngp > 1.0 {
        c2 / (ngp * (ngp - 1.0)) * s_total / nvp
    } else {
        0.0
    };
    let busyness = if busy_den == 0.0 {
        0.0
    } else {
        ps_sum / busy_den
    };
    let strength = if s_total == 0.0 {
        0.0
    } else {
        strength_num / s_total
    };
    [coarseness, contrast, busyness, complexity / nvp, strength]
}

pub fn ngtdm_features(roi: &DiscretizedRoi) -> [f64; 5] {
    ngtdm_from_table(&ngtdm_table(roi))
}
