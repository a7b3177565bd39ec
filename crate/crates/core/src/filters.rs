//! Image filters: single-level undecimated wavelet subbands and
//! Laplacian-of-Gaussian at physical scales.
//!
//! Both filters are separable and use half-sample symmetric boundary
//! extension (`x[-1] = x[0]`). Outputs always have the input's dimensions.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Dims, ImageVolume};

/// Half-sample symmetric reflection of `i` into `0..n`.
#[inline]
pub fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// `out[p] = sum_t kernel[t] * data[p - t + origin]` along `axis`.
pub fn convolve_axis(
    data: &[f64],
    dims: Dims,
    axis: usize,
    kernel: &[f64],
    origin: usize,
) -> Vec<f64> {
    let n = dims.0[axis];
    let stride = [1, dims.nx(), dims.nx() * dims.ny()][axis];
    // index table for every (position, tap) pair along the axis
    let taps: Vec<usize> = (0..n)
        .flat_map(|p| {
            (0..kernel.len()).map(move |t| reflect(p as isize - t as isize + origin as isize, n))
        })
        .collect();
    let mut out = vec![0.0; data.len()];
    let nt = kernel.len();
    out.par_chunks_mut(dims.nx() * dims.ny())
        .enumerate()
        .for_each(|(z, plane)| {
            let base_z = z * dims.nx() * dims.ny();
            for (local, o) in plane.iter_mut().enumerate() {
                let idx = base_z + local;
                let c = dims.coords(idx);
                let p = c[axis];
                let line_start = idx - p * stride;
                let mut acc = 0.0;
                for (t, &k) in kernel.iter().enumerate() {
                    acc += k * data[line_start + taps[p * nt + t] * stride];
                }
                *o = acc;
            }
        });
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WaveletFamily {
    Haar,
    Db2,
    #[default]
    Coif1,
}

impl WaveletFamily {
    /// Decomposition low-pass filter (sum = sqrt 2).
    pub fn lowpass(self) -> &'static [f64] {
        match self {
            WaveletFamily::Haar => &[
                std::f64::consts::FRAC_1_SQRT_2,
                std::f64::consts::FRAC_1_SQRT_2,
            ],
            WaveletFamily::Db2 => &[
                -0.12940952255092145,
                0.22414386804185735,
                0.836516303737469,
                0.48296291314469025,
            ],
            WaveletFamily::Coif1 => &[
                -0.01565572813546454,
                -0.0727326195128539,
                0.38486484686420286,
                0.8525720202122554,
                0.3378976624578092,
                -0.0727326195128539,
            ],
        }
    }

    /// Quadrature-mirror high-pass: `h[k] = (-1)^(k+1) g[L-1-k]`.
    pub fn highpass(self) -> Vec<f64> {
        let lo = self.lowpass();
        let l = lo.len();
        (0..l)
            .map(|k| {
                let s = if k % 2 == 0 { -1.0 } else { 1.0 };
                s * lo[l - 1 - k]
            })
            .collect()
    }
}

/// Per-axis filter choice in `(x, y, z)` order; `true` is high-pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Subband(pub [bool; 3]);

impl Subband {
    /// All eight subbands, `LLL` first and `HHH` last.
    pub fn all() -> [Subband; 8] {
        let mut out = [Subband([false; 3]); 8];
        for (i, s) in out.iter_mut().enumerate() {
            *s = Subband([i & 4 != 0, i & 2 != 0, i & 1 != 0]);
        }
        out
    }

    pub fn name(&self) -> String {
        self.0.iter().map(|&h| if h { 'H' } else { 'L' }).collect()
    }

    pub fn parse(s: &str) -> Option<Subband> {
        let b = s.as_bytes();
        if b.len() != 3 {
            return None;
        }
        let mut out = [false; 3];
        for (o, c) in out.iter_mut().zip(b) {
            *o = match c {
                b'H' => true,
                b'L' => false,
                _ => return None,
            };
        }
        Some(Subband(out))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterId {
    Original,
    Wavelet(Subband),
    /// Sigma in millimetres.
    Log(f64),
}

impl fmt::Display for FilterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterId::Original => f.write_str("original"),
            FilterId::Wavelet(s) => write!(f, "wavelet-{}", s.name()),
            FilterId::Log(sigma) => {
                write!(
                    f,
                    "log-sigma-{}-mm",
                    format!("{sigma:.1}").replace('.', "-")
                )
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub original: bool,
    pub wavelet: bool,
    pub wavelet_family: WaveletFamily,
    pub log_sigmas: Vec<f64>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            original: true,
            wavelet: true,
            wavelet_family: WaveletFamily::Coif1,
            log_sigmas: vec![1.0, 2.0, 3.0],
        }
    }
}

impl FilterConfig {
    pub fn filter_ids(&self) -> Vec<FilterId> {
        let mut ids = Vec::new();
        if self.original {
            ids.push(FilterId::Original);
        }
        if self.wavelet {
            ids.extend(Subband::all().into_iter().map(FilterId::Wavelet));
        }
        ids.extend(self.log_sigmas.iter().map(|&s| FilterId::Log(s)));
        ids
    }
}

/// Single-level stationary wavelet decomposition into eight subbands.
pub fn wavelet_decompose(
    v: &ImageVolume,
    family: WaveletFamily,
) -> Result<Vec<(Subband, ImageVolume)>> {
    let lo = family.lowpass().to_vec();
    let hi = family.highpass();
    let dims = v.dims();
    if dims.0.iter().any(|&n| n < lo.len()) {
        return Err(Error::InvalidArgument(format!(
            "volume {:?} smaller than the {}-tap wavelet filter",
            dims.0,
            lo.len()
        )));
    }
    let origin = lo.len() / 2;
    let mut stage: Vec<(Vec<bool>, Vec<f64>)> = vec![(Vec::new(), v.voxels().to_vec())];
    let (lo, hi) = (&lo, &hi);
    for axis in 0..3 {
        stage = stage
            .into_par_iter()
            .flat_map_iter(|(path, data)| {
                [false, true].into_iter().map(move |high| {
                    let k = if high { hi } else { lo };
                    let mut p = path.clone();
                    p.push(high);
                    (p, convolve_axis(&data, dims, axis, k, origin))
                })
            })
            .collect();
    }
    stage
        .into_iter()
        .map(|(path, data)| {
            let band = Subband([path[0], path[1], path[2]]);
            Ok((band, v.with_voxels(data)?))
        })
        .collect::<Result<Vec<_>>>()
        .map(|mut bands| {
            bands.sort_by_key(|(b, _)| *b);
            bands
        })
}

/// Sampled Gaussian (unit sum) and its zero-sum second derivative along one
/// axis, with `x` in millimetres and truncation at 4 sigma.
pub fn log_kernels(sigma: f64, spacing: f64) -> (Vec<f64>, Vec<f64>) {
    let radius = (4.0 * sigma / spacing).ceil() as isize;
    let xs: Vec<f64> = (-radius..=radius).map(|t| t as f64 * spacing).collect();
    let mut g: Vec<f64> = xs
        .iter()
        .map(|x| (-x * x / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= sum);
    let s2 = sigma * sigma;
    let mut d2: Vec<f64> = xs
        .iter()
        .zip(&g)
        .map(|(x, gv)| gv * (x * x / (s2 * s2) - 1.0 / s2))
        .collect();
    // force an exact zero response to constants
    let bias: f64 = d2.iter().sum();
    d2.iter_mut().zip(&g).for_each(|(d, gv)| *d -= bias * gv);
    (g, d2)
}

/// Laplacian of Gaussian with `sigma` in millimetres.
pub fn log_filter(v: &ImageVolume, sigma: f64) -> Result<ImageVolume> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma {sigma} must be > 0")));
    }
    let dims = v.dims();
    let sp = v.spacing();
    let extent = (0..3)
        .map(|a| dims.0[a] as f64 * sp[a])
        .fold(f64::INFINITY, f64::min);
    if extent <= 4.0 * sigma {
        return Err(Error::InvalidArgument(format!(
            "sigma {sigma} mm too large for a volume extent of {extent} mm"
        )));
    }
    let kernels: Vec<(Vec<f64>, Vec<f64>)> = (0..3).map(|a| log_kernels(sigma, sp[a])).collect();
    let conv = |data: &[f64], axis: usize, second: bool| {
        let (g, d2) = &kernels[axis];
        let k = if second { d2 } else { g };
        convolve_axis(data, dims, axis, k, k.len() / 2)
    };
    let x = v.voxels();
    let gz = conv(x, 2, false);
    let gyz = conv(&gz, 1, false);
    let t1 = conv(&gyz, 0, true);
    let t2 = conv(&conv(&gz, 1, true), 0, false);
    let gxy = conv(&conv(x, 0, false), 1, false);
    let t3 = conv(&gxy, 2, true);
    let out = t1
        .iter()
        .zip(&t2)
        .zip(&t3)
        .map(|((a, b), c)| a + b + c)
        .collect();
    v.with_voxels(out)
}

/// All configured filtered images, in `FilterConfig::filter_ids` order.
pub fn apply_filters(
    v: &ImageVolume,
    config: &FilterConfig,
) -> Result<Vec<(FilterId, ImageVolume)>> {
    let mut out = Vec::new();
    if config.original {
        out.push((FilterId::Original, v.clone()));
    }
    let (wavelets, logs) = rayon::join(
        || {
            if config.wavelet {
                wavelet_decompose(v, config.wavelet_family).map(Some)
            } else {
                Ok(None)
            }
        },
        || {
            config
                .log_sigmas
                .par_iter()
                .map(|&s| log_filter(v, s).map(|img| (FilterId::Log(s), img)))
                .collect::<Result<Vec<_>>>()
        },
    );
    if let Some(bands) = wavelets? {
        out.extend(
            bands
                .into_iter()
                .map(|(b, img)| (FilterId::Wavelet(b), img)),
        );
    }
    out.extend(logs?);
    Ok(out)
}
