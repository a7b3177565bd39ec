//! Intensity histogram statistics over the ROI.

use super::discretize::DiscretizedRoi;

pub const FIRSTORDER_NAMES: [&str; 18] = [
    "Energy",
    "TotalEnergy",
    "Entropy",
    "Minimum",
    "10Percentile",
    "90Percentile",
    "Maximum",
    "Mean",
    "Median",
    "InterquartileRange",
    "Range",
    "MeanAbsoluteDeviation",
    "RobustMeanAbsoluteDeviation",
    "RootMeanSquared",
    "Skewness",
    "Kurtosis",
    "Variance",
    "Uniformity",
];

/// Percentile of sorted data with linear interpolation between ranks.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// First-order features of raw in-mask `values`; entropy and uniformity use
/// the discretized histogram of `roi`.
pub fn first_order_features(values: &[f64], roi: &DiscretizedRoi, voxel_volume: f64) -> [f64; 18] {
    assert!(!values.is_empty(), "empty ROI");
    let n = values.len() as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let energy: f64 = values.iter().map(|v| v * v).sum();
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    let (skew, kurt) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2))
    } else {
        (0.0, 0.0)
    };
    let p10 = percentile(&sorted, 10.0);
    let p90 = percentile(&sorted, 90.0);
    let mad = values.iter().map(|v| (v - mean).abs()).sum::<f64>() / n;
    let robust: Vec<f64> = values
        .iter()
        .copied()
        .filter(|v| *v >= p10 && *v <= p90)
        .collect();
    let rmean = robust.iter().sum::<f64>() / robust.len() as f64;
    let rmad = robust.iter().map(|v| (v - rmean).abs()).sum::<f64>() / robust.len() as f64;

    let mut hist = vec![0.0; roi.bins + 1];
    for &l in roi.labels.iter().filter(|&&l| l > 0) {
        hist[l as usize] += 1.0;
    }
    let total: f64 = hist.iter().sum();
    let (mut entropy, mut uniformity) = (0.0, 0.0);
    for h in hist.iter().filter(|&&h| h > 0.0) {
        let p = h / total;
        entropy -= p * (p + f64::EPSILON).log2();
        uniformity += p * p;
    }
    let min = sorted[0];
    let max = sorted[sorted.len() - 1];
    [
        energy,
        energy * voxel_volume,
        entropy,
        min,
        p10,
        p90,
        max,
        mean,
        percentile(&sorted, 50.0),
        percentile(&sorted, 75.0) - percentile(&sorted, 25.0),
        max - min,
        mad,
        rmad,
        (energy / n).sqrt(),
        skew,
        kurt,
        m2,
        uniformity,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Dims;

    fn run(values: &[f64]) -> [f64; 18] {
        let d = Dims::new(values.len(), 1, 1).unwrap();
        let roi = DiscretizedRoi::from_labels(d, vec![1; values.len()], 1).unwrap();
        first_order_features(values, &roi, 1.0)
    }

    fn get(f: &[f64; 18], name: &str) -> f64 {
        f[FIRSTORDER_NAMES.iter().position(|n| *n == name).unwrap()]
    }

    #[test]
    fn constant_roi() {
        let f = run(&[2.5; 7]);
        for name in ["Mean", "Median", "Minimum", "Maximum"] {
            assert_eq!(get(&f, name), 2.5);
        }
        assert_eq!(get(&f, "Variance"), 0.0);
        assert_eq!(get(&f, "Skewness"), 0.0);
        assert_eq!(get(&f, "Kurtosis"), 0.0);
        assert_eq!(get(&f, "Uniformity"), 1.0);
    }

    #[test]
    fn one_to_four() {
        let f = run(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(get(&f, "Mean"), 2.5);
        assert_eq!(get(&f, "Variance"), 1.25);
        assert_eq!(get(&f, "InterquartileRange"), 1.5);
        assert_eq!(get(&f, "Energy"), 30.0);
        assert_eq!(get(&f, "MeanAbsoluteDeviation"), 1.0);
        assert!((get(&f, "10Percentile") - 1.3).abs() < 1e-12);
    }

    #[test]
    fn symmetric_values_have_zero_skew() {
        let f = run(&[-3.0, -1.0, 0.0, 1.0, 3.0, 0.5, -0.5]);
        assert!(get(&f, "Skewness").abs() < 1e-12);
    }
}
