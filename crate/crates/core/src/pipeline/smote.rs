//! Synthetic minority oversampling.

use log::debug;
use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Indices of the `k` nearest rows of `x` to row `i` among `pool`, by
/// Euclidean distance, ties broken by index.
fn nearest(x: ArrayView2<f64>, i: usize, pool: &[usize], k: usize) -> Vec<usize> {
    let xi = x.row(i);
    let mut d: Vec<(f64, usize)> = pool
        .iter()
        .filter(|&&j| j != i)
        .map(|&j| {
            let dist = xi
                .iter()
                .zip(x.row(j))
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>();
            (dist, j)
        })
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().take(k).map(|(_, j)| j).collect()
}

/// Oversample the minority class to parity. Original rows come first, in
/// their input order, followed by the synthetic ones.
pub fn smote(
    x: ArrayView2<f64>,
    y: &[bool],
    k: usize,
    rng: &mut Rng,
) -> Result<(Array2<f64>, Vec<bool>)> {
    if x.nrows() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "smote: {} rows, {} labels",
            x.nrows(),
            y.len()
        )));
    }
    let pos: Vec<usize> = (0..y.len()).filter(|&i| y[i]).collect();
    let neg: Vec<usize> = (0..y.len()).filter(|&i| !y[i]).collect();
    let (minority, n_major, label) = if pos.len() < neg.len() {
        (pos, neg.len(), true)
    } else {
        (neg, pos.len(), false)
    };
    let need = n_major - minority.len();
    if need == 0 {
        return Ok((x.to_owned(), y.to_vec()));
    }
    if minority.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "smote needs at least 2 minority samples, got {}",
            minority.len()
        )));
    }
    let k_eff = k.min(minority.len() - 1).max(1);
    if k_eff < k {
        debug!(
            "smote: {} minority samples, k reduced from {k} to {k_eff}",
            minority.len()
        );
    }
    let neighbours: Vec<Vec<usize>> = minority
        .iter()
        .map(|&i| nearest(x, i, &minority, k_eff))
        .collect();

    let mut synth = Array2::zeros((need, x.ncols()));
    for mut row in synth.axis_iter_mut(Axis(0)) {
        let a = rng.random_range(0..minority.len());
        let b = neighbours[a][rng.random_range(0..k_eff)];
        let u: f64 = rng.random();
        let (xa, xb) = (x.row(minority[a]), x.row(b));
        for (j, r) in row.iter_mut().enumerate() {
            *r = xa[j] + u * (xb[j] - xa[j]);
        }
    }
    let out = ndarray::concatenate(Axis(0), &[x, synth.view()]).expect("same column count");
    let mut labels = y.to_vec();
    labels.extend(std::iter::repeat_n(label, need));
    Ok((out, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stage_rng;

    #[test]
    fn balanced_is_unchanged() {
        let x = Array2::from_shape_fn((4, 2), |(i, j)| (i * 2 + j) as f64);
        let y = [true, false, true, false];
        let (x2, y2) = smote(x.view(), &y, 5, &mut stage_rng(0, "t", 0)).unwrap();
        assert_eq!(x2, x);
        assert_eq!(y2, y);
    }

    #[test]
    fn thirty_seventy_reaches_parity() {
        let x = Array2::from_shape_fn((100, 3), |(i, j)| ((i * 7 + j * 3) % 11) as f64);
        let y: Vec<bool> = (0..100).map(|i| i < 30).collect();
        let (x2, y2) = smote(x.view(), &y, 5, &mut stage_rng(0, "t", 0)).unwrap();
        assert_eq!(x2.nrows(), 140);
        assert_eq!(y2.iter().filter(|v| **v).count(), 70);
    }

    #[test]
    fn synthetic_points_stay_on_segment() {
        let x = Array2::from_shape_vec((5, 1), vec![0.0, 1.0, 5.0, 6.0, 7.0]).unwrap();
        let y = [true, true, false, false, false];
        let (x2, _) = smote(x.view(), &y, 1, &mut stage_rng(3, "t", 0)).unwrap();
        assert!(x2.column(0).iter().skip(5).all(|v| (0.0..=1.0).contains(v)));
    }
}
