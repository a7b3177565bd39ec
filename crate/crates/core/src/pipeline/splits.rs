//! Repeated stratified train/test splits.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stage_rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub n_splits: usize,
    pub train_frac: f64,
    pub seed: u64,
    pub splits: Vec<Split>,
}

/// Per-class train counts summing to `floor(frac * n)`.
///
/// Each class gets `floor(frac * n_c)` or one more, chosen at random among
/// classes with a fractional share, and always keeps at least one patient on
/// each side.
fn class_train_counts(sizes: [usize; 2], frac: f64, rng: &mut crate::rng::Rng) -> [usize; 2] {
    let n: usize = sizes.iter().sum();
    let target = (frac * n as f64 + 1e-9).floor() as usize;
    let mut counts = sizes.map(|c| (frac * c as f64 + 1e-9).floor() as usize);
    let mut extra = target.saturating_sub(counts.iter().sum());
    let mut order = [0usize, 1];
    if rng.random_bool(0.5) {
        order.swap(0, 1);
    }
    for &c in &order {
        if extra > 0 && counts[c] < sizes[c] {
            counts[c] += 1;
            extra -= 1;
        }
    }
    for c in 0..2 {
        counts[c] = counts[c].clamp(1, sizes[c] - 1);
    }
    counts
}

/// `patients` are `(id, label)` pairs; order does not matter.
pub fn make_splits(
    patients: &[(String, bool)],
    n_splits: usize,
    train_frac: f64,
    seed: u64,
) -> Result<SplitPlan> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction {train_frac} not in (0, 1)"
        )));
    }
    if n_splits == 0 {
        return Err(Error::InvalidArgument("n_splits must be positive".into()));
    }
    let mut classes: [Vec<String>; 2] = [Vec::new(), Vec::new()];
    for (id, y) in patients {
        classes[*y as usize].push(id.clone());
    }
    for (c, members) in classes.iter_mut().enumerate() {
        if members.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "class {c} has {} patients; stratified splitting needs 2",
                members.len()
            )));
        }
        members.sort();
    }
    let sizes = [classes[0].len(), classes[1].len()];
    let splits = (0..n_splits)
        .map(|s| {
            let mut rng = stage_rng(seed, "split", s as u64);
            let counts = class_train_counts(sizes, train_frac, &mut rng);
            let mut train = Vec::new();
            let mut test = Vec::new();
            for c in 0..2 {
                let mut ids = classes[c].clone();
                ids.shuffle(&mut rng);
                train.extend_from_slice(&ids[..counts[c]]);
                test.extend_from_slice(&ids[counts[c]..]);
            }
            train.sort();
            test.sort();
            Split { train, test }
        })
        .collect();
    Ok(SplitPlan {
        n_splits,
        train_frac,
        seed,
        splits,
    })
}
