//! Classification skill scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkillScores {
    pub accuracy: f64,
    pub recall: f64,
    pub specificity: f64,
    pub balanced_accuracy: f64,
    pub roc_auc: f64,
}

impl SkillScores {
    pub const NAMES: [&'static str; 5] = [
        "accuracy",
        "recall",
        "specificity",
        "balanced_accuracy",
        "roc_auc",
    ];

    pub fn values(&self) -> [f64; 5] {
        [
            self.accuracy,
            self.recall,
            self.specificity,
            self.balanced_accuracy,
            self.roc_auc,
        ]
    }
}

/// Area under the ROC curve from the Mann–Whitney rank sum, with average
/// ranks for ties.
pub fn roc_auc(y: &[bool], score: &[f64]) -> Result<f64> {
    if y.len() != score.len() {
        return Err(Error::InvalidArgument(format!(
            "auc: {} labels, {} scores",
            y.len(),
            score.len()
        )));
    }
    let npos = y.iter().filter(|v| **v).count();
    let nneg = y.len() - npos;
    if npos == 0 || nneg == 0 {
        return Err(Error::Undefined("ROC-AUC needs both classes".into()));
    }
    let mut idx: Vec<usize> = (0..y.len()).collect();
    idx.sort_by(|&a, &b| score[a].total_cmp(&score[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && score[idx[j + 1]] == score[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg * idx[i..=j].iter().filter(|&&k| y[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (npos * (npos + 1)) as f64 / 2.0;
    Ok(u / (npos * nneg) as f64)
}

/// Scores at a probability `threshold` (a sample is called positive when its
/// probability is at least the threshold).
pub fn skill(y: &[bool], prob: &[f64], threshold: f64) -> Result<SkillScores> {
    let roc_auc = roc_auc(y, prob)?;
    let (mut tp, mut tn, mut fp, mut fneg) = (0usize, 0usize, 0usize, 0usize);
    for (t, p) in y.iter().zip(prob) {
        match (*t, *p >= threshold) {
            (true, true) => tp += 1,
            (true, false) => fneg += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
        }
    }
    let recall = tp as f64 / (tp + fneg) as f64;
    let specificity = tn as f64 / (tn + fp) as f64;
    Ok(SkillScores {
        accuracy: (tp + tn) as f64 / y.len() as f64,
        recall,
        specificity,
        balanced_accuracy: (recall + specificity) / 2.0,
        roc_auc,
    })
}
