use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores `>= threshold` are called positive. The origin point uses
    /// `+inf`.
    pub threshold: f64,
}

/// ROC curve by a descending-score sweep and its trapezoid-rule AUC. Tied
/// scores form one diagonal step, so the AUC equals the Mann–Whitney
/// statistic with ties counted as one half.
pub fn roc_auc(scores: &[f64], positives: &[bool]) -> Result<(Vec<RocPoint>, f64)> {
    if scores.len() != positives.len() {
        return Err(Error::ShapeMismatch(alloc::format!(
            "{} scores for {} labels",
            scores.len(),
            positives.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("ROC scores".into()));
    }
    let pos = positives.iter().filter(|&&p| p).count();
    let neg = positives.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::OneClassOnly(alloc::format!("{pos} positives, {neg} negatives")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = alloc::vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc2 = 0.0; // twice the area, in tp·fp units
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if positives[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        auc2 += ((fp - fp0) * (tp + tp0)) as f64;
        points.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
            threshold: s,
        });
    }
    let auc = auc2 / (2.0 * pos as f64 * neg as f64);
    Ok((points, auc))
}
