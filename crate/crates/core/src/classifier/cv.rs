use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::roc::{roc_auc, RocPoint};
use super::{accuracy, confusion_matrix};
use crate::error::{Error, Result};
use crate::pipeline::{count_parameters, fit_pipeline, ParameterCount, PipelineConfig};
use crate::tensor::DeformationSample;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub subject_id: String,
    pub fold: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub subject_id: String,
    pub label: usize,
    pub predicted: usize,
    pub fold: usize,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRoc {
    pub class_id: usize,
    pub auc: f64,
    pub points: Vec<RocPoint>,
}

/// Cross-validation results, pooled over the held-out predictions of every
/// fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub folds: usize,
    pub seed: u64,
    pub assignments: Vec<FoldAssignment>,
    pub fold_accuracy: Vec<f64>,
    pub pooled_accuracy: f64,
    /// One-vs-rest ROC per class from pooled decision values.
    pub roc: Vec<ClassRoc>,
    pub macro_auc: f64,
    /// Rows are true classes, columns predictions.
    pub confusion: Vec<Vec<usize>>,
    pub predictions: Vec<Prediction>,
    /// Number of (fold, test subject) pairs verified absent from the fold's
    /// training set.
    pub leakage_checks: usize,
}

/// A report plus the parameter count of the first fold's model.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub report: FoldReport,
    pub parameters: ParameterCount,
}

/// Stratified fold index per sample: each class's members are shuffled by
/// `seed` and dealt round-robin, the dealing position carrying over from one
/// class to the next. With `k = N` this is leave-one-out.
///
/// Every class needs at least two members so that each training split still
/// contains it.
pub fn stratified_folds(labels: &[usize], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 || k > labels.len() {
        return Err(Error::InvalidArgument(format!(
            "need 2 <= folds <= {}, got {k}",
            labels.len()
        )));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![usize::MAX; labels.len()];
    let mut next = 0;
    for c in 0..classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            return Err(Error::TooFewSubjects {
                class: c,
                have: members.len(),
                folds: k,
            });
        }
        for i in (1..members.len()).rev() {
            let j = rng.random_range(0..=i);
            members.swap(i, j);
        }
        for m in members {
            fold[m] = next;
            next = (next + 1) % k;
        }
    }
    Ok(fold)
}

/// Stratified k-fold evaluation of the full pipeline. Each fold fits every
/// stage on the other folds only; a runtime guard rejects any fold whose
/// model was fitted on one of its test subjects.
pub fn cross_validate(
    samples: &[DeformationSample],
    k: usize,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<CrossValidation> {
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let fold_of = stratified_folds(&labels, k, seed)?;

    let results = crate::par::map_indexed(k, |f| -> Result<_> {
        let train: Vec<DeformationSample> = samples
            .iter()
            .zip(&fold_of)
            .filter(|(_, &fo)| fo != f)
            .map(|(s, _)| s.clone())
            .collect();
        let test_idx: Vec<usize> = (0..samples.len()).filter(|&i| fold_of[i] == f).collect();
        let test: Vec<DeformationSample> = test_idx.iter().map(|&i| samples[i].clone()).collect();
        let model = fit_pipeline(&train, cfg)?;
        drop(train);
        for s in &test {
            if model.trained_on(&s.subject_id) {
                return Err(Error::Leakage(s.subject_id.clone()));
            }
        }
        let (pred, scores) = model.predict(&test)?;
        let params = count_parameters(&model);
        Ok((test_idx, pred, scores, params))
    });

    let mut predictions: Vec<Option<Prediction>> = vec![None; samples.len()];
    let mut fold_accuracy = Vec::with_capacity(k);
    let mut parameters = None;
    let mut leakage_checks = 0;
    for (f, r) in results.into_iter().enumerate() {
        let (test_idx, pred, scores, params) = r?;
        parameters.get_or_insert(params);
        let truth: Vec<usize> = test_idx.iter().map(|&i| labels[i]).collect();
        fold_accuracy.push(accuracy(&pred, &truth));
        leakage_checks += test_idx.len();
        for (j, &i) in test_idx.iter().enumerate() {
            predictions[i] = Some(Prediction {
                subject_id: samples[i].subject_id.clone(),
                label: labels[i],
                predicted: pred[j],
                fold: f,
                scores: scores.row(j).to_vec(),
            });
        }
    }
    let predictions: Vec<Prediction> = predictions.into_iter().map(|p| p.expect("every sample is tested once")).collect();
    let predicted: Vec<usize> = predictions.iter().map(|p| p.predicted).collect();

    let mut roc = Vec::with_capacity(classes);
    for c in 0..classes {
        let scores: Vec<f64> = predictions.iter().map(|p| p.scores[c]).collect();
        let positives: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        let (points, auc) = roc_auc(&scores, &positives)?;
        roc.push(ClassRoc {
            class_id: c,
            auc,
            points,
        });
    }
    let macro_auc = roc.iter().map(|r| r.auc).sum::<f64>() / roc.len().max(1) as f64;
    let report = FoldReport {
        folds: k,
        seed,
        assignments: samples
            .iter()
            .zip(&fold_of)
            .map(|(s, &fold)| FoldAssignment {
                subject_id: s.subject_id.clone(),
                fold,
            })
            .collect(),
        fold_accuracy,
        pooled_accuracy: accuracy(&predicted, &labels),
        roc,
        macro_auc,
        confusion: confusion_matrix(&predicted, &labels, classes),
        predictions,
        leakage_checks,
    };
    Ok(CrossValidation {
        report,
        parameters: parameters.expect("k >= 2"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_are_stratified() {
        let labels: Vec<usize> = (0..100).map(|i| i % 5).collect();
        let folds = stratified_folds(&labels, 5, 42).unwrap();
        for f in 0..5 {
            for c in 0..5 {
                let n = (0..100).filter(|&i| folds[i] == f && labels[i] == c).count();
                assert_eq!(n, 4);
            }
        }
        assert_eq!(folds, stratified_folds(&labels, 5, 42).unwrap());
        assert_ne!(folds, stratified_folds(&labels, 5, 43).unwrap());
    }

    #[test]
    fn leave_one_out_folds() {
        let labels = [0, 1, 0, 1, 0, 1, 0, 1, 0, 1];
        let mut folds = stratified_folds(&labels, 10, 1).unwrap();
        folds.sort_unstable();
        assert_eq!(folds, (0..10).collect::<Vec<_>>());
        assert!(stratified_folds(&labels, 11, 1).is_err());
        let err = stratified_folds(&[0, 0, 0, 1], 2, 1).unwrap_err();
        assert!(matches!(err, Error::TooFewSubjects { class: 1, .. }));
    }
}
