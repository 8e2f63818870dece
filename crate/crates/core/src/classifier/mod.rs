//! Multi-class SVM head and evaluation: accuracy, ROC/AUC and stratified
//! k-fold cross-validation of the full pipeline.

mod cv;
mod roc;
mod svm;

pub use cv::{cross_validate, stratified_folds, ClassRoc, CrossValidation, FoldAssignment, FoldReport, Prediction};
pub use roc::{roc_auc, RocPoint};
pub use svm::{fit_svm, fit_svm_traced, predict, SvmModel, SvmParams};

/// Fraction of `predicted` equal to `truth`.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len() as f64
}

/// `K × K` counts, rows are true classes and columns predictions.
pub fn confusion_matrix(predicted: &[usize], truth: &[usize], classes: usize) -> alloc::vec::Vec<alloc::vec::Vec<usize>> {
    let mut m = alloc::vec![alloc::vec![0; classes]; classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        m[t][p] += 1;
    }
    m
}
