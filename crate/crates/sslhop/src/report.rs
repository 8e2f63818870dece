//! Report writers. Everything here is a pure function of its inputs, so
//! identical runs produce byte-identical files; wall-clock provenance lives
//! only in `run.json`.
//!
//! | file              | written by          | content                                            |
//! |-------------------|---------------------|----------------------------------------------------|
//! | `report.json`     | evaluate            | fold/pooled accuracy, per-class AUC, confusion     |
//! | `predictions.csv` | evaluate, predict   | `subject_id,label,predicted,fold,score_0…`         |
//! | `roc.csv`         | evaluate            | `class_id,fpr,tpr,threshold` (origin: `inf`)       |
//! | `confusion.csv`   | evaluate            | rows = true class, columns = predicted class       |
//! | `parameters.json` | evaluate, inspect   | saab / lag / svm / total parameter counts          |
//! | `energy.csv`      | inspect             | `layer,direction,component,energy,cumulative`      |
//! | `entropy.csv`     | inspect             | `layer,direction,channel,entropy,rank,kept`        |
//! | `ledger.csv`      | inspect             | `layer,stage,h,w,z,c`                              |

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use sslhop_core::classifier::{CrossValidation, FoldReport, Prediction};
use sslhop_core::pipeline::{count_parameters, ParameterCount, PipelineModel};

use crate::error::{Error, Result};

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn num(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

#[derive(Serialize)]
struct ClassSummary<'a> {
    class_id: usize,
    name: &'a str,
    auc: f64,
}

#[derive(Serialize)]
struct EvaluationSummary<'a> {
    ablation: &'a str,
    folds: usize,
    seed: u64,
    subjects: usize,
    fold_accuracy: &'a [f64],
    pooled_accuracy: f64,
    macro_auc: f64,
    classes: Vec<ClassSummary<'a>>,
    confusion: &'a [Vec<usize>],
    leakage_checks: usize,
}

pub fn evaluation_json(report: &FoldReport, class_names: &[String], ablation: &str) -> String {
    let classes = report
        .roc
        .iter()
        .map(|r| ClassSummary {
            class_id: r.class_id,
            name: class_names.get(r.class_id).map_or("", String::as_str),
            auc: r.auc,
        })
        .collect();
    to_json(&EvaluationSummary {
        ablation,
        folds: report.folds,
        seed: report.seed,
        subjects: report.predictions.len(),
        fold_accuracy: &report.fold_accuracy,
        pooled_accuracy: report.pooled_accuracy,
        macro_auc: report.macro_auc,
        classes,
        confusion: &report.confusion,
        leakage_checks: report.leakage_checks,
    })
}

pub fn predictions_csv(predictions: &[Prediction]) -> String {
    let k = predictions.first().map_or(0, |p| p.scores.len());
    let mut s = String::from("subject_id,label,predicted,fold");
    for c in 0..k {
        let _ = write!(s, ",score_{c}");
    }
    s.push('\n');
    for p in predictions {
        let _ = write!(s, "{},{},{},{}", p.subject_id, p.label, p.predicted, p.fold);
        for &v in &p.scores {
            let _ = write!(s, ",{}", num(v));
        }
        s.push('\n');
    }
    s
}

pub fn roc_csv(report: &FoldReport) -> String {
    let mut s = String::from("class_id,fpr,tpr,threshold\n");
    for r in &report.roc {
        for p in &r.points {
            let _ = writeln!(s, "{},{},{},{}", r.class_id, num(p.fpr), num(p.tpr), num(p.threshold));
        }
    }
    s
}

pub fn confusion_csv(confusion: &[Vec<usize>], class_names: &[String]) -> String {
    let name = |i: usize| class_names.get(i).cloned().unwrap_or_else(|| i.to_string());
    let mut s = String::from("true\\predicted");
    for j in 0..confusion.len() {
        let _ = write!(s, ",{}", name(j));
    }
    s.push('\n');
    for (i, row) in confusion.iter().enumerate() {
        s.push_str(&name(i));
        for v in row {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

pub fn parameters_json(p: &ParameterCount) -> String {
    to_json(p)
}

/// Write the evaluation outputs into `out`.
pub fn write_evaluation(out: &Path, cv: &CrossValidation, class_names: &[String], ablation: &str) -> Result<()> {
    let r = &cv.report;
    write(&out.join("report.json"), &evaluation_json(r, class_names, ablation))?;
    write(&out.join("predictions.csv"), &predictions_csv(&r.predictions))?;
    write(&out.join("roc.csv"), &roc_csv(r))?;
    write(&out.join("confusion.csv"), &confusion_csv(&r.confusion, class_names))?;
    write(&out.join("parameters.json"), &parameters_json(&cv.parameters))
}

pub fn energy_csv(model: &PipelineModel) -> String {
    let mut s = String::from("layer,direction,component,energy,cumulative\n");
    for (l, layer) in model.layers.iter().enumerate() {
        for (d, dm) in layer.directions.iter().enumerate() {
            let mut cum = 0.0;
            for (i, &e) in dm.kernel.energy().iter().enumerate() {
                cum += e;
                let _ = writeln!(s, "{},{},{},{},{}", l + 1, d, i + 1, num(e), num(cum));
            }
        }
    }
    s
}

pub fn entropy_csv(model: &PipelineModel) -> String {
    let mut s = String::from("layer,direction,channel,entropy,rank,kept\n");
    for (l, layer) in model.layers.iter().enumerate() {
        for (d, dm) in layer.directions.iter().enumerate() {
            let e = &dm.selection.per_channel;
            let mut order: Vec<usize> = (0..e.len()).collect();
            order.sort_by(|&a, &b| e[a].total_cmp(&e[b]).then(a.cmp(&b)));
            let mut rank = vec![0; e.len()];
            for (r, &c) in order.iter().enumerate() {
                rank[c] = r + 1;
            }
            for (c, &h) in e.iter().enumerate() {
                let kept = dm.selection.kept.contains(&c);
                let _ = writeln!(s, "{},{},{},{},{},{}", l + 1, d, c, num(h), rank[c], kept);
            }
        }
    }
    s
}

pub fn ledger_csv(model: &PipelineModel) -> String {
    let mut s = String::from("layer,stage,h,w,z,c\n");
    for st in &model.ledger.stages {
        let [h, w, z, c] = st.dims;
        let _ = writeln!(s, "{},{},{h},{w},{z},{c}", st.layer, st.kind.as_str());
    }
    s
}

/// Human-readable ledger, one row per layer with the Saab and pooling
/// input shapes as `3×[H×W×Z×C]`.
pub fn ledger_table(model: &PipelineModel) -> String {
    let mut s = String::new();
    let [h, w, z] = model.ledger.input;
    let n = sslhop_core::tensor::DIRECTIONS;
    let _ = writeln!(s, "input    {n}×[{h}×{w}×{z}]");
    let rows = model.ledger.table_rows();
    for pair in rows.chunks(2) {
        let fmt = |d: [usize; 4]| format!("{n}×[{}×{}×{}×{}]", d[0], d[1], d[2], d[3]);
        let _ = write!(s, "layer {}", pair[0].layer);
        for st in pair {
            let _ = write!(s, "  {} {}", st.kind.as_str(), fmt(st.dims));
        }
        s.push('\n');
    }
    s
}

/// Write the inspection outputs into `out`.
pub fn write_inspection(out: &Path, model: &PipelineModel) -> Result<()> {
    write(&out.join("energy.csv"), &energy_csv(model))?;
    write(&out.join("entropy.csv"), &entropy_csv(model))?;
    write(&out.join("ledger.csv"), &ledger_csv(model))?;
    write(&out.join("parameters.json"), &parameters_json(&count_parameters(model)))
}

pub fn write_predictions(out: &Path, predictions: &[Prediction]) -> Result<()> {
    write(&out.join("predictions.csv"), &predictions_csv(predictions))
}
