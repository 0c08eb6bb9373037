//! Evaluation: DG/ZSDG accuracy, multi-seed aggregation, Wilcoxon
//! signed-rank significance, exact t-SNE projection, and report emission.
//!
//! All operations here are pure given their inputs and safe to run in
//! parallel across cells.

mod aggregate;
mod report;
mod svg;
mod tsne;
mod wilcoxon;

pub use aggregate::{aggregate, AggregateCell};
pub use report::{
    aggregate_rows, append_runs_csv, emit_report, paired_means, read_runs_csv, AggregateRow,
    PairingGranularity, RunRow,
};
pub use svg::emit_scatter_svg;
pub use tsne::{conditional_affinities, tsne_project, TsneOptions, TsneResult};
pub use wilcoxon::{wilcoxon_signed_rank, Alternative, WilcoxonResult};

use crate::autodiff::Tensor;
use crate::data::LabeledImageSet;
use crate::embeddings::{EmbeddingTable, PrototypeSet};
use crate::error::{Error, Result};
use crate::models::ModelBundle;

/// How DG accuracy scores a model: classifier-head argmax, or
/// nearest-prototype search over seen-class embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgMode {
    Head,
    SemanticNn,
}

/// Accuracy over one class list, with per-class confusion counts
/// (`confusion[true][predicted]`).
#[derive(Debug, Clone)]
pub struct ClassAccuracy {
    pub classes: Vec<String>,
    pub confusion: Vec<Vec<usize>>,
    pub correct: usize,
    pub total: usize,
}

impl ClassAccuracy {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

/// DG and ZSDG accuracy for one run.
#[derive(Debug, Clone)]
pub struct AccuracyReport {
    pub dg: ClassAccuracy,
    pub zsdg: ClassAccuracy,
}

const EVAL_CHUNK: usize = 256;

fn score_by_prediction(
    bundle: &ModelBundle,
    set: &LabeledImageSet,
    classes: &[String],
    predict: impl Fn(&Tensor) -> Result<Vec<usize>>,
) -> Result<ClassAccuracy> {
    if set.is_empty() {
        return Err(Error::stats("empty evaluation set"));
    }
    let class_pos = |name: &str| -> Result<usize> {
        classes
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::usage(format!("label '{name}' not in evaluated class list")))
    };
    let _ = bundle;
    let k = classes.len();
    let mut confusion = vec![vec![0usize; k]; k];
    let mut correct = 0;
    let n = set.len();
    let mut start = 0;
    while start < n {
        let end = (start + EVAL_CHUNK).min(n);
        let indices: Vec<usize> = (start..end).collect();
        let x = set.gather(&indices);
        let preds = predict(&x)?;
        for (row, &i) in preds.iter().zip(&indices) {
            let truth = class_pos(set.label_name(i))?;
            confusion[truth][*row] += 1;
            if truth == *row {
                correct += 1;
            }
        }
        start = end;
    }
    Ok(ClassAccuracy {
        classes: classes.to_vec(),
        confusion,
        correct,
        total: n,
    })
}

/// Fraction of evaluation images whose extracted feature is nearest to its
/// own class prototype, with prototypes spanning the unseen classes only.
pub fn zsdg_accuracy(
    bundle: &ModelBundle,
    eval_set: &LabeledImageSet,
    table: &EmbeddingTable,
    unseen_classes: &[String],
) -> Result<ClassAccuracy> {
    let protos = PrototypeSet::new(table, unseen_classes)?;
    score_by_prediction(bundle, eval_set, unseen_classes, |x| {
        let features = bundle.extract_values(x)?;
        (0..features.rows())
            .map(|r| protos.nearest_index(features.row(r)))
            .collect()
    })
}

/// Seen-class accuracy on the target domain. `Head` mode takes the argmax
/// of classifier logits (the head's outputs are ordered like
/// `seen_classes`); `SemanticNn` mode searches seen-class prototypes.
pub fn dg_accuracy(
    bundle: &ModelBundle,
    eval_set: &LabeledImageSet,
    table: &EmbeddingTable,
    seen_classes: &[String],
    mode: DgMode,
) -> Result<ClassAccuracy> {
    match mode {
        DgMode::Head => {
            if bundle.head.is_none() {
                return Err(Error::usage(
                    "head-mode DG accuracy on a model without a classifier head",
                ));
            }
            score_by_prediction(bundle, eval_set, seen_classes, |x| {
                let mut g = crate::autodiff::Graph::new();
                let bound = bundle.bind(&mut g);
                let xid = g.leaf(x.clone());
                let f = bound.extract(&mut g, xid)?;
                let logits_id = bound.classify(&mut g, f)?;
                let logits = g.value(logits_id);
                Ok((0..logits.rows())
                    .map(|r| {
                        let row = logits.row(r);
                        let mut best = 0;
                        for (j, &v) in row.iter().enumerate() {
                            if v > row[best] {
                                best = j;
                            }
                        }
                        best
                    })
                    .collect())
            })
        }
        DgMode::SemanticNn => {
            let protos = PrototypeSet::new(table, seen_classes)?;
            score_by_prediction(bundle, eval_set, seen_classes, |x| {
                let features = bundle.extract_values(x)?;
                (0..features.rows())
                    .map(|r| protos.nearest_index(features.row(r)))
                    .collect()
            })
        }
    }
}
