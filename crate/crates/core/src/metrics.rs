//! Evaluation metrics: accuracy, per-class and macro F1, one-vs-rest AUC-ROC
//! with midrank tie handling, and the confusion matrix.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::classifiers::Prediction;
use crate::dataspec::LabelSet;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub labels: Vec<String>,
    pub accuracy: f64,
    pub f1_per_class: Vec<f64>,
    pub f1_macro: f64,
    /// `None` for classes without both positives and negatives in the test set.
    pub auc_per_class: Vec<Option<f64>>,
    pub auc_macro: Option<f64>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    pub n_test: usize,
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::shape(format!("{a} true labels but {b} predictions")));
    }
    if a == 0 {
        return Err(Error::Degenerate("no samples to evaluate".into()));
    }
    Ok(())
}

pub fn accuracy(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    check_lengths(y_true.len(), y_pred.len())?;
    let hits = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / y_true.len() as f64)
}

/// Per-class F1 (0 when precision and recall are both undefined or zero) and
/// the unweighted mean over classes that occur in `y_true` or `y_pred`.
pub fn f1_scores(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<(Vec<f64>, f64)> {
    check_lengths(y_true.len(), y_pred.len())?;
    let mut tp = vec![0usize; n_classes];
    let mut n_true = vec![0usize; n_classes];
    let mut n_pred = vec![0usize; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= n_classes || p >= n_classes {
            return Err(Error::param(format!("label index outside 0..{n_classes}")));
        }
        n_true[t] += 1;
        n_pred[p] += 1;
        if t == p {
            tp[t] += 1;
        }
    }
    let per_class: Vec<f64> = (0..n_classes)
        .map(|c| {
            // 2PR/(P+R) = 2TP / (true + predicted)
            let denom = n_true[c] + n_pred[c];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .collect();
    let present: Vec<usize> = (0..n_classes)
        .filter(|&c| n_true[c] + n_pred[c] > 0)
        .collect();
    let macro_f1 = present.iter().map(|&c| per_class[c]).sum::<f64>() / present.len() as f64;
    Ok((per_class, macro_f1))
}

/// Binary AUC of `scores` against `positive` via the Mann–Whitney rank
/// statistic with midranks for ties. `None` without both classes present.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n = scores.len();
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j share their mean
        let midrank = (i + 1 + j) as f64 / 2.0;
        let pos_in_block = order[i..j].iter().filter(|&&k| positive[k]).count();
        rank_sum += midrank * pos_in_block as f64;
        i = j;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// One-vs-rest AUC per class from an `n × C` probability table, and the mean
/// over classes with at least one positive and one negative.
pub fn auc_ovr(
    y_true: &[usize],
    probs: &[Vec<f64>],
    n_classes: usize,
) -> Result<(Vec<Option<f64>>, Option<f64>)> {
    check_lengths(y_true.len(), probs.len())?;
    for (i, p) in probs.iter().enumerate() {
        if p.len() != n_classes {
            return Err(Error::shape(format!(
                "probability row {i} has {} entries",
                p.len()
            )));
        }
        if (p.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return Err(Error::param(format!(
                "probability row {i} does not sum to 1"
            )));
        }
    }
    let mut per_class = Vec::with_capacity(n_classes);
    for c in 0..n_classes {
        let scores: Vec<f64> = probs.iter().map(|p| p[c]).collect();
        let positive: Vec<bool> = y_true.iter().map(|&t| t == c).collect();
        let auc = binary_auc(&scores, &positive);
        if auc.is_none() {
            log::warn!("class {c} lacks positives or negatives; AUC skipped");
        }
        per_class.push(auc);
    }
    let valid: Vec<f64> = per_class.iter().flatten().copied().collect();
    let macro_auc = (!valid.is_empty()).then(|| valid.iter().sum::<f64>() / valid.len() as f64);
    Ok((per_class, macro_auc))
}

pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Vec<Vec<u64>> {
    let mut m = vec![vec![0u64; n_classes]; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        m[t][p] += 1;
    }
    m
}

pub fn evaluate(
    y_true: &[usize],
    predictions: &[Prediction],
    labels: &LabelSet,
) -> Result<EvalReport> {
    check_lengths(y_true.len(), predictions.len())?;
    let c = labels.len();
    let y_pred: Vec<usize> = predictions.iter().map(|p| p.label).collect();
    let acc = accuracy(y_true, &y_pred)?;
    let (f1_per_class, f1_macro) = f1_scores(y_true, &y_pred, c)?;
    let probs: Vec<Vec<f64>> = predictions.iter().map(|p| p.probs.clone()).collect();
    let (auc_per_class, auc_macro) = auc_ovr(y_true, &probs, c)?;
    Ok(EvalReport {
        labels: labels.labels().to_vec(),
        accuracy: acc,
        f1_per_class,
        f1_macro,
        auc_per_class,
        auc_macro,
        confusion: confusion_matrix(y_true, &y_pred, c),
        n_test: y_true.len(),
    })
}

/// Column order of [`EvalReport::csv_row`].
pub const CSV_HEADER: &str = "embedding,model,n_test,accuracy,f1_macro,auc_macro";

impl EvalReport {
    /// One CSV line (no newline) in [`CSV_HEADER`] order. A missing AUC is
    /// written as an empty field.
    pub fn csv_row(&self, embedding: &str, model: &str) -> String {
        let mut s = String::new();
        write!(
            s,
            "{embedding},{model},{},{:.6},{:.6},",
            self.n_test, self.accuracy, self.f1_macro
        )
        .unwrap();
        if let Some(a) = self.auc_macro {
            write!(s, "{a:.6}").unwrap();
        }
        s
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
