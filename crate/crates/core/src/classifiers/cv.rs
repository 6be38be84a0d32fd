//! Hyperparameter selection for the logistic-regression probe by stratified
//! k-fold cross-validation on the training rows.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{check_training_set, fit_logreg, predict_logreg, LogRegParams};
use crate::dataspec::{EmbeddingMatrix, LabelSet};
use crate::error::{Error, Result};
use crate::{par, seed};

pub const DEFAULT_L2_GRID: [f64; 4] = [1e-3, 1e-2, 1e-1, 1.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct L2Selection {
    pub grid: Vec<f64>,
    /// Mean validation accuracy per grid value.
    pub cv_accuracy: Vec<f64>,
    pub chosen_l2: f64,
    pub folds: usize,
}

/// Fold id per row: each class is shuffled and dealt round-robin.
pub fn stratified_folds(y: &[usize], n_classes: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = seed::rng(seed);
    let mut assignment = vec![0; y.len()];
    let mut next = 0;
    for c in 0..n_classes {
        let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
        members.shuffle(&mut rng);
        for i in members {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    assignment
}

/// Picks the l2 with the highest mean validation accuracy; ties go to the
/// larger l2 (the simpler model).
pub fn select_l2(
    x: &EmbeddingMatrix,
    y: &[usize],
    classes: &LabelSet,
    grid: &[f64],
    base: &LogRegParams,
    folds: usize,
    seed: u64,
) -> Result<L2Selection> {
    check_training_set(x, y, classes)?;
    if grid.is_empty() {
        return Err(Error::param("l2 grid is empty"));
    }
    if folds < 2 || y.len() < folds {
        return Err(Error::param(format!(
            "cannot make {folds} folds from {} rows",
            y.len()
        )));
    }
    let assignment = stratified_folds(y, classes.len(), folds, seed);
    let jobs = grid.len() * folds;
    let scores: Vec<Result<f64>> = par::map_range(jobs, |job| {
        let (g, f) = (job / folds, job % folds);
        let train: Vec<usize> = (0..y.len()).filter(|&i| assignment[i] != f).collect();
        let val: Vec<usize> = (0..y.len()).filter(|&i| assignment[i] == f).collect();
        let ytr: Vec<usize> = train.iter().map(|&i| y[i]).collect();
        let params = LogRegParams {
            l2: grid[g],
            ..base.clone()
        };
        let model = fit_logreg(&x.select_rows(&train), &ytr, classes, &params)?;
        let pred = predict_logreg(&model, &x.select_rows(&val))?;
        let hits = pred
            .iter()
            .zip(&val)
            .filter(|(p, &i)| p.label == y[i])
            .count();
        Ok(hits as f64 / val.len() as f64)
    });
    let scores: Vec<f64> = scores.into_iter().collect::<Result<_>>()?;
    let cv_accuracy: Vec<f64> = (0..grid.len())
        .map(|g| scores[g * folds..(g + 1) * folds].iter().sum::<f64>() / folds as f64)
        .collect();
    let mut best = 0;
    for g in 1..grid.len() {
        if cv_accuracy[g] > cv_accuracy[best]
            || (cv_accuracy[g] == cv_accuracy[best] && grid[g] > grid[best])
        {
            best = g;
        }
    }
    Ok(L2Selection {
        grid: grid.to_vec(),
        cv_accuracy,
        chosen_l2: grid[best],
        folds,
    })
}
