//! Tone classifiers over any embedding matrix: multinomial logistic
//! regression (the linear probe) and a random forest (the non-linear
//! reference).

mod cv;
mod forest;
mod logreg;

pub use cv::{select_l2, stratified_folds, L2Selection, DEFAULT_L2_GRID};
pub use forest::{fit_forest, predict_forest, ForestModel, ForestParams, Node, Tree, Vote};
pub use logreg::{fit_logreg, predict_logreg, LogRegModel, LogRegObjective, LogRegParams};

use serde::{Deserialize, Serialize};

use crate::container::Container;
use crate::dataspec::{EmbeddingMatrix, LabelSet};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Class index into the model's [`LabelSet`].
    pub label: usize,
    pub probs: Vec<f64>,
}

impl Prediction {
    pub fn from_probs(probs: Vec<f64>) -> Self {
        Self {
            label: argmax(&probs),
            probs,
        }
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub enum ClassifierModel {
    LogReg(LogRegModel),
    Forest(ForestModel),
}

impl ClassifierModel {
    pub fn predict(&self, x: &EmbeddingMatrix) -> Result<Vec<Prediction>> {
        match self {
            ClassifierModel::LogReg(m) => predict_logreg(m, x),
            ClassifierModel::Forest(m) => predict_forest(m, x),
        }
    }

    pub fn classes(&self) -> &LabelSet {
        match self {
            ClassifierModel::LogReg(m) => &m.classes,
            ClassifierModel::Forest(m) => &m.classes,
        }
    }

    pub fn to_container(&self) -> Result<Container> {
        match self {
            ClassifierModel::LogReg(m) => m.to_container(),
            ClassifierModel::Forest(m) => m.to_container(),
        }
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        match c.kind() {
            "logreg" => Ok(ClassifierModel::LogReg(LogRegModel::from_container(c)?)),
            "forest" => Ok(ClassifierModel::Forest(ForestModel::from_container(c)?)),
            other => Err(Error::Format(format!(
                "not a classifier container: {other:?}"
            ))),
        }
    }
}

/// Shared preconditions of both fitters.
fn check_training_set(x: &EmbeddingMatrix, y: &[usize], classes: &LabelSet) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::shape(format!(
            "{} feature rows but {} labels",
            x.rows(),
            y.len()
        )));
    }
    if classes.len() < 2 {
        return Err(Error::param("at least two classes are required"));
    }
    if y.len() < classes.len() {
        return Err(Error::param(format!(
            "{} samples cannot cover {} classes",
            y.len(),
            classes.len()
        )));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= classes.len()) {
        return Err(Error::param(format!(
            "label index {bad} outside the label set"
        )));
    }
    if y.iter().all(|&c| c == y[0]) {
        return Err(Error::Degenerate(
            "training labels contain a single class".into(),
        ));
    }
    Ok(())
}

fn check_dims(expected: usize, x: &EmbeddingMatrix) -> Result<()> {
    if x.dims() != expected {
        return Err(Error::shape(format!(
            "model expects {expected} features, got {}",
            x.dims()
        )));
    }
    Ok(())
}
