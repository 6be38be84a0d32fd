//! Multinomial logistic regression trained by full-batch gradient descent.
//!
//! Objective: mean softmax cross-entropy + `(l2/2)‖W‖²_F`, biases unpenalized.
//! Each step takes a gradient step on the cross-entropy and applies the L2
//! term through its proximal map `W ← W / (1 + t·l2)`, with backtracking on
//! the step size `t`. A step is accepted only if it satisfies the sufficient
//! decrease condition and does not increase the full objective, so the loss
//! sequence is nonincreasing. Parameters start at zero.

use nalgebra::{DMatrix, DVector};

use super::{check_dims, check_training_set, Prediction};
use crate::container::Container;
use crate::dataspec::{EmbeddingMatrix, LabelSet};
use crate::error::{Error, Result};
use crate::par;

#[derive(Clone, Debug, PartialEq)]
pub struct LogRegParams {
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        Self {
            l2: 1e-2,
            max_iter: 500,
            tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRegModel {
    /// `C × d`.
    pub weights: DMatrix<f64>,
    pub biases: DVector<f64>,
    pub l2: f64,
    pub classes: LabelSet,
    pub converged: bool,
    pub final_loss: f64,
    pub iterations: usize,
    /// Objective after each accepted step, starting with the initial value.
    /// Not serialized.
    pub loss_history: Vec<f64>,
}

/// The training objective over a flat parameter vector
/// `[W row-major (C·d), b (C)]`.
pub struct LogRegObjective<'a> {
    x: &'a EmbeddingMatrix,
    y: &'a [usize],
    n_classes: usize,
    l2: f64,
}

const ROW_CHUNK: usize = 128;

impl<'a> LogRegObjective<'a> {
    pub fn new(x: &'a EmbeddingMatrix, y: &'a [usize], n_classes: usize, l2: f64) -> Self {
        Self {
            x,
            y,
            n_classes,
            l2,
        }
    }

    pub fn n_params(&self) -> usize {
        self.n_classes * (self.x.dims() + 1)
    }

    /// Row-wise softmax probabilities, `n × C` row-major.
    fn probabilities(&self, theta: &[f64]) -> Vec<f64> {
        let c = self.n_classes;
        let mut probs = vec![0.0; self.x.rows() * c];
        par::for_each_chunk_mut(&mut probs, ROW_CHUNK * c, |chunk, out| {
            for (local, p) in out.chunks_exact_mut(c).enumerate() {
                softmax_row(theta, self.x.row(chunk * ROW_CHUNK + local), p);
            }
        });
        probs
    }

    fn penalty(&self, theta: &[f64]) -> f64 {
        let nw = self.n_classes * self.x.dims();
        0.5 * self.l2 * theta[..nw].iter().map(|w| w * w).sum::<f64>()
    }

    /// Cross-entropy part only, computed stably from logits.
    fn smooth_value(&self, theta: &[f64]) -> f64 {
        let c = self.n_classes;
        let d = self.x.dims();
        let per_row = par::map_range(self.x.rows(), |i| {
            let x = self.x.row(i);
            let logits: Vec<f64> = (0..c).map(|k| logit(theta, x, k, d, c)).collect();
            let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
            lse - logits[self.y[i]]
        });
        per_row.iter().sum::<f64>() / self.y.len() as f64
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        self.smooth_value(theta) + self.penalty(theta)
    }

    /// Gradient of the cross-entropy part.
    fn smooth_gradient(&self, theta: &[f64]) -> Vec<f64> {
        let c = self.n_classes;
        let d = self.x.dims();
        let n = self.x.rows();
        let mut resid = self.probabilities(theta);
        for (i, &yi) in self.y.iter().enumerate() {
            resid[i * c + yi] -= 1.0;
        }
        let inv_n = 1.0 / n as f64;
        // one row of the gradient per class, each summed over samples in order
        let per_class: Vec<Vec<f64>> = par::map_range(c, |k| {
            let mut g = vec![0.0; d + 1];
            for i in 0..n {
                let r = resid[i * c + k];
                if r != 0.0 {
                    for (gj, xj) in g[..d].iter_mut().zip(self.x.row(i)) {
                        *gj += r * xj;
                    }
                    g[d] += r;
                }
            }
            g.iter_mut().for_each(|v| *v *= inv_n);
            g
        });
        let mut grad = vec![0.0; self.n_params()];
        for (k, g) in per_class.into_iter().enumerate() {
            grad[k * d..(k + 1) * d].copy_from_slice(&g[..d]);
            grad[c * d + k] = g[d];
        }
        grad
    }

    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let nw = self.n_classes * self.x.dims();
        let mut g = self.smooth_gradient(theta);
        for (gi, wi) in g[..nw].iter_mut().zip(theta) {
            *gi += self.l2 * wi;
        }
        g
    }
}

fn logit(theta: &[f64], x: &[f64], k: usize, d: usize, c: usize) -> f64 {
    theta[c * d + k]
        + theta[k * d..(k + 1) * d]
            .iter()
            .zip(x)
            .map(|(w, v)| w * v)
            .sum::<f64>()
}

fn softmax_row(theta: &[f64], x: &[f64], out: &mut [f64]) {
    let c = out.len();
    let d = x.len();
    for (k, o) in out.iter_mut().enumerate() {
        *o = logit(theta, x, k, d, c);
    }
    softmax_in_place(out);
}

fn softmax_in_place(z: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    z.iter_mut().for_each(|v| *v /= s);
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn fit_logreg(
    x: &EmbeddingMatrix,
    y: &[usize],
    classes: &LabelSet,
    params: &LogRegParams,
) -> Result<LogRegModel> {
    check_training_set(x, y, classes)?;
    if !(params.l2.is_finite() && params.l2 >= 0.0) {
        return Err(Error::param(format!(
            "l2 = {} must be finite and >= 0",
            params.l2
        )));
    }
    if !(params.tol > 0.0) {
        return Err(Error::param("tol must be positive"));
    }
    let c = classes.len();
    let d = x.dims();
    let nw = c * d;
    let obj = LogRegObjective::new(x, y, c, params.l2);

    let mut theta = vec![0.0; obj.n_params()];
    let mut smooth = obj.smooth_value(&theta);
    let mut loss = smooth + obj.penalty(&theta);
    let mut history = vec![loss];
    let mut step: f64 = 1.0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < params.max_iter {
        let g_smooth = obj.smooth_gradient(&theta);
        let mut g_full = g_smooth.clone();
        for (gi, wi) in g_full[..nw].iter_mut().zip(&theta) {
            *gi += params.l2 * wi;
        }
        if inf_norm(&g_full) < params.tol {
            converged = true;
            break;
        }

        let mut accepted = None;
        let mut t = (step * 2.0).min(1e6);
        for _ in 0..60 {
            let shrink = 1.0 / (1.0 + t * params.l2);
            let cand: Vec<f64> = theta
                .iter()
                .zip(&g_smooth)
                .enumerate()
                .map(|(i, (p, g))| {
                    let v = p - t * g;
                    if i < nw {
                        v * shrink
                    } else {
                        v
                    }
                })
                .collect();
            let cand_smooth = obj.smooth_value(&cand);
            let mut lin = 0.0;
            let mut quad = 0.0;
            for ((a, b), g) in cand.iter().zip(&theta).zip(&g_smooth) {
                let dlt = a - b;
                lin += g * dlt;
                quad += dlt * dlt;
            }
            let cand_loss = cand_smooth + obj.penalty(&cand);
            if cand_smooth <= smooth + lin + quad / (2.0 * t) && cand_loss <= loss {
                accepted = Some((cand, cand_smooth, cand_loss));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, cand_smooth, cand_loss)) = accepted else {
            // no decrease possible at floating-point resolution
            break;
        };
        step = t;
        theta = cand;
        smooth = cand_smooth;
        loss = cand_loss;
        history.push(loss);
        iterations += 1;
    }
    if !converged && iterations == params.max_iter {
        let g = obj.gradient(&theta);
        converged = inf_norm(&g) < params.tol;
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("logistic regression diverged".into()));
    }

    Ok(LogRegModel {
        weights: DMatrix::from_row_slice(c, d, &theta[..nw]),
        biases: DVector::from_row_slice(&theta[nw..]),
        l2: params.l2,
        classes: classes.clone(),
        converged,
        final_loss: loss,
        iterations,
        loss_history: history,
    })
}

impl LogRegModel {
    fn theta(&self) -> Vec<f64> {
        let c = self.weights.nrows();
        let mut t: Vec<f64> = (0..c)
            .flat_map(|k| self.weights.row(k).iter().copied().collect::<Vec<_>>())
            .collect();
        t.extend(self.biases.iter());
        t
    }

    pub fn to_container(&self) -> Result<Container> {
        let mut c = Container::new("logreg");
        c.set("classes", &self.classes)?;
        c.set("l2", &self.l2)?;
        c.set("converged", &self.converged)?;
        c.set("final_loss", &self.final_loss)?;
        c.set("iterations", &self.iterations)?;
        c.push_section("weights", EmbeddingMatrix::from_dmatrix(&self.weights)?);
        c.push_section(
            "biases",
            EmbeddingMatrix::new(1, self.biases.len(), self.biases.as_slice().to_vec())?,
        );
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        c.expect_kind("logreg")?;
        let classes: LabelSet = c.get("classes")?;
        let w = c.section("weights")?;
        let b = c.section("biases")?;
        if w.rows() != classes.len() || b.dims() != classes.len() {
            return Err(Error::Format(
                "logreg sections disagree with the label set".into(),
            ));
        }
        Ok(Self {
            weights: w.to_dmatrix(),
            biases: DVector::from_row_slice(b.data()),
            l2: c.get("l2")?,
            classes,
            converged: c.get("converged")?,
            final_loss: c.get("final_loss")?,
            iterations: c.get("iterations")?,
            loss_history: Vec::new(),
        })
    }
}

pub fn predict_logreg(model: &LogRegModel, x: &EmbeddingMatrix) -> Result<Vec<Prediction>> {
    check_dims(model.weights.ncols(), x)?;
    let theta = model.theta();
    let c = model.classes.len();
    Ok(par::map_range(x.rows(), |i| {
        let mut p = vec![0.0; c];
        softmax_row(&theta, x.row(i), &mut p);
        Prediction::from_probs(p)
    }))
}
