//! Ridge regression from text embeddings to speech embeddings, and the
//! residuals it leaves behind.
//!
//! The model is `speech ≈ W·text + b`. `b` is unpenalized and handled by
//! centering both sides; `W` minimizes
//! `‖S − (T Wᵀ + 1bᵀ)‖²_F + λ‖W‖²_F`. The solve goes through the thin SVD of
//! the centered text matrix `Tc = U Σ Vᵀ`, giving
//! `Wᵀ = V diag(σ / (σ² + λ)) Uᵀ Sc`, which is also the minimum-norm
//! least-squares solution at `λ = 0` when `Tc` is rank-deficient.

use nalgebra::{DMatrix, DVector, SVD};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::container::Container;
use crate::dataspec::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::matrix::{center, column_means, rank_tolerance};
use crate::{par, seed};

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualModel {
    /// `d_s × d_t`.
    pub weights: DMatrix<f64>,
    /// Length `d_s`; equals `s_mean − W·t_mean`.
    pub intercept: DVector<f64>,
    pub lambda: f64,
    pub t_mean: DVector<f64>,
    pub s_mean: DVector<f64>,
    /// Mean squared training residual over all `n·d_s` entries.
    pub train_mse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub lambda_grid: Vec<f64>,
    pub cv_mse: Vec<f64>,
    pub chosen_lambda: f64,
    /// Effective rank of the centered text matrix used for the final fit.
    pub rank: usize,
    pub folds: usize,
    pub seed: u64,
}

/// Ten log-spaced values from 1e-3 to 1e3.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..10)
        .map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / 9.0))
        .collect()
}

/// Centered SVD of one training set, reusable across λ values.
struct RidgeSolver {
    t_mean: DVector<f64>,
    s_mean: DVector<f64>,
    v: DMatrix<f64>,
    sigma: Vec<f64>,
    /// `Uᵀ Sc`, `k × d_s`.
    ut_s: DMatrix<f64>,
    rank: usize,
}

impl RidgeSolver {
    fn new(text: &DMatrix<f64>, speech: &DMatrix<f64>) -> Self {
        let t_mean = column_means(text);
        let s_mean = column_means(speech);
        let tc = center(text, &t_mean);
        let sc = center(speech, &s_mean);
        let (n, d) = tc.shape();
        let svd = SVD::new(tc, true, true);
        let u = svd.u.expect("requested U");
        let v_t = svd.v_t.expect("requested Vᵀ");
        let tol = rank_tolerance(&svd.singular_values, n, d);
        let sigma: Vec<f64> = svd
            .singular_values
            .iter()
            .map(|&s| if s > tol { s } else { 0.0 })
            .collect();
        let rank = sigma.iter().filter(|&&s| s > 0.0).count();
        Self {
            t_mean,
            s_mean,
            v: v_t.transpose(),
            sigma,
            ut_s: u.transpose() * sc,
            rank,
        }
    }

    /// `W` for the given λ, `d_s × d_t`.
    fn weights(&self, lambda: f64) -> DMatrix<f64> {
        let mut scaled = self.ut_s.clone();
        for (k, mut row) in scaled.row_iter_mut().enumerate() {
            let s = self.sigma[k];
            let f = if s > 0.0 { s / (s * s + lambda) } else { 0.0 };
            row *= f;
        }
        (&self.v * scaled).transpose()
    }

    fn model(&self, lambda: f64) -> ResidualModel {
        let weights = self.weights(lambda);
        let intercept = &self.s_mean - &weights * &self.t_mean;
        ResidualModel {
            weights,
            intercept,
            lambda,
            t_mean: self.t_mean.clone(),
            s_mean: self.s_mean.clone(),
            train_mse: 0.0,
        }
    }
}

fn check_pair(text: &EmbeddingMatrix, speech: &EmbeddingMatrix) -> Result<()> {
    if text.rows() != speech.rows() {
        return Err(Error::shape(format!(
            "text has {} rows but speech has {}",
            text.rows(),
            speech.rows()
        )));
    }
    if text.rows() == 0 {
        return Err(Error::Degenerate(
            "regression needs at least one row".into(),
        ));
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::param(format!(
            "ridge strength {lambda} must be finite and >= 0"
        )));
    }
    Ok(())
}

pub fn fit_ridge(
    text: &EmbeddingMatrix,
    speech: &EmbeddingMatrix,
    lambda: f64,
) -> Result<ResidualModel> {
    check_pair(text, speech)?;
    check_lambda(lambda)?;
    let solver = RidgeSolver::new(&text.to_dmatrix(), &speech.to_dmatrix());
    finish(solver.model(lambda), text, speech)
}

fn finish(
    mut model: ResidualModel,
    text: &EmbeddingMatrix,
    speech: &EmbeddingMatrix,
) -> Result<ResidualModel> {
    if model
        .weights
        .iter()
        .chain(model.intercept.iter())
        .any(|v| !v.is_finite())
    {
        return Err(Error::Degenerate("ridge solution is not finite".into()));
    }
    let r = extract_residuals(&model, text, speech)?;
    model.train_mse = mean_square(r.data());
    Ok(model)
}

fn mean_square(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64
    }
}

impl ResidualModel {
    pub fn text_dims(&self) -> usize {
        self.weights.ncols()
    }

    pub fn speech_dims(&self) -> usize {
        self.weights.nrows()
    }

    /// `‖S − (T Wᵀ + b)‖²_F + λ‖W‖²_F` on the given data.
    pub fn objective(&self, text: &EmbeddingMatrix, speech: &EmbeddingMatrix) -> Result<f64> {
        let r = extract_residuals(self, text, speech)?;
        let data: f64 = r.data().iter().map(|x| x * x).sum();
        Ok(data + self.lambda * self.weights.norm_squared())
    }

    pub fn to_container(&self) -> Result<Container> {
        let mut c = Container::new("ridge");
        c.set("lambda", &self.lambda)?;
        c.set("text_dims", &self.text_dims())?;
        c.set("speech_dims", &self.speech_dims())?;
        c.set("train_mse", &self.train_mse)?;
        c.set("t_mean", self.t_mean.as_slice())?;
        c.set("s_mean", self.s_mean.as_slice())?;
        c.push_section("weights", EmbeddingMatrix::from_dmatrix(&self.weights)?);
        c.push_section(
            "intercept",
            EmbeddingMatrix::new(1, self.speech_dims(), self.intercept.as_slice().to_vec())?,
        );
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        c.expect_kind("ridge")?;
        let w = c.section("weights")?;
        let b = c.section("intercept")?;
        let t_mean: Vec<f64> = c.get("t_mean")?;
        let s_mean: Vec<f64> = c.get("s_mean")?;
        if b.dims() != w.rows() || t_mean.len() != w.dims() || s_mean.len() != w.rows() {
            return Err(Error::Format(
                "ridge container sections disagree on shape".into(),
            ));
        }
        Ok(Self {
            weights: w.to_dmatrix(),
            intercept: DVector::from_row_slice(b.data()),
            lambda: c.get("lambda")?,
            t_mean: DVector::from_vec(t_mean),
            s_mean: DVector::from_vec(s_mean),
            train_mse: c.get("train_mse")?,
        })
    }
}

const PREDICT_CHUNK: usize = 64;

/// `Ê_s`, row `i` = `W·text[i] + b`.
pub fn predict(model: &ResidualModel, text: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    if text.dims() != model.text_dims() {
        return Err(Error::shape(format!(
            "model expects {} text dims, got {}",
            model.text_dims(),
            text.dims()
        )));
    }
    let ds = model.speech_dims();
    let dt = model.text_dims();
    // row-major copy of W for contiguous dot products
    let w: Vec<f64> = (0..ds)
        .flat_map(|k| model.weights.row(k).iter().copied().collect::<Vec<_>>())
        .collect();
    let mut out = vec![0.0; text.rows() * ds];
    par::for_each_chunk_mut(&mut out, PREDICT_CHUNK * ds, |chunk_idx, chunk| {
        for (local, row_out) in chunk.chunks_exact_mut(ds).enumerate() {
            let x = text.row(chunk_idx * PREDICT_CHUNK + local);
            for (k, o) in row_out.iter_mut().enumerate() {
                let wk = &w[k * dt..(k + 1) * dt];
                *o = model.intercept[k] + wk.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    });
    EmbeddingMatrix::new(text.rows(), ds, out)
}

/// `R = speech − predict(model, text)`.
pub fn extract_residuals(
    model: &ResidualModel,
    text: &EmbeddingMatrix,
    speech: &EmbeddingMatrix,
) -> Result<EmbeddingMatrix> {
    if text.rows() != speech.rows() {
        return Err(Error::shape(format!(
            "text has {} rows but speech has {}",
            text.rows(),
            speech.rows()
        )));
    }
    if speech.dims() != model.speech_dims() {
        return Err(Error::shape(format!(
            "model expects {} speech dims, got {}",
            model.speech_dims(),
            speech.dims()
        )));
    }
    let pred = predict(model, text)?;
    let data = speech
        .data()
        .iter()
        .zip(pred.data())
        .map(|(s, p)| s - p)
        .collect();
    EmbeddingMatrix::new(speech.rows(), speech.dims(), data)
}

/// Picks λ from `grid` by k-fold cross-validated MSE (ties go to the smaller
/// λ) and refits on all rows.
pub fn fit_ridge_cv(
    text: &EmbeddingMatrix,
    speech: &EmbeddingMatrix,
    grid: &[f64],
    folds: usize,
    seed: u64,
) -> Result<(ResidualModel, FitReport)> {
    check_pair(text, speech)?;
    if grid.is_empty() {
        return Err(Error::param("lambda grid is empty"));
    }
    for &l in grid {
        check_lambda(l)?;
    }
    if folds < 2 {
        return Err(Error::param("cross-validation needs at least 2 folds"));
    }
    let n = text.rows();
    if n < folds {
        return Err(Error::Degenerate(format!(
            "{n} rows cannot fill {folds} folds"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed));
    let bounds: Vec<(usize, usize)> = (0..folds)
        .map(|f| (f * n / folds, (f + 1) * n / folds))
        .collect();
    if bounds.iter().any(|(a, b)| a == b) {
        return Err(Error::Degenerate("a cross-validation fold is empty".into()));
    }

    let t_all = text.to_dmatrix();
    let s_all = speech.to_dmatrix();
    let per_fold: Vec<Vec<f64>> = par::map_range(folds, |f| {
        let (lo, hi) = bounds[f];
        let val: Vec<usize> = order[lo..hi].to_vec();
        let train: Vec<usize> = order[..lo].iter().chain(&order[hi..]).copied().collect();
        let solver = RidgeSolver::new(&t_all.select_rows(&train), &s_all.select_rows(&train));
        let tv = text.select_rows(&val);
        let sv = speech.select_rows(&val);
        grid.iter()
            .map(|&l| {
                let m = solver.model(l);
                extract_residuals(&m, &tv, &sv)
                    .map(|r| mean_square(r.data()))
                    .unwrap_or(f64::INFINITY)
            })
            .collect()
    });

    let cv_mse: Vec<f64> = (0..grid.len())
        .map(|g| per_fold.iter().map(|f| f[g]).sum::<f64>() / folds as f64)
        .collect();
    if cv_mse.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate(
            "non-finite cross-validation error".into(),
        ));
    }
    let mut best = 0;
    for g in 1..grid.len() {
        if cv_mse[g] < cv_mse[best] || (cv_mse[g] == cv_mse[best] && grid[g] < grid[best]) {
            best = g;
        }
    }
    let chosen = grid[best];
    let solver = RidgeSolver::new(&t_all, &s_all);
    let model = finish(solver.model(chosen), text, speech)?;
    let report = FitReport {
        lambda_grid: grid.to_vec(),
        cv_mse,
        chosen_lambda: chosen,
        rank: solver.rank,
        folds,
        seed,
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random(rows: usize, dims: usize, rng: &mut impl Rng) -> EmbeddingMatrix {
        let data = (0..rows * dims)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        EmbeddingMatrix::new(rows, dims, data).unwrap()
    }

    /// `(Tcᵀ Tc + λI)⁻¹ Tcᵀ Sc` by explicit inversion.
    fn normal_equation(t: &EmbeddingMatrix, s: &EmbeddingMatrix, lambda: f64) -> DMatrix<f64> {
        let t = t.to_dmatrix();
        let s = s.to_dmatrix();
        let tc = center(&t, &column_means(&t));
        let sc = center(&s, &column_means(&s));
        let d = tc.ncols();
        let gram = tc.transpose() * &tc + DMatrix::identity(d, d) * lambda;
        (gram.try_inverse().unwrap() * tc.transpose() * sc).transpose()
    }

    #[test]
    fn self_regression_is_exact() {
        let t = EmbeddingMatrix::from_rows(&[
            [1.0, 0.0, 2.0],
            [0.0, 3.0, 1.0],
            [2.0, 1.0, 0.0],
            [1.0, 1.0, 1.5],
        ])
        .unwrap();
        let m = fit_ridge(&t, &t, 0.0).unwrap();
        let p = predict(&m, &t).unwrap();
        for (a, b) in p.data().iter().zip(t.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(m.train_mse < 1e-24);
    }

    #[test]
    fn matches_normal_equations() {
        let mut rng = seed::rng(11);
        let t = random(6, 2, &mut rng);
        let s = random(6, 3, &mut rng);
        let m = fit_ridge(&t, &s, 0.5).unwrap();
        let oracle = normal_equation(&t, &s, 0.5);
        for (a, b) in m.weights.iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        let b = &m.s_mean - &m.weights * &m.t_mean;
        assert!((b - &m.intercept).norm() < 1e-12);
    }

    #[test]
    fn heavier_penalty_shrinks() {
        let mut rng = seed::rng(12);
        let t = random(6, 2, &mut rng);
        let s = random(6, 3, &mut rng);
        let small = fit_ridge(&t, &s, 0.1).unwrap().weights.norm();
        let large = fit_ridge(&t, &s, 10.0).unwrap().weights.norm();
        assert!(small >= large);
    }

    #[test]
    fn intercept_only_prediction() {
        let m = ResidualModel {
            weights: DMatrix::zeros(2, 3),
            intercept: DVector::from_vec(vec![1.0, 2.0]),
            lambda: 0.0,
            t_mean: DVector::zeros(3),
            s_mean: DVector::from_vec(vec![1.0, 2.0]),
            train_mse: 0.0,
        };
        let mut rng = seed::rng(3);
        let p = predict(&m, &random(3, 3, &mut rng)).unwrap();
        assert!(p.row_iter().all(|r| r == [1.0, 2.0]));
        let empty = predict(&m, &EmbeddingMatrix::zeros(0, 3)).unwrap();
        assert_eq!((empty.rows(), empty.dims()), (0, 2));
        assert!(predict(&m, &EmbeddingMatrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn noiseless_linear_residuals_vanish() {
        let mut rng = seed::rng(4);
        let t = random(10, 3, &mut rng);
        let s = random(10, 2, &mut rng);
        let m = fit_ridge(&t, &s, 0.3).unwrap();
        let exact = predict(&m, &t).unwrap();
        let r = extract_residuals(&m, &t, &exact).unwrap();
        assert!(r.data().iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn heavy_shrinkage_leaves_centered_targets() {
        let mut rng = seed::rng(5);
        let t = random(12, 3, &mut rng);
        let s = random(12, 2, &mut rng);
        let m = fit_ridge(&t, &s, 1e12).unwrap();
        let r = extract_residuals(&m, &t, &s).unwrap();
        let sd = s.to_dmatrix();
        let centered = center(&sd, &column_means(&sd));
        let expect = EmbeddingMatrix::from_dmatrix(&centered).unwrap();
        let scale = expect.data().iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (a, b) in r.data().iter().zip(expect.data()) {
            assert!((a - b).abs() <= 1e-6 * scale);
        }
    }

    #[test]
    fn rank_deficient_min_norm() {
        // second text column duplicates the first: min-norm solution splits the weight evenly
        let t =
            EmbeddingMatrix::from_rows(&[[1.0, 1.0], [2.0, 2.0], [4.0, 4.0], [3.0, 3.0]]).unwrap();
        let s = EmbeddingMatrix::from_rows(&[[2.0], [4.0], [8.0], [6.0]]).unwrap();
        let m = fit_ridge(&t, &s, 0.0).unwrap();
        assert!((m.weights[(0, 0)] - 1.0).abs() < 1e-10);
        assert!((m.weights[(0, 1)] - 1.0).abs() < 1e-10);
        assert!(m.train_mse < 1e-20);
    }

    #[test]
    fn input_errors() {
        let a = EmbeddingMatrix::zeros(3, 2);
        let b = EmbeddingMatrix::zeros(4, 2);
        assert!(matches!(fit_ridge(&a, &b, 1.0), Err(Error::Shape(_))));
        assert!(fit_ridge(&a, &a, -1.0).is_err());
        assert!(fit_ridge(
            &EmbeddingMatrix::zeros(0, 2),
            &EmbeddingMatrix::zeros(0, 2),
            1.0
        )
        .is_err());
    }

    #[test]
    fn cv_singleton_and_noiseless() {
        let mut rng = seed::rng(8);
        let t = random(40, 3, &mut rng);
        let (_, rep) = fit_ridge_cv(&t, &t, &[0.0], 5, 1).unwrap();
        assert_eq!(rep.chosen_lambda, 0.0);

        let truth = fit_ridge(&t, &random(40, 4, &mut rng), 0.0).unwrap();
        let s = predict(&truth, &t).unwrap();
        let (m, rep) = fit_ridge_cv(&t, &s, &[0.0, 1.0, 100.0], 5, 2).unwrap();
        assert_eq!(rep.chosen_lambda, 0.0);
        assert_eq!(rep.cv_mse.len(), 3);
        assert!(rep.cv_mse[0] < rep.cv_mse[1] && rep.cv_mse[1] < rep.cv_mse[2]);
        assert_eq!(m.lambda, 0.0);
        assert_eq!(rep.rank, 3);
    }

    #[test]
    fn cv_tie_picks_smaller_lambda() {
        // constant targets: every λ predicts the mean exactly
        let mut rng = seed::rng(9);
        let t = random(20, 2, &mut rng);
        let s = EmbeddingMatrix::new(20, 1, vec![3.0; 20]).unwrap();
        let (_, rep) = fit_ridge_cv(&t, &s, &[5.0, 0.5, 2.0], 4, 3).unwrap();
        assert_eq!(rep.cv_mse[0], rep.cv_mse[1]);
        assert_eq!(rep.chosen_lambda, 0.5);
    }

    #[test]
    fn cv_errors() {
        let t = EmbeddingMatrix::zeros(3, 2);
        assert!(fit_ridge_cv(&t, &t, &[], 2, 0).is_err());
        assert!(fit_ridge_cv(&t, &t, &[1.0], 1, 0).is_err());
        assert!(matches!(
            fit_ridge_cv(&t, &t, &[1.0], 4, 0),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn default_grid_spans_six_decades() {
        let g = default_lambda_grid();
        assert_eq!(g.len(), 10);
        assert!((g[0] - 1e-3).abs() < 1e-15);
        assert!((g[9] - 1e3).abs() < 1e-9);
    }

    #[test]
    fn container_round_trip() {
        let mut rng = seed::rng(10);
        let t = random(8, 3, &mut rng);
        let s = random(8, 2, &mut rng);
        let m = fit_ridge(&t, &s, 0.7).unwrap();
        let back = ResidualModel::from_container(
            &Container::from_bytes(&m.to_container().unwrap().to_bytes().unwrap()).unwrap(),
        )
        .unwrap();
        assert_eq!(back.lambda, 0.7);
        assert!((back.weights - &m.weights).amax() < 1e-6);
    }
}
