//! Exact t-SNE.
//!
//! Per-point Gaussian bandwidths are found by bisection on the precision
//! `β = 1/(2σ²)` until the conditional distribution's entropy matches
//! `ln(perplexity)`. The joint `P` is the symmetrized conditional matrix
//! divided by `2n`. Optimization is gradient descent with momentum
//! (0.5, then 0.8), per-coordinate adaptive gains, early exaggeration and a
//! fixed learning rate, starting from the PCA projection scaled to a tiny
//! spread.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{pca2, Method, Projection2D, ProjectionMeta};
use crate::dataspec::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::{par, seed};

#[derive(Clone, Debug, PartialEq)]
pub struct TsneParams {
    pub perplexity: f64,
    pub iterations: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub momentum_switch: usize,
}

impl Default for TsneParams {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            seed: 42,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            momentum_switch: 250,
        }
    }
}

const ENTROPY_TOL: f64 = 1e-5;
const MAX_BISECTIONS: usize = 200;
const INIT_STD: f64 = 1e-4;
const JITTER_STD: f64 = 1e-8;
const MIN_GAIN: f64 = 0.01;

fn squared_distances(x: &EmbeddingMatrix) -> Vec<Vec<f64>> {
    par::map_range(x.rows(), |i| {
        let xi = x.row(i);
        (0..x.rows())
            .map(|j| {
                xi.iter()
                    .zip(x.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum()
            })
            .collect()
    })
}

/// Conditional row `p_{j|i}` for precision `beta`, with its entropy (nats).
fn conditional_row(dist: &[f64], i: usize, beta: f64) -> (Vec<f64>, f64) {
    let dmin = dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    let mut p: Vec<f64> = dist
        .iter()
        .enumerate()
        .map(|(j, &d)| {
            if j == i {
                0.0
            } else {
                (-beta * (d - dmin)).exp()
            }
        })
        .collect();
    let sum: f64 = p.iter().sum();
    let weighted: f64 = p.iter().zip(dist).map(|(pj, d)| pj * (d - dmin)).sum();
    let entropy = sum.ln() + beta * weighted / sum;
    p.iter_mut().for_each(|v| *v /= sum);
    (p, entropy)
}

fn fit_row(dist: &[f64], i: usize, target: f64) -> (Vec<f64>, f64) {
    let mut beta = 1.0;
    let (mut lo, mut hi) = (0.0, f64::INFINITY);
    let (mut row, mut h) = conditional_row(dist, i, beta);
    for _ in 0..MAX_BISECTIONS {
        let diff = h - target;
        if diff.abs() < ENTROPY_TOL {
            break;
        }
        if diff > 0.0 {
            // too flat: sharpen
            lo = beta;
            beta = if hi.is_finite() {
                0.5 * (beta + hi)
            } else {
                beta * 2.0
            };
        } else {
            hi = beta;
            beta = 0.5 * (beta + lo);
        }
        (row, h) = conditional_row(dist, i, beta);
    }
    (row, beta)
}

/// Conditional affinities `p_{j|i}` (row `i`) and the fitted precisions `β_i`.
pub fn conditional_probabilities(
    x: &EmbeddingMatrix,
    perplexity: f64,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    check_perplexity(x.rows(), perplexity)?;
    let dist = squared_distances(x);
    let target = perplexity.ln();
    let rows = par::map_range(x.rows(), |i| fit_row(&dist[i], i, target));
    Ok(rows.into_iter().unzip())
}

/// Symmetric joint affinities `(p_{j|i} + p_{i|j}) / 2n`, row-major `n × n`.
pub fn joint_probabilities(x: &EmbeddingMatrix, perplexity: f64) -> Result<Vec<f64>> {
    let (cond, _) = conditional_probabilities(x, perplexity)?;
    let n = cond.len();
    let scale = 1.0 / (2.0 * n as f64);
    let mut p = vec![0.0; n * n];
    par::for_each_chunk_mut(&mut p, n, |i, row| {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (cond[i][j] + cond[j][i]) * scale;
        }
    });
    Ok(p)
}

fn check_perplexity(n: usize, perplexity: f64) -> Result<()> {
    if !(perplexity >= 2.0) || !perplexity.is_finite() {
        return Err(Error::param(format!(
            "perplexity {perplexity} must be at least 2"
        )));
    }
    if (n as f64) < 3.0 * perplexity {
        return Err(Error::param(format!(
            "perplexity {perplexity} is infeasible for {n} points (need n >= 3 * perplexity)"
        )));
    }
    Ok(())
}

/// KL(P‖Q) for an embedding `y` under the Student-t kernel.
pub fn kl_divergence(p: &[f64], y: &[[f64; 2]]) -> f64 {
    let n = y.len();
    let parts = par::map_range(n, |i| {
        let mut z = 0.0;
        let mut cross = 0.0;
        for j in 0..n {
            if j == i {
                continue;
            }
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let num = 1.0 / (1.0 + dx * dx + dy * dy);
            z += num;
            let pij = p[i * n + j];
            if pij > 0.0 {
                cross += pij * (pij / num).ln();
            }
        }
        (z, cross)
    });
    let z: f64 = parts.iter().map(|t| t.0).sum();
    let cross: f64 = parts.iter().map(|t| t.1).sum();
    // Σ p ln(p / (num/Z)) = Σ p ln(p/num) + ln Z · Σ p
    let mass: f64 = p.iter().sum();
    cross + z.ln() * mass
}

fn initial_layout(x: &EmbeddingMatrix, seed: u64) -> (Vec<[f64; 2]>, &'static str) {
    let mut rng = seed::rng(seed);
    let (mut y, init) = match pca2(x) {
        Ok(p) => {
            let n = p.points.len() as f64;
            let mean = p.points.iter().map(|q| q[0]).sum::<f64>() / n;
            let sd = (p.points.iter().map(|q| (q[0] - mean).powi(2)).sum::<f64>() / n).sqrt();
            let scale = if sd > 0.0 { INIT_STD / sd } else { 0.0 };
            (
                p.points
                    .iter()
                    .map(|q| [q[0] * scale, q[1] * scale])
                    .collect::<Vec<_>>(),
                "pca",
            )
        }
        Err(_) => (
            (0..x.rows())
                .map(|_| {
                    [
                        INIT_STD * rng.sample::<f64, _>(StandardNormal),
                        INIT_STD * rng.sample::<f64, _>(StandardNormal),
                    ]
                })
                .collect(),
            "random",
        ),
    };
    // seeded jitter separates coincident points
    for q in y.iter_mut() {
        q[0] += JITTER_STD * rng.sample::<f64, _>(StandardNormal);
        q[1] += JITTER_STD * rng.sample::<f64, _>(StandardNormal);
    }
    (y, init)
}

pub fn tsne2(x: &EmbeddingMatrix, params: &TsneParams) -> Result<Projection2D> {
    let n = x.rows();
    let p = joint_probabilities(x, params.perplexity)?;
    let (mut y, init) = initial_layout(x, params.seed);
    let kl_initial = kl_divergence(&p, &y);

    let mut update = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    for iter in 0..params.iterations {
        let exaggeration = if iter < params.exaggeration_iters {
            params.early_exaggeration
        } else {
            1.0
        };
        let momentum = if iter < params.momentum_switch {
            0.5
        } else {
            0.8
        };

        // grad_i = 4 Σ_j (e·p_ij − q_ij) num_ij (y_i − y_j), with q = num / Z.
        // One pass per row gathers the attractive and repulsive sums and the
        // row's share of Z.
        let rows = par::map_range(n, |i| {
            let yi = y[i];
            let prow = &p[i * n..(i + 1) * n];
            let (mut ax, mut ay, mut rx, mut ry, mut z) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for j in 0..n {
                if j == i {
                    continue;
                }
                let dx = yi[0] - y[j][0];
                let dy = yi[1] - y[j][1];
                let num = 1.0 / (1.0 + dx * dx + dy * dy);
                z += num;
                let a = prow[j] * num;
                ax += a * dx;
                ay += a * dy;
                let r = num * num;
                rx += r * dx;
                ry += r * dy;
            }
            (ax, ay, rx, ry, z)
        });
        let z: f64 = rows.iter().map(|r| r.4).sum();
        for (i, &(ax, ay, rx, ry, _)) in rows.iter().enumerate() {
            let g = [
                4.0 * (exaggeration * ax - rx / z),
                4.0 * (exaggeration * ay - ry / z),
            ];
            for k in 0..2 {
                gains[i][k] = if (g[k] > 0.0) != (update[i][k] > 0.0) {
                    gains[i][k] + 0.2
                } else {
                    (gains[i][k] * 0.8).max(MIN_GAIN)
                };
                update[i][k] = momentum * update[i][k] - params.learning_rate * gains[i][k] * g[k];
                y[i][k] += update[i][k];
            }
        }
        let cx = y.iter().map(|q| q[0]).sum::<f64>() / n as f64;
        let cy = y.iter().map(|q| q[1]).sum::<f64>() / n as f64;
        for q in y.iter_mut() {
            q[0] -= cx;
            q[1] -= cy;
        }
        if !z.is_finite() || y.iter().any(|q| !q[0].is_finite() || !q[1].is_finite()) {
            return Err(Error::Diverged { iteration: iter });
        }
    }
    let kl_final = kl_divergence(&p, &y);
    if !kl_final.is_finite() {
        return Err(Error::Diverged {
            iteration: params.iterations,
        });
    }
    Ok(Projection2D {
        points: y,
        method: Method::Tsne,
        meta: ProjectionMeta {
            perplexity: Some(params.perplexity),
            iterations: Some(params.iterations),
            seed: Some(params.seed),
            init: Some(init.to_string()),
            kl_initial: Some(kl_initial),
            ..Default::default()
        },
        kl_final: Some(kl_final),
    })
}
