//! 2-D projections of embedding matrices for visual inspection: PCA and exact
//! t-SNE, plus CSV/SVG export and a silhouette score to quantify cluster
//! separation in the projected plane.

mod export;
mod pca;
mod tsne;

pub use export::{
    export_projection, export_projection_with_meta, render_csv, render_svg, write_svg,
};
pub use pca::pca2;
pub use tsne::{conditional_probabilities, joint_probabilities, kl_divergence, tsne2, TsneParams};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Pca,
    Tsne,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Pca => "pca",
            Method::Tsne => "tsne",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProjectionMeta {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explained_variance: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perplexity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kl_initial: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Projection2D {
    pub points: Vec<[f64; 2]>,
    pub method: Method,
    pub meta: ProjectionMeta,
    /// Final KL(P‖Q); t-SNE only.
    pub kl_final: Option<f64>,
}

/// Mean silhouette coefficient of `labels` over 2-D points (Euclidean).
/// Points in singleton clusters score 0.
pub fn silhouette_score(points: &[[f64; 2]], labels: &[usize]) -> Result<f64> {
    if points.len() != labels.len() {
        return Err(Error::shape("points and labels differ in length"));
    }
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::Degenerate(
            "silhouette needs at least two clusters".into(),
        ));
    }
    let n = points.len();
    let scores = crate::par::map_range(n, |i| {
        if sizes[labels[i]] <= 1 {
            return 0.0;
        }
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if j != i {
                let dx = points[i][0] - points[j][0];
                let dy = points[i][1] - points[j][1];
                sums[labels[j]] += (dx * dx + dy * dy).sqrt();
            }
        }
        let own = labels[i];
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if a.max(b) > 0.0 {
            (b - a) / a.max(b)
        } else {
            0.0
        }
    });
    Ok(scores.iter().sum::<f64>() / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silhouette_of_tight_clusters_is_near_one() {
        let pts = [[0.0, 0.0], [0.0, 0.1], [10.0, 0.0], [10.0, 0.1]];
        let s = silhouette_score(&pts, &[0, 0, 1, 1]).unwrap();
        assert!(s > 0.98);
        let mixed = silhouette_score(&pts, &[0, 1, 0, 1]).unwrap();
        assert!(mixed < 0.0);
        assert!(silhouette_score(&pts, &[0, 0, 0, 0]).is_err());
    }
}
