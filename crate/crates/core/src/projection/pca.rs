use nalgebra::SVD;

use super::{Method, Projection2D, ProjectionMeta};
use crate::dataspec::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::matrix::{center, column_means};

/// Projection onto the top two principal axes of the column-centered input.
///
/// Each axis is signed so that its largest-magnitude loading is positive
/// (lowest index on ties). Explained variance is `σᵢ² / Σσ²`.
pub fn pca2(x: &EmbeddingMatrix) -> Result<Projection2D> {
    if x.rows() < 3 {
        return Err(Error::param("PCA needs at least 3 rows"));
    }
    if x.dims() < 2 {
        return Err(Error::param("PCA to 2-D needs at least 2 dimensions"));
    }
    let m = x.to_dmatrix();
    let xc = center(&m, &column_means(&m));
    let svd = SVD::new(xc.clone(), false, true);
    let v_t = svd.v_t.expect("requested Vᵀ");
    let sv = &svd.singular_values;

    let total: f64 = sv.iter().map(|s| s * s).sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("input has zero variance".into()));
    }
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));

    let mut axes = Vec::with_capacity(2);
    for &k in &order[..2] {
        let mut v: Vec<f64> = v_t.row(k).iter().copied().collect();
        let mut lead = 0;
        for (j, &val) in v.iter().enumerate() {
            if val.abs() > v[lead].abs() {
                lead = j;
            }
        }
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|a| *a = -*a);
        }
        axes.push(v);
    }
    let points = (0..xc.nrows())
        .map(|i| {
            let row = xc.row(i);
            let p = |axis: &[f64]| row.iter().zip(axis).map(|(a, b)| a * b).sum::<f64>();
            [p(&axes[0]), p(&axes[1])]
        })
        .collect();
    let ev = [sv[order[0]].powi(2) / total, sv[order[1]].powi(2) / total];
    Ok(Projection2D {
        points,
        method: Method::Pca,
        meta: ProjectionMeta {
            explained_variance: Some(ev),
            ..Default::default()
        },
        kl_final: None,
    })
}
