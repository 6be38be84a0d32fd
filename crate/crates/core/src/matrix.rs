//! Small dense helpers on nalgebra matrices shared by the numerical modules.

use nalgebra::{DMatrix, DVector};

pub fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows();
    if n == 0 {
        return DVector::zeros(m.ncols());
    }
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n as f64))
}

/// `m` with `means` subtracted from every row.
pub fn center(m: &DMatrix<f64>, means: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    out
}

/// Tolerance below which a singular value is treated as zero.
pub fn rank_tolerance(singular_values: &DVector<f64>, rows: usize, cols: usize) -> f64 {
    let max = singular_values.iter().copied().fold(0.0, f64::max);
    max * rows.max(cols) as f64 * f64::EPSILON
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centering_zeroes_means() {
        let m = DMatrix::from_row_slice(3, 2, &[1., 10., 2., 20., 3., 30.]);
        let mu = column_means(&m);
        assert_eq!(mu.as_slice(), &[2., 20.]);
        let c = center(&m, &mu);
        assert!(column_means(&c).iter().all(|v| v.abs() < 1e-15));
    }
}
