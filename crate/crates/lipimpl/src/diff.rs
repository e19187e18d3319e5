//! Central-difference Jacobians for black-box maps.

use nalgebra::{DMatrix, DVector};

/// Step size used for central differences: `fd_step` scaled by the magnitude
/// of the expansion point, floored at `fd_step` itself.
pub(crate) fn scaled_step(fd_step: f64, base_norm: f64) -> f64 {
    fd_step * base_norm.max(1.0)
}

/// Jacobian of `f` at `at` by central differences, one column per coordinate.
pub(crate) fn central_jacobian<F>(f: F, at: &DVector<f64>, step: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = at.len();
    let mut plus = at.clone();
    let mut minus = at.clone();

    let mut columns: Vec<DVector<f64>> = Vec::with_capacity(n);
    for j in 0..n {
        plus[j] += step;
        minus[j] -= step;
        let diff = (f(&plus) - f(&minus)) / (2.0 * step);
        plus[j] = at[j];
        minus[j] = at[j];
        columns.push(diff);
    }

    let m = columns.first().map_or(0, |c| c.len());
    DMatrix::from_fn(m, n, |i, j| columns[j][i])
}
