use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Below this `1 - R^2` a column is treated as an exact linear combination.
const SINGULAR_TOL: f64 = 1e-10;

/// Variance inflation factor of every column: `1 / (1 - R^2_j)` with `R^2_j`
/// from an OLS regression of column `j` on the others plus an intercept.
/// Perfectly collinear columns get `f64::INFINITY`.
pub fn compute_vif(x: &DMatrix<f64>) -> Result<Vec<f64>> {
    let (n, p) = x.shape();
    if p < 2 || n <= p {
        return Err(Error::Validation(format!("VIF needs n > p >= 2, got n = {n}, p = {p}")));
    }
    for j in 0..p {
        let col = x.column(j);
        let mean = col.mean();
        if col.iter().all(|v| (v - mean).abs() <= 1e-12 * mean.abs().max(1.0)) {
            return Err(Error::Validation(format!("column {j} is constant")));
        }
    }

    (0..p)
        .map(|j| {
            let target = DVector::from_iterator(n, x.column(j).iter().copied());
            let mut design = DMatrix::from_element(n, p, 1.0);
            let mut c = 1;
            for k in (0..p).filter(|&k| k != j) {
                design.set_column(c, &x.column(k));
                c += 1;
            }
            let svd = design.clone().svd(true, true);
            let beta = svd
                .solve(&target, 1e-12)
                .map_err(|e| Error::Numerical(format!("VIF least squares: {e}")))?;
            let resid = &target - &design * beta;
            let mean = target.mean();
            let sst: f64 = target.iter().map(|v| (v - mean).powi(2)).sum();
            let unexplained = resid.norm_squared() / sst;
            Ok(if unexplained < SINGULAR_TOL {
                f64::INFINITY
            } else {
                1.0 / unexplained
            })
        })
        .collect()
}
