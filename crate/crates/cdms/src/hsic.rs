//! Empirical Hilbert-Schmidt independence criterion with the inner-product
//! kernel, and the aggregated diversity kernel used by the coefficient
//! subproblem.
//!
//! `hsic_linear` carries the (n-1)^-2 scale of the empirical estimator.
//! `diversity_kernel` deliberately omits that constant; the trade-off weight
//! applied to the diversity term absorbs it.

use nalgebra::DMatrix;

use crate::error::CdmsError;
use crate::Result;

/// Centering matrix M with m_ij = delta_ij - 1/n.
///
/// ```
/// let m = cdms::hsic::centering_matrix(2).unwrap();
/// assert_eq!(m[(0, 0)], 0.5);
/// assert_eq!(m[(0, 1)], -0.5);
/// ```
pub fn centering_matrix(n: usize) -> Result<DMatrix<f64>> {
    if n < 2 {
        return Err(CdmsError::InvalidArgument(
            "centering matrix requires n >= 2".into(),
        ));
    }
    let inv = 1.0 / n as f64;
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0 - inv
        } else {
            -inv
        }
    }))
}

/// Empirical HSIC of two samples under the inner-product kernel:
/// (n-1)^-2 * tr((Za^T Za) M (Zb^T Zb) M).
pub fn hsic_linear(za: &DMatrix<f64>, zb: &DMatrix<f64>) -> Result<f64> {
    let n = za.ncols();
    if zb.ncols() != n {
        return Err(CdmsError::DimensionMismatch(format!(
            "column counts differ: {} vs {}",
            n,
            zb.ncols()
        )));
    }
    let m = centering_matrix(n)?;
    let ka = za.transpose() * za;
    let kb = zb.transpose() * zb;
    let prod = ka * &m * kb * &m;
    let scale = 1.0 / ((n as f64 - 1.0) * (n as f64 - 1.0));
    Ok(scale * prod.trace())
}

/// Aggregated kernel K = sum over m != layer of M (Z^(m)^T Z^(m)) M, the
/// quadratic form driving layer `layer`'s coefficients away from the others.
/// Unscaled; see module docs.
pub fn diversity_kernel(layer: usize, zs: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    if zs.is_empty() {
        return Err(CdmsError::InvalidArgument("no coefficient layers".into()));
    }
    if layer >= zs.len() {
        return Err(CdmsError::InvalidArgument(format!(
            "layer {} out of range for {} layers",
            layer,
            zs.len()
        )));
    }
    let n = zs[0].ncols();
    for z in zs {
        if z.ncols() != n {
            return Err(CdmsError::DimensionMismatch(
                "coefficient layers have mismatched column counts".into(),
            ));
        }
    }
    let mut k = DMatrix::zeros(n, n);
    if zs.len() == 1 {
        return Ok(k);
    }
    let m = centering_matrix(n)?;
    for (idx, z) in zs.iter().enumerate() {
        if idx == layer {
            continue;
        }
        let gram = z.transpose() * z;
        k += &m * gram * &m;
    }
    Ok(k)
}
