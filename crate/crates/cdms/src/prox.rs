//! Closed-form proximal and projection operators for the ADMM subproblems.

use nalgebra::{DMatrix, DVector};

use crate::error::CdmsError;
use crate::Result;

/// Result of a column-wise shrinkage.
#[derive(Debug, Clone)]
pub struct ProxResult {
    pub value: DMatrix<f64>,
    /// Columns set exactly to zero.
    pub shrunk_columns: usize,
}

/// Proximal operator of t * ||.||_{2,1}: each column g_j is scaled by
/// max(0, 1 - t / ||g_j||), columns with norm <= t vanish.
///
/// ```
/// let g = nalgebra::dmatrix![0.0; 2.0];
/// let r = cdms::prox::prox_l21(&g, 0.5).unwrap();
/// assert_eq!(r.value[(1, 0)], 1.5);
/// ```
pub fn prox_l21(g: &DMatrix<f64>, t: f64) -> Result<ProxResult> {
    if !(t > 0.0) {
        return Err(CdmsError::InvalidArgument(format!(
            "shrinkage threshold must be positive, got {t}"
        )));
    }
    let mut value = g.clone();
    let mut shrunk = 0;
    for mut col in value.column_iter_mut() {
        let norm = col.norm();
        if norm <= t {
            col.fill(0.0);
            shrunk += 1;
        } else {
            col *= 1.0 - t / norm;
        }
    }
    Ok(ProxResult {
        value,
        shrunk_columns: shrunk,
    })
}

/// Euclidean projection of a vector onto the probability simplex
/// {v : v >= 0, sum v = 1} by sort-and-threshold.
pub fn project_simplex(v: &DVector<f64>) -> DVector<f64> {
    let mut sorted: Vec<f64> = v.iter().copied().collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (i as f64 + 1.0);
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.map(|x| (x - theta).max(0.0))
}

/// Projects every column of Z onto the probability simplex.
///
/// ```
/// let z = nalgebra::dmatrix![2.0; 0.0];
/// let p = cdms::prox::project_columns_simplex(&z);
/// assert_eq!(p, nalgebra::dmatrix![1.0; 0.0]);
/// ```
pub fn project_columns_simplex(z: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = z.clone();
    for j in 0..z.ncols() {
        let col: DVector<f64> = z.column(j).clone_owned();
        out.set_column(j, &project_simplex(&col));
    }
    out
}
