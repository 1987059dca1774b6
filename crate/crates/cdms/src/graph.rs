//! Sequential-neighbor temporal graph: weight matrix S, degree matrix C,
//! Laplacian L = C - S, and the source principal block L_s.
//!
//! Two source frames are connected when their index distance is at most tau
//! and their action labels agree; two target frames when their index distance
//! is at most tau. Source and target frames are never connected.

use nalgebra::DMatrix;

use crate::error::CdmsError;
use crate::io::LabelSequence;
use crate::Result;

/// Immutable temporal graph over n = n_s + n_t frames, source frames first.
#[derive(Debug, Clone)]
pub struct TemporalGraph {
    s: DMatrix<f64>,
    laplacian: DMatrix<f64>,
    laplacian_source: DMatrix<f64>,
    n_s: usize,
    n_t: usize,
}

impl TemporalGraph {
    pub fn weight(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    /// Leading n_s x n_s principal submatrix of the Laplacian.
    pub fn laplacian_source(&self) -> &DMatrix<f64> {
        &self.laplacian_source
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn n(&self) -> usize {
        self.n_s + self.n_t
    }
}

/// Builds the 0/1 weight matrix and its Laplacian. Frame order is source
/// frames 0..n_s-1 followed by target frames.
///
/// ```
/// use cdms::io::LabelSequence;
/// let labels = LabelSequence::from_raw(&[0, 0]).unwrap();
/// let g = cdms::graph::build_weight_matrix(2, 2, &labels, 1).unwrap();
/// assert_eq!(g.weight()[(0, 1)], 1.0); // adjacent source frames, same label
/// assert_eq!(g.weight()[(1, 2)], 0.0); // never across domains
/// assert_eq!(g.weight()[(2, 3)], 1.0); // adjacent target frames
/// ```
pub fn build_weight_matrix(
    n_s: usize,
    n_t: usize,
    source_labels: &LabelSequence,
    tau: usize,
) -> Result<TemporalGraph> {
    if n_s == 0 || n_t == 0 {
        return Err(CdmsError::InvalidArgument(
            "transfer problem requires both source and target frames".into(),
        ));
    }
    if source_labels.len() != n_s {
        return Err(CdmsError::DimensionMismatch(format!(
            "source labels length {} != n_s {}",
            source_labels.len(),
            n_s
        )));
    }
    if tau < 1 {
        return Err(CdmsError::InvalidArgument("tau must be >= 1".into()));
    }

    let n = n_s + n_t;
    let labels = source_labels.labels();
    let mut s = DMatrix::zeros(n, n);
    for i in 0..n {
        let hi = (i + tau).min(n - 1);
        for j in (i + 1)..=hi {
            let connected = if i < n_s && j < n_s {
                labels[i] == labels[j]
            } else {
                i >= n_s && j >= n_s
            };
            if connected {
                s[(i, j)] = 1.0;
                s[(j, i)] = 1.0;
            }
        }
    }

    let mut laplacian = -&s;
    for i in 0..n {
        let degree: f64 = s.row(i).sum();
        laplacian[(i, i)] = degree;
    }
    let laplacian_source = laplacian.view((0, 0), (n_s, n_s)).into();

    Ok(TemporalGraph {
        s,
        laplacian,
        laplacian_source,
        n_s,
        n_t,
    })
}

/// trace(M * Lap * M^T), the graph smoothness of the columns of M.
pub fn laplacian_quadratic(m: &DMatrix<f64>, lap: &DMatrix<f64>) -> Result<f64> {
    if m.ncols() != lap.nrows() || lap.nrows() != lap.ncols() {
        return Err(CdmsError::DimensionMismatch(format!(
            "matrix has {} columns but Laplacian is {}x{}",
            m.ncols(),
            lap.nrows(),
            lap.ncols()
        )));
    }
    let ml = m * lap;
    Ok(ml.zip_fold(m, 0.0, |acc, a, b| acc + a * b))
}
