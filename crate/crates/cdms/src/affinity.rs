//! Affinity construction from multi-level target coefficients and
//! normalized spectral clustering of the result.
//!
//! The affinity entry for a target frame pair is the cosine similarity of
//! their coefficient columns averaged over layers. Clustering follows the
//! normalized-Laplacian route: embed frames in the bottom-k eigenvectors of
//! I - D^{-1/2} A D^{-1/2}, row-normalize, then seeded k-means.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::CdmsError;
use crate::io::LabelSequence;
use crate::Result;

/// Symmetric nonnegative target-frame affinity with unit diagonal.
#[derive(Debug, Clone)]
pub struct AffinityMatrix {
    a: DMatrix<f64>,
}

impl AffinityMatrix {
    /// Validates symmetry and the [0, 1] entry range (to roundoff).
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(CdmsError::DimensionMismatch(format!(
                "affinity must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        for j in 0..a.ncols() {
            for i in 0..=j {
                let v = a[(i, j)];
                if (v - a[(j, i)]).abs() > 1e-12 {
                    return Err(CdmsError::InvalidArgument(format!(
                        "affinity not symmetric at ({i}, {j})"
                    )));
                }
                if !(-1e-12..=1.0 + 1e-12).contains(&v) {
                    return Err(CdmsError::InvalidArgument(format!(
                        "affinity entry {v} at ({i}, {j}) outside [0, 1]"
                    )));
                }
            }
        }
        Ok(Self { a })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }
}

/// Averaged cosine similarity between target coefficient columns across
/// layers. `n_s` marks where the target block starts; the diagonal is
/// forced to 1 and zero-norm columns contribute 0 to off-diagonal pairs.
pub fn fuse_affinity(zs: &[DMatrix<f64>], n_s: usize) -> Result<AffinityMatrix> {
    if zs.is_empty() {
        return Err(CdmsError::InvalidArgument("no coefficient layers".into()));
    }
    let ncols = zs[0].ncols();
    for z in zs {
        if z.ncols() != ncols || z.nrows() != zs[0].nrows() {
            return Err(CdmsError::DimensionMismatch(
                "coefficient layers have mismatched shapes".into(),
            ));
        }
    }
    if n_s >= ncols {
        return Err(CdmsError::InvalidArgument(format!(
            "n_s {n_s} leaves no target columns out of {ncols}"
        )));
    }
    let n_t = ncols - n_s;
    let layers = zs.len() as f64;
    let mut a = DMatrix::zeros(n_t, n_t);
    for z in zs {
        let zt = z.columns(n_s, n_t);
        let norms: Vec<f64> = (0..n_t).map(|j| zt.column(j).norm()).collect();
        for i in 0..n_t {
            for j in (i + 1)..n_t {
                if norms[i] < 1e-12 || norms[j] < 1e-12 {
                    continue;
                }
                let c = zt.column(i).dot(&zt.column(j)) / (norms[i] * norms[j]);
                // clamp roundoff above 1 so the invariant holds exactly
                let c = c.min(1.0).max(0.0);
                a[(i, j)] += c / layers;
                a[(j, i)] = a[(i, j)];
            }
        }
    }
    for i in 0..n_t {
        a[(i, i)] = 1.0;
    }
    AffinityMatrix::new(a)
}

/// Seeded k-means with k-means++ initialization over matrix rows.
fn kmeans_rows(points: &DMatrix<f64>, k: usize, seed: u64, restarts: usize, max_iters: usize) -> Vec<usize> {
    let n = points.nrows();
    let dim = points.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best_labels = vec![0usize; n];
    let mut best_inertia = f64::INFINITY;

    for _ in 0..restarts {
        // k-means++ seeding
        let mut centers: Vec<DVector<f64>> = Vec::with_capacity(k);
        let first = rng.gen_range(0..n);
        centers.push(points.row(first).transpose());
        let mut dist2: Vec<f64> = (0..n)
            .map(|i| (points.row(i).transpose() - &centers[0]).norm_squared())
            .collect();
        while centers.len() < k {
            let total: f64 = dist2.iter().sum();
            let idx = if total <= 0.0 {
                rng.gen_range(0..n)
            } else {
                let mut target = rng.gen::<f64>() * total;
                let mut chosen = n - 1;
                for (i, &d) in dist2.iter().enumerate() {
                    target -= d;
                    if target <= 0.0 {
                        chosen = i;
                        break;
                    }
                }
                chosen
            };
            centers.push(points.row(idx).transpose());
            for i in 0..n {
                let d = (points.row(i).transpose() - centers.last().unwrap()).norm_squared();
                if d < dist2[i] {
                    dist2[i] = d;
                }
            }
        }

        let mut labels = vec![0usize; n];
        for _ in 0..max_iters {
            let mut changed = false;
            for i in 0..n {
                let mut best = 0usize;
                let mut best_d = f64::INFINITY;
                for (c, center) in centers.iter().enumerate() {
                    let d = (points.row(i).transpose() - center).norm_squared();
                    if d < best_d {
                        best_d = d;
                        best = c;
                    }
                }
                if labels[i] != best {
                    labels[i] = best;
                    changed = true;
                }
            }
            let mut sums = vec![DVector::zeros(dim); k];
            let mut counts = vec![0usize; k];
            for i in 0..n {
                sums[labels[i]] += points.row(i).transpose();
                counts[labels[i]] += 1;
            }
            for c in 0..k {
                if counts[c] > 0 {
                    centers[c] = &sums[c] / counts[c] as f64;
                }
            }
            if !changed {
                break;
            }
        }
        let inertia: f64 = (0..n)
            .map(|i| (points.row(i).transpose() - &centers[labels[i]]).norm_squared())
            .sum();
        if inertia < best_inertia {
            best_inertia = inertia;
            best_labels = labels;
        }
    }
    best_labels
}

/// Normalized spectral clustering of an affinity matrix into k groups.
pub fn normalized_cuts(affinity: &AffinityMatrix, k: usize, seed: u64) -> Result<LabelSequence> {
    let n = affinity.n();
    if k < 2 || k > n {
        return Err(CdmsError::InvalidArgument(format!(
            "cluster count {k} out of range 2..={n}"
        )));
    }
    let a = affinity.matrix();
    let inv_sqrt_deg: Vec<f64> = (0..n)
        .map(|i| 1.0 / a.row(i).sum().max(1e-12).sqrt())
        .collect();
    let mut l_sym = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            let norm = inv_sqrt_deg[i] * a[(i, j)] * inv_sqrt_deg[j];
            l_sym[(i, j)] = if i == j { 1.0 - norm } else { -norm };
        }
    }
    // symmetrize roundoff before the eigensolve
    let l_sym = (&l_sym + l_sym.transpose()) * 0.5;
    let eig = l_sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());

    let mut embedding = DMatrix::zeros(n, k);
    for (col, &idx) in order.iter().take(k).enumerate() {
        embedding.set_column(col, &eig.eigenvectors.column(idx).clone_owned());
    }
    for mut row in embedding.row_iter_mut() {
        let norm = row.norm();
        if norm > 1e-12 {
            row /= norm;
        }
    }

    let labels = kmeans_rows(&embedding, k, seed, 10, 100);
    let raw: Vec<i64> = labels.iter().map(|&l| l as i64).collect();
    LabelSequence::from_raw(&raw)
}
