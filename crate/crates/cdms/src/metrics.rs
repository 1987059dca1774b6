//! Clustering evaluation: normalized mutual information and best-map
//! accuracy via optimal assignment on the confusion matrix.

use crate::error::CdmsError;
use crate::io::LabelSequence;
use crate::Result;

/// Evaluation summary for one predicted labeling.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub nmi: f64,
    pub acc: f64,
    /// k_true x k_pred joint count matrix.
    pub confusion: Vec<Vec<usize>>,
    /// Predicted-cluster to true-cluster assignment used by ACC.
    pub mapping: Vec<Option<usize>>,
}

impl std::fmt::Display for EvalReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "nmi={} acc={}", self.nmi, self.acc)
    }
}

fn confusion(truth: &LabelSequence, pred: &LabelSequence) -> Vec<Vec<usize>> {
    let mut counts = vec![vec![0usize; pred.k()]; truth.k()];
    for (&t, &p) in truth.labels().iter().zip(pred.labels()) {
        counts[t][p] += 1;
    }
    counts
}

/// Minimum-cost assignment on a square cost matrix (Hungarian algorithm
/// with potentials). Returns the column assigned to each row.
fn hungarian_min(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Normalized mutual information I(U;V)/sqrt(H(U) H(V)) with natural-log
/// entropies from empirical joint counts. Both-degenerate partitions score
/// 1; a single degenerate side scores 0.
///
/// ```
/// use cdms::io::LabelSequence;
/// let a = LabelSequence::from_raw(&[0, 0, 1, 1]).unwrap();
/// let b = LabelSequence::from_raw(&[1, 1, 0, 0]).unwrap();
/// assert!((cdms::metrics::nmi(&a, &b).unwrap() - 1.0).abs() < 1e-12);
/// ```
pub fn nmi(truth: &LabelSequence, pred: &LabelSequence) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(CdmsError::DimensionMismatch(format!(
            "label lengths differ: {} vs {}",
            truth.len(),
            pred.len()
        )));
    }
    let n = truth.len() as f64;
    let counts = confusion(truth, pred);
    let row_sums: Vec<f64> = counts.iter().map(|r| r.iter().sum::<usize>() as f64).collect();
    let col_sums: Vec<f64> = (0..pred.k())
        .map(|j| counts.iter().map(|r| r[j]).sum::<usize>() as f64)
        .collect();
    let entropy = |sums: &[f64]| -> f64 {
        -sums
            .iter()
            .filter(|&&s| s > 0.0)
            .map(|&s| (s / n) * (s / n).ln())
            .sum::<f64>()
    };
    let hu = entropy(&row_sums);
    let hv = entropy(&col_sums);
    if hu == 0.0 && hv == 0.0 {
        return Ok(1.0);
    }
    if hu == 0.0 || hv == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (i, row) in counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let pij = c as f64 / n;
                mi += pij * (pij * n * n / (row_sums[i] * col_sums[j])).ln();
            }
        }
    }
    Ok(mi / (hu * hv).sqrt())
}

/// Best-map clustering accuracy: optimal predicted-to-true assignment on
/// the confusion matrix, matched count over n.
pub fn acc(truth: &LabelSequence, pred: &LabelSequence) -> Result<f64> {
    Ok(evaluate(truth, pred)?.acc)
}

/// Computes NMI, ACC, the confusion matrix, and the best map together.
pub fn evaluate(truth: &LabelSequence, pred: &LabelSequence) -> Result<EvalReport> {
    if truth.len() != pred.len() {
        return Err(CdmsError::DimensionMismatch(format!(
            "label lengths differ: {} vs {}",
            truth.len(),
            pred.len()
        )));
    }
    let counts = confusion(truth, pred);
    let k_true = truth.k();
    let k_pred = pred.k();
    let k = k_true.max(k_pred);
    // Negated counts, zero-padded to square, minimized.
    let cost: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    if i < k_true && j < k_pred {
                        -(counts[i][j] as f64)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let row_to_col = hungarian_min(&cost);
    let mut mapping = vec![None; k_pred];
    let mut matched = 0usize;
    for (t, &p) in row_to_col.iter().enumerate() {
        if t < k_true && p < k_pred {
            mapping[p] = Some(t);
            matched += counts[t][p];
        }
    }
    let acc = matched as f64 / truth.len() as f64;
    let nmi = nmi(truth, pred)?;
    Ok(EvalReport {
        nmi,
        acc,
        confusion: counts,
        mapping,
    })
}
