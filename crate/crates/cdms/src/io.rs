//! Text formats for matrices, label sequences, and solver configuration.
//!
//! Matrices are headerless UTF-8 CSV with `,` separators and `\n` line ends.
//! Values are written with 17 significant digits so every f64 round-trips
//! bit-exactly. Labels are one base-10 integer per line. Configuration is
//! flat `key = value` lines with `#` comments.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::CdmsError;
use crate::Result;

/// Column orientation of a matrix file on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// Each file row is one frame; the matrix is transposed on load.
    RowsAreFrames,
    /// Each file row is one feature dimension; frames are columns.
    RowsAreFeatures,
}

/// Dense nonnegative d x n matrix of per-frame features, one column per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: DMatrix<f64>,
}

impl FeatureMatrix {
    /// Validates finiteness and nonnegativity.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(CdmsError::InvalidArgument(
                "feature matrix must be non-empty".into(),
            ));
        }
        for j in 0..data.ncols() {
            for i in 0..data.nrows() {
                let v = data[(i, j)];
                if !v.is_finite() {
                    return Err(CdmsError::InvalidArgument(format!(
                        "non-finite entry at row {}, column {}",
                        i + 1,
                        j + 1
                    )));
                }
                if v < 0.0 {
                    return Err(CdmsError::InvalidArgument(format!(
                        "negative entry {} at row {}, column {}",
                        v,
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(Self { data })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Feature dimension (rows).
    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    /// Frame count (columns).
    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.data
    }
}

/// Per-frame labels remapped to the contiguous range 0..k.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSequence {
    labels: Vec<usize>,
    k: usize,
}

impl LabelSequence {
    /// Remaps arbitrary integers to 0..k-1 in first-occurrence order.
    pub fn from_raw(raw: &[i64]) -> Result<Self> {
        if raw.is_empty() {
            return Err(CdmsError::InvalidArgument(
                "label sequence must be non-empty".into(),
            ));
        }
        let mut seen: Vec<i64> = Vec::new();
        let mut labels = Vec::with_capacity(raw.len());
        for &v in raw {
            let idx = match seen.iter().position(|&s| s == v) {
                Some(i) => i,
                None => {
                    seen.push(v);
                    seen.len() - 1
                }
            };
            labels.push(idx);
        }
        let k = seen.len();
        Ok(Self { labels, k })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of distinct classes.
    pub fn k(&self) -> usize {
        self.k
    }
}

/// Solver hyperparameters with defaults drawn from the tuned ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub layer_dims: Vec<usize>,
    pub tau: usize,
    pub rho: f64,
    pub eps: f64,
    pub mu0: f64,
    pub mu_max: f64,
    pub max_iters: usize,
    pub pretrain_iters: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 10.0,
            gamma: 10.0,
            layer_dims: vec![128, 64, 16],
            tau: 15,
            rho: 1.5,
            eps: 1e-4,
            mu0: 1e-4,
            mu_max: 1e6,
            max_iters: 300,
            pretrain_iters: 200,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(CdmsError::Config(m));
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.gamma >= 0.0) {
            return err("alpha, beta, gamma must be nonnegative".into());
        }
        if self.layer_dims.is_empty() {
            return err("layer_dims must be non-empty".into());
        }
        if self.layer_dims.windows(2).any(|w| w[1] >= w[0]) {
            return err(format!(
                "layer_dims must be strictly decreasing, got {:?}",
                self.layer_dims
            ));
        }
        if *self.layer_dims.last().unwrap() < 2 {
            return err("last layer dimension must be >= 2".into());
        }
        if self.tau < 1 {
            return err("tau must be >= 1".into());
        }
        if !(self.rho > 1.0) {
            return err("rho must be > 1".into());
        }
        if !(self.eps > 0.0) {
            return err("eps must be positive".into());
        }
        if !(self.mu0 > 0.0 && self.mu_max > 0.0) {
            return err("mu0 and mu_max must be positive".into());
        }
        if self.mu0 > self.mu_max {
            return err("mu0 must not exceed mu_max".into());
        }
        if self.max_iters < 1 || self.pretrain_iters < 1 {
            return err("iteration caps must be positive".into());
        }
        Ok(())
    }

    /// Applies one `key = value` assignment.
    ///
    /// ```
    /// use cdms::io::SolverConfig;
    /// let mut config = SolverConfig::default();
    /// config.set("layer_dims", "32,16,8").unwrap();
    /// assert_eq!(config.layer_dims, vec![32, 16, 8]);
    /// assert!(config.set("typo", "1").is_err());
    /// ```
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |k: &str, v: &str| CdmsError::Config(format!("unparsable value `{v}` for key `{k}`"));
        match key {
            "alpha" => self.alpha = value.parse().map_err(|_| bad(key, value))?,
            "beta" => self.beta = value.parse().map_err(|_| bad(key, value))?,
            "gamma" => self.gamma = value.parse().map_err(|_| bad(key, value))?,
            "layer_dims" => {
                self.layer_dims = value
                    .split(',')
                    .map(|s| s.trim().parse::<usize>().map_err(|_| bad(key, value)))
                    .collect::<Result<Vec<_>>>()?;
            }
            "tau" => self.tau = value.parse().map_err(|_| bad(key, value))?,
            "rho" => self.rho = value.parse().map_err(|_| bad(key, value))?,
            "eps" => self.eps = value.parse().map_err(|_| bad(key, value))?,
            "mu0" => self.mu0 = value.parse().map_err(|_| bad(key, value))?,
            "mu_max" => self.mu_max = value.parse().map_err(|_| bad(key, value))?,
            "max_iters" => self.max_iters = value.parse().map_err(|_| bad(key, value))?,
            "pretrain_iters" => self.pretrain_iters = value.parse().map_err(|_| bad(key, value))?,
            "seed" => self.seed = value.parse().map_err(|_| bad(key, value))?,
            other => return Err(CdmsError::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CdmsError::io(path, e))
}

fn write_string(path: &Path, s: &str) -> Result<()> {
    std::fs::write(path, s).map_err(|e| CdmsError::io(path, e))
}

/// Parses a headerless CSV grid of finite numbers.
fn parse_grid(path: &Path, text: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (c, cell) in line.split(',').enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| CdmsError::Load {
                path: path.display().to_string(),
                row: r + 1,
                col: c + 1,
                reason: format!("non-numeric cell `{}`", cell.trim()),
            })?;
            if !v.is_finite() {
                return Err(CdmsError::Load {
                    path: path.display().to_string(),
                    row: r + 1,
                    col: c + 1,
                    reason: "non-finite value".into(),
                });
            }
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(CdmsError::Load {
                    path: path.display().to_string(),
                    row: r + 1,
                    col: row.len(),
                    reason: format!("ragged row: expected {} cells, got {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CdmsError::Load {
            path: path.display().to_string(),
            row: 1,
            col: 1,
            reason: "empty matrix file".into(),
        });
    }
    Ok(rows)
}

/// Loads a dense matrix from headerless CSV; no sign or finiteness policy
/// beyond rejecting NaN/Inf.
pub fn load_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = read_to_string(path)?;
    let rows = parse_grid(path, &text)?;
    let nr = rows.len();
    let nc = rows[0].len();
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

/// Loads a nonnegative feature matrix, transposing when rows are frames.
pub fn load_feature_matrix(path: &Path, orientation: Orientation) -> Result<FeatureMatrix> {
    let m = load_matrix(path)?;
    let m = match orientation {
        Orientation::RowsAreFeatures => m,
        Orientation::RowsAreFrames => m.transpose(),
    };
    // Re-locate negative entries in file coordinates for the error message.
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if m[(i, j)] < 0.0 {
                let (r, c) = match orientation {
                    Orientation::RowsAreFeatures => (i, j),
                    Orientation::RowsAreFrames => (j, i),
                };
                return Err(CdmsError::Load {
                    path: path.display().to_string(),
                    row: r + 1,
                    col: c + 1,
                    reason: format!("negative entry {}", m[(i, j)]),
                });
            }
        }
    }
    FeatureMatrix::new(m)
}

/// Writes a matrix as headerless CSV with 17 significant digits per entry.
pub fn save_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut out = String::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{:.16e}", m[(i, j)]);
        }
        out.push('\n');
    }
    write_string(path, &out)
}

/// Loads one integer per line, remapping to contiguous 0..k-1.
pub fn load_labels(path: &Path) -> Result<LabelSequence> {
    let text = read_to_string(path)?;
    let mut raw = Vec::new();
    for (r, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v: i64 = t.parse().map_err(|_| CdmsError::Load {
            path: path.display().to_string(),
            row: r + 1,
            col: 1,
            reason: format!("non-integer line `{t}`"),
        })?;
        raw.push(v);
    }
    if raw.is_empty() {
        return Err(CdmsError::Load {
            path: path.display().to_string(),
            row: 1,
            col: 1,
            reason: "empty label file".into(),
        });
    }
    LabelSequence::from_raw(&raw)
}

/// Writes one label per line.
pub fn save_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = String::new();
    for l in labels {
        let _ = writeln!(out, "{l}");
    }
    write_string(path, &out)
}

/// Parses flat `key = value` text with `#` comments into existing state via
/// the `set` callback.
pub fn parse_key_values(path: &Path, text: &str, mut set: impl FnMut(&str, &str) -> Result<()>) -> Result<()> {
    for (r, line) in text.lines().enumerate() {
        let line = match line.find('#') {
            Some(pos) => &line[..pos],
            None => line,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| CdmsError::Load {
            path: path.display().to_string(),
            row: r + 1,
            col: 1,
            reason: format!("expected `key = value`, got `{line}`"),
        })?;
        set(key.trim(), value.trim())?;
    }
    Ok(())
}

/// Loads a solver configuration; unspecified keys keep their defaults.
pub fn load_config(path: &Path) -> Result<SolverConfig> {
    let text = read_to_string(path)?;
    let mut cfg = SolverConfig::default();
    parse_key_values(path, &text, |k, v| cfg.set(k, v))?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use std::io::Write;
    use tempfile::NamedTempFile;

    fn tmp(content: &str) -> NamedTempFile {
        let mut f = NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_rows_are_features() {
        let f = tmp("1,2\n3,4\n");
        let m = load_feature_matrix(f.path(), Orientation::RowsAreFeatures).unwrap();
        assert_eq!(m.data(), &dmatrix![1.0, 2.0; 3.0, 4.0]);
    }

    #[test]
    fn load_rows_are_frames_transposes() {
        let f = tmp("1,2\n3,4\n");
        let m = load_feature_matrix(f.path(), Orientation::RowsAreFrames).unwrap();
        assert_eq!(m.data(), &dmatrix![1.0, 3.0; 2.0, 4.0]);
    }

    #[test]
    fn load_reports_bad_cell_position() {
        let f = tmp("1,x\n3,4\n");
        let err = load_feature_matrix(f.path(), Orientation::RowsAreFeatures).unwrap_err();
        match err {
            CdmsError::Load { row, col, .. } => {
                assert_eq!((row, col), (1, 2));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn load_rejects_ragged_and_negative() {
        let f = tmp("1,2\n3\n");
        assert!(load_feature_matrix(f.path(), Orientation::RowsAreFeatures).is_err());
        let f = tmp("1,-2\n3,4\n");
        assert!(load_feature_matrix(f.path(), Orientation::RowsAreFeatures).is_err());
        let f = tmp("1,NaN\n3,4\n");
        assert!(load_feature_matrix(f.path(), Orientation::RowsAreFeatures).is_err());
    }

    #[test]
    fn labels_remap_first_occurrence() {
        let f = tmp("5\n5\n9\n");
        let l = load_labels(f.path()).unwrap();
        assert_eq!(l.labels(), &[0, 0, 1]);
        assert_eq!(l.k(), 2);
    }

    #[test]
    fn labels_identity_when_contiguous() {
        let f = tmp("0\n1\n0\n");
        let l = load_labels(f.path()).unwrap();
        assert_eq!(l.labels(), &[0, 1, 0]);
        assert_eq!(l.k(), 2);
    }

    #[test]
    fn labels_error_cases() {
        let f = tmp("a\n");
        assert!(load_labels(f.path()).is_err());
        let f = tmp("");
        assert!(load_labels(f.path()).is_err());
    }

    #[test]
    fn labels_remap_is_idempotent() {
        let l = LabelSequence::from_raw(&[7, 3, 7, 1]).unwrap();
        let raw: Vec<i64> = l.labels().iter().map(|&x| x as i64).collect();
        let l2 = LabelSequence::from_raw(&raw).unwrap();
        assert_eq!(l, l2);
    }

    #[test]
    fn config_defaults() {
        let f = tmp("");
        let cfg = load_config(f.path()).unwrap();
        assert_eq!(cfg, SolverConfig::default());
        assert_eq!(cfg.layer_dims, vec![128, 64, 16]);
        assert_eq!(cfg.tau, 15);
        assert_eq!(cfg.rho, 1.5);
        assert_eq!(cfg.eps, 1e-4);
        assert_eq!(cfg.mu0, 1e-4);
        assert_eq!(cfg.mu_max, 1e6);
    }

    #[test]
    fn config_single_override_and_comment() {
        let f = tmp("# comment\nalpha = 0.001\n");
        let cfg = load_config(f.path()).unwrap();
        assert_eq!(cfg.alpha, 0.001);
        assert_eq!(cfg.beta, 10.0);
    }

    #[test]
    fn config_rejects_bad_dims_and_unknown_key() {
        let f = tmp("layer_dims = 16,64\n");
        assert!(load_config(f.path()).is_err());
        let f = tmp("bogus = 1\n");
        assert!(load_config(f.path()).is_err());
        let f = tmp("layer_dims = 4,1\n");
        assert!(load_config(f.path()).is_err());
    }

    #[test]
    fn matrix_roundtrip_bit_exact() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let m = DMatrix::from_fn(5, 7, |_, _| rng.gen::<f64>() * 1e3);
        let f = NamedTempFile::new().unwrap();
        save_matrix(f.path(), &m).unwrap();
        let back = load_matrix(f.path()).unwrap();
        assert_eq!(m, back);
    }
}
