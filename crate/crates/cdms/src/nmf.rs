//! Layer-wise NMF pretraining: multiplicative updates for ||X - DH||_F^2
//! chained so each layer factorizes the previous layer's representation.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::CdmsError;
use crate::Result;

/// Floor applied to multiplicative-update denominators.
pub const DENOM_FLOOR: f64 = 1e-12;

/// One rank-r factorization X ~ basis * coef.
#[derive(Debug, Clone)]
pub struct Nmf {
    pub basis: DMatrix<f64>,
    pub coef: DMatrix<f64>,
    /// ||X - DH||_F^2 after each iteration, starting with the initial value.
    pub objectives: Vec<f64>,
}

/// Per-domain stack of (basis, representation) pairs.
#[derive(Debug, Clone)]
pub struct LayerStack {
    pub bases: Vec<DMatrix<f64>>,
    pub reprs: Vec<DMatrix<f64>>,
    pub dims: Vec<usize>,
}

impl LayerStack {
    pub fn depth(&self) -> usize {
        self.bases.len()
    }
}

fn uniform_init(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen::<f64>() + 0.1)
}

/// Multiplicative update step base <- base .* numer ./ max(denom, floor).
pub(crate) fn multiplicative_update(
    base: &mut DMatrix<f64>,
    numer: &DMatrix<f64>,
    denom: &DMatrix<f64>,
) {
    base.zip_zip_apply(numer, denom, |b, n, d| {
        *b *= n / d.max(DENOM_FLOOR);
    });
}

/// Lee-Seung multiplicative NMF for the Frobenius objective.
pub fn nmf_factorize(x: &DMatrix<f64>, r: usize, iters: usize, seed: u64) -> Result<Nmf> {
    let (d, n) = (x.nrows(), x.ncols());
    if r < 1 || r > d.min(n) {
        return Err(CdmsError::InvalidArgument(format!(
            "rank {r} out of range for {d}x{n} matrix"
        )));
    }
    if x.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(CdmsError::InvalidArgument(
            "NMF input must be finite and nonnegative".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut basis = uniform_init(d, r, &mut rng);
    let mut coef = uniform_init(r, n, &mut rng);

    let objective = |b: &DMatrix<f64>, h: &DMatrix<f64>| (x - b * h).norm_squared();
    let mut objectives = vec![objective(&basis, &coef)];

    for _ in 0..iters {
        // H <- H .* (D^T X) ./ (D^T D H)
        let numer = basis.transpose() * x;
        let denom = basis.transpose() * &basis * &coef;
        multiplicative_update(&mut coef, &numer, &denom);
        // D <- D .* (X H^T) ./ (D H H^T)
        let numer = x * coef.transpose();
        let denom = &basis * (&coef * coef.transpose());
        multiplicative_update(&mut basis, &numer, &denom);
        objectives.push(objective(&basis, &coef));
    }

    Ok(Nmf {
        basis,
        coef,
        objectives,
    })
}

/// Sequentially factorizes X into dims[0], then the representation into
/// dims[1], and so on, producing the initial deep stack.
pub fn pretrain_stack(x: &DMatrix<f64>, dims: &[usize], iters: usize, seed: u64) -> Result<LayerStack> {
    if dims.is_empty() {
        return Err(CdmsError::InvalidArgument("empty layer dims".into()));
    }
    if dims[0] > x.nrows().min(x.ncols()) {
        return Err(CdmsError::InvalidArgument(format!(
            "first layer dim {} exceeds min(d, n) = {}",
            dims[0],
            x.nrows().min(x.ncols())
        )));
    }
    let mut bases = Vec::with_capacity(dims.len());
    let mut reprs = Vec::with_capacity(dims.len());
    let mut current = x.clone();
    for (l, &r) in dims.iter().enumerate() {
        let nmf = nmf_factorize(&current, r, iters, seed.wrapping_add(l as u64))?;
        current = nmf.coef.clone();
        bases.push(nmf.basis);
        reprs.push(nmf.coef);
    }
    Ok(LayerStack {
        bases,
        reprs,
        dims: dims.to_vec(),
    })
}
