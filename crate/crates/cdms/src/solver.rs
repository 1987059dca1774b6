//! Per-layer ADMM for the multi-level transfer subspace model.
//!
//! Each iteration sweeps the layers Gauss-Seidel style, refreshing the
//! source/target bases and representations by multiplicative rules, the
//! auxiliary matrix J by an SPD solve, the coefficients Z by an SPD solve
//! followed by column-wise simplex projection, and the column-sparse error
//! E by l2,1 shrinkage, then performs the dual ascent and penalty step.

use nalgebra::DMatrix;

use crate::error::CdmsError;
use crate::graph::{self, TemporalGraph};
use crate::hsic;
use crate::io::{FeatureMatrix, LabelSequence, SolverConfig};
use crate::nmf::{self, multiplicative_update, LayerStack, DENOM_FLOOR};
use crate::prox;
use crate::Result;

/// Which domain a basis update applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Source,
    Target,
}

/// A fully validated transfer problem instance.
#[derive(Debug, Clone)]
pub struct TransferProblem {
    pub x_s: FeatureMatrix,
    pub x_t: FeatureMatrix,
    pub source_labels: LabelSequence,
    pub graph: TemporalGraph,
    pub config: SolverConfig,
}

impl TransferProblem {
    pub fn new(
        x_s: FeatureMatrix,
        x_t: FeatureMatrix,
        source_labels: LabelSequence,
        config: SolverConfig,
    ) -> Result<Self> {
        config.validate()?;
        if x_s.rows() != x_t.rows() {
            return Err(CdmsError::DimensionMismatch(format!(
                "source and target feature dimensions differ: {} vs {}",
                x_s.rows(),
                x_t.rows()
            )));
        }
        if source_labels.len() != x_s.cols() {
            return Err(CdmsError::DimensionMismatch(format!(
                "source labels length {} != source frame count {}",
                source_labels.len(),
                x_s.cols()
            )));
        }
        let d = x_s.rows();
        let min_dim = d.min(x_s.cols()).min(x_t.cols());
        if config.layer_dims[0] > min_dim {
            return Err(CdmsError::Config(format!(
                "first layer dim {} exceeds min(d, n_s, n_t) = {}",
                config.layer_dims[0], min_dim
            )));
        }
        let graph = graph::build_weight_matrix(x_s.cols(), x_t.cols(), &source_labels, config.tau)?;
        Ok(Self {
            x_s,
            x_t,
            source_labels,
            graph,
            config,
        })
    }

    pub fn n_s(&self) -> usize {
        self.x_s.cols()
    }

    pub fn n_t(&self) -> usize {
        self.x_t.cols()
    }

    pub fn n(&self) -> usize {
        self.n_s() + self.n_t()
    }
}

/// All per-layer primal and dual variables plus the penalty scalar.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub stack_s: LayerStack,
    pub stack_t: LayerStack,
    /// Per-layer coefficients, n_s x (n_s + n_t), columns on the simplex.
    pub z: Vec<DMatrix<f64>>,
    /// ADMM auxiliary copies of z.
    pub j: Vec<DMatrix<f64>>,
    /// Per-layer column-sparse errors, d_l x (n_s + n_t).
    pub e: Vec<DMatrix<f64>>,
    pub lam1: Vec<DMatrix<f64>>,
    pub lam2: Vec<DMatrix<f64>>,
    pub mu: f64,
    pub iter: usize,
}

/// One row of the residual log.
#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    pub iter: usize,
    pub r1: f64,
    pub r2: f64,
    pub objective: f64,
    pub mu: f64,
}

/// Final coefficients plus the convergence trace.
#[derive(Debug, Clone)]
pub struct SolverOutput {
    pub z: Vec<DMatrix<f64>>,
    pub residual_log: Vec<IterationRecord>,
    pub converged: bool,
    pub iters_run: usize,
}

/// Product of the first `count` bases, or the d0 x d0 identity.
fn prefix_product(bases: &[DMatrix<f64>], count: usize, d0: usize) -> DMatrix<f64> {
    let mut acc = DMatrix::identity(d0, d0);
    for b in &bases[..count] {
        acc = acc * b;
    }
    acc
}

/// Product of bases after layer `l`, or the dims[l] x dims[l] identity.
fn suffix_product(bases: &[DMatrix<f64>], l: usize) -> DMatrix<f64> {
    let dl = bases[l].ncols();
    let mut acc = DMatrix::identity(dl, dl);
    for b in &bases[l + 1..] {
        acc = acc * b;
    }
    acc
}

fn pos_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.map(|v| v.max(0.0))
}

fn neg_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.map(|v| (-v).max(0.0))
}

fn l21_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.norm()).sum()
}

/// Multiplicative rule shared by the source and target basis subproblems.
pub(crate) fn basis_update_rule(
    theta: &DMatrix<f64>,
    omega: &DMatrix<f64>,
    x: &DMatrix<f64>,
    h_top: &DMatrix<f64>,
    d_own: &DMatrix<f64>,
    d_other: &DMatrix<f64>,
    alpha: f64,
) -> DMatrix<f64> {
    let numer = theta.transpose() * x * h_top.transpose() * omega.transpose() + alpha * d_other;
    let denom = theta.transpose() * theta * d_own * omega * (h_top * h_top.transpose()) * omega.transpose()
        + alpha * d_own;
    let mut out = d_own.clone();
    out.zip_zip_apply(&numer, &denom, |b, n, d| {
        *b *= n / d.max(DENOM_FLOOR);
    });
    out
}

/// Multiplicative update of the basis at layer `l` for one domain.
pub fn update_basis(state: &mut SolverState, problem: &TransferProblem, domain: Domain, l: usize) {
    let d0 = problem.x_s.rows();
    let alpha = problem.config.alpha;
    let (stack, other_basis, x) = match domain {
        Domain::Source => (&state.stack_s, state.stack_t.bases[l].clone(), problem.x_s.data()),
        Domain::Target => (&state.stack_t, state.stack_s.bases[l].clone(), problem.x_t.data()),
    };
    let theta = prefix_product(&stack.bases, l, d0);
    let omega = suffix_product(&stack.bases, l);
    let h_top = stack.reprs.last().unwrap();
    let updated = basis_update_rule(&theta, &omega, x, h_top, &stack.bases[l], &other_basis, alpha);
    match domain {
        Domain::Source => state.stack_s.bases[l] = updated,
        Domain::Target => state.stack_t.bases[l] = updated,
    }
}

/// Multiplicative rule for the source representation at one layer.
pub(crate) fn repr_source_rule(
    theta: &DMatrix<f64>,
    x_s: &DMatrix<f64>,
    h_s: &DMatrix<f64>,
    j_s: &DMatrix<f64>,
    e_s: &DMatrix<f64>,
    lam1_s: &DMatrix<f64>,
    lap_s: &DMatrix<f64>,
    mu: f64,
    gamma: f64,
) -> DMatrix<f64> {
    let n_s = h_s.ncols();
    let i_minus_j = DMatrix::identity(n_s, n_s) - j_s;
    // Sign-split every indefinite factor before multiplying by the
    // nonnegative H, so numerator and denominator are sums of products
    // of nonnegative matrices and the update cannot change sign.
    let b = &i_minus_j * i_minus_j.transpose();
    let m = (e_s - lam1_s / mu) * i_minus_j.transpose();
    let numer = 2.0 * theta.transpose() * x_s
        + mu * h_s * neg_part(&b)
        + mu * pos_part(&m)
        + 2.0 * gamma * h_s * neg_part(lap_s);
    let denom = 2.0 * theta.transpose() * theta * h_s
        + mu * h_s * pos_part(&b)
        + mu * neg_part(&m)
        + 2.0 * gamma * h_s * pos_part(lap_s);
    let mut out = h_s.clone();
    multiplicative_update(&mut out, &numer, &denom);
    out
}

/// Updates H_s at layer `l` (uses the source blocks of J, E, and the
/// first multiplier).
pub fn update_representation_source(state: &mut SolverState, problem: &TransferProblem, l: usize) {
    let d0 = problem.x_s.rows();
    let n_s = problem.n_s();
    let theta = prefix_product(&state.stack_s.bases, l + 1, d0);
    let j_s = state.j[l].columns(0, n_s).clone_owned();
    let e_s = state.e[l].columns(0, n_s).clone_owned();
    let lam1_s = state.lam1[l].columns(0, n_s).clone_owned();
    state.stack_s.reprs[l] = repr_source_rule(
        &theta,
        problem.x_s.data(),
        &state.stack_s.reprs[l],
        &j_s,
        &e_s,
        &lam1_s,
        problem.graph.laplacian_source(),
        state.mu,
        problem.config.gamma,
    );
}

/// Multiplicative rule for the target representation at one layer.
pub(crate) fn repr_target_rule(
    theta: &DMatrix<f64>,
    x_t: &DMatrix<f64>,
    h_t: &DMatrix<f64>,
    hs_jt: &DMatrix<f64>,
    e_t: &DMatrix<f64>,
    lam1_t: &DMatrix<f64>,
    mu: f64,
) -> DMatrix<f64> {
    let m = hs_jt + e_t - lam1_t / mu;
    let numer = 2.0 * theta.transpose() * x_t + mu * pos_part(&m);
    let denom = 2.0 * theta.transpose() * theta * h_t + mu * h_t + mu * neg_part(&m);
    let mut out = h_t.clone();
    multiplicative_update(&mut out, &numer, &denom);
    out
}

/// Updates H_t at layer `l`.
pub fn update_representation_target(state: &mut SolverState, problem: &TransferProblem, l: usize) {
    let d0 = problem.x_s.rows();
    let n_s = problem.n_s();
    let n_t = problem.n_t();
    let theta = prefix_product(&state.stack_t.bases, l + 1, d0);
    let j_t = state.j[l].columns(n_s, n_t).clone_owned();
    let hs_jt = &state.stack_s.reprs[l] * j_t;
    let e_t = state.e[l].columns(n_s, n_t).clone_owned();
    let lam1_t = state.lam1[l].columns(n_s, n_t).clone_owned();
    state.stack_t.reprs[l] = repr_target_rule(
        &theta,
        problem.x_t.data(),
        &state.stack_t.reprs[l],
        &hs_jt,
        &e_t,
        &lam1_t,
        state.mu,
    );
}

/// Closed-form J update: (H_s^T H_s + I)^{-1} (H_s^T A + Z + Lam2/mu)
/// where A = [H_s, H_t] - E + Lam1/mu. SPD solve, never an explicit inverse.
pub(crate) fn j_solve(
    h_s: &DMatrix<f64>,
    a: &DMatrix<f64>,
    z: &DMatrix<f64>,
    lam2_over_mu: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n_s = h_s.ncols();
    let lhs = h_s.transpose() * h_s + DMatrix::identity(n_s, n_s);
    let rhs = h_s.transpose() * a + z + lam2_over_mu;
    lhs.cholesky()
        .expect("Gram plus identity is SPD")
        .solve(&rhs)
}

/// Updates the auxiliary matrix J at layer `l`.
pub fn update_auxiliary_j(state: &mut SolverState, problem: &TransferProblem, l: usize) {
    let n_s = problem.n_s();
    let h_cat = h_concat(&state.stack_s.reprs[l], &state.stack_t.reprs[l]);
    let a = &h_cat - &state.e[l] + &state.lam1[l] / state.mu;
    let lam2_over_mu = &state.lam2[l] / state.mu;
    let _ = n_s;
    state.j[l] = j_solve(&state.stack_s.reprs[l], &a, &state.z[l], &lam2_over_mu);
}

/// Unconstrained Z minimizer: (mu J - Lam2) (2 beta K + 2 gamma L + mu I)^{-1}
/// via a right-side SPD solve.
pub(crate) fn z_unconstrained(
    kernel: &DMatrix<f64>,
    lap: &DMatrix<f64>,
    j: &DMatrix<f64>,
    lam2: &DMatrix<f64>,
    beta: f64,
    gamma: f64,
    mu: f64,
) -> DMatrix<f64> {
    let n = lap.nrows();
    let lhs = 2.0 * beta * kernel + 2.0 * gamma * lap + mu * DMatrix::identity(n, n);
    let rhs = (mu * j - lam2).transpose();
    let solved = lhs
        .cholesky()
        .expect("2bK + 2gL + muI is SPD for mu > 0")
        .solve(&rhs);
    solved.transpose()
}

/// Updates Z at layer `l`: SPD solve then column-wise simplex projection.
/// Returns the pre-projection minimizer for diagnostics.
pub fn update_coefficients_z(state: &mut SolverState, problem: &TransferProblem, l: usize) -> Result<DMatrix<f64>> {
    let kernel = hsic::diversity_kernel(l, &state.z)?;
    let z0 = z_unconstrained(
        &kernel,
        problem.graph.laplacian(),
        &state.j[l],
        &state.lam2[l],
        problem.config.beta,
        problem.config.gamma,
        state.mu,
    );
    state.z[l] = prox::project_columns_simplex(&z0);
    Ok(z0)
}

/// Updates E at layer `l` by l2,1 shrinkage of the constraint residual.
pub fn update_error_e(state: &mut SolverState, problem: &TransferProblem, l: usize) -> Result<()> {
    let _ = problem;
    let h_cat = h_concat(&state.stack_s.reprs[l], &state.stack_t.reprs[l]);
    let g = &h_cat - &state.stack_s.reprs[l] * &state.j[l] + &state.lam1[l] / state.mu;
    state.e[l] = prox::prox_l21(&g, 1.0 / state.mu)?.value;
    Ok(())
}

/// Dual ascent on both multipliers, then the penalty step
/// mu <- min(rho mu, mu_max). Returns (r1, r2) max-abs residuals.
pub fn update_multipliers(state: &mut SolverState, problem: &TransferProblem) -> (f64, f64) {
    let mut r1 = 0.0f64;
    let mut r2 = 0.0f64;
    for l in 0..state.z.len() {
        let h_cat = h_concat(&state.stack_s.reprs[l], &state.stack_t.reprs[l]);
        let res1 = &h_cat - &state.stack_s.reprs[l] * &state.j[l] - &state.e[l];
        let res2 = &state.z[l] - &state.j[l];
        r1 = r1.max(res1.amax());
        r2 = r2.max(res2.amax());
        state.lam1[l] += state.mu * res1;
        state.lam2[l] += state.mu * res2;
    }
    state.mu = (state.mu * problem.config.rho).min(problem.config.mu_max);
    (r1, r2)
}

fn h_concat(h_s: &DMatrix<f64>, h_t: &DMatrix<f64>) -> DMatrix<f64> {
    let rows = h_s.nrows();
    let mut out = DMatrix::zeros(rows, h_s.ncols() + h_t.ncols());
    out.columns_mut(0, h_s.ncols()).copy_from(h_s);
    out.columns_mut(h_s.ncols(), h_t.ncols()).copy_from(h_t);
    out
}

/// Full model objective; used for logging and oracle tests only.
pub fn objective(state: &SolverState, problem: &TransferProblem) -> f64 {
    let cfg = &problem.config;
    let d0 = problem.x_s.rows();
    let depth = state.stack_s.depth();

    let chain_s = prefix_product(&state.stack_s.bases, depth, d0);
    let chain_t = prefix_product(&state.stack_t.bases, depth, d0);
    let mut obj = (problem.x_s.data() - &chain_s * state.stack_s.reprs.last().unwrap()).norm_squared();
    obj += (problem.x_t.data() - &chain_t * state.stack_t.reprs.last().unwrap()).norm_squared();

    for l in 0..depth {
        let h_cat = h_concat(&state.stack_s.reprs[l], &state.stack_t.reprs[l]);
        obj += l21_norm(&(&h_cat - &state.stack_s.reprs[l] * &state.z[l]));
        obj += cfg.alpha * (&state.stack_s.bases[l] - &state.stack_t.bases[l]).norm_squared();
        if cfg.beta > 0.0 {
            let kernel = hsic::diversity_kernel(l, &state.z).expect("validated layers");
            obj += cfg.beta * (&state.z[l] * kernel * state.z[l].transpose()).trace();
        }
        obj += cfg.gamma
            * (graph::laplacian_quadratic(&state.z[l], problem.graph.laplacian()).expect("shapes match")
                + graph::laplacian_quadratic(&state.stack_s.reprs[l], problem.graph.laplacian_source())
                    .expect("shapes match"));
    }
    obj
}

/// Pretrains both stacks and initializes Z, J, E, and the multipliers.
pub fn init_state(problem: &TransferProblem) -> Result<SolverState> {
    let cfg = &problem.config;
    let stack_s = nmf::pretrain_stack(
        problem.x_s.data(),
        &cfg.layer_dims,
        cfg.pretrain_iters,
        cfg.seed,
    )?;
    let stack_t = nmf::pretrain_stack(
        problem.x_t.data(),
        &cfg.layer_dims,
        cfg.pretrain_iters,
        cfg.seed.wrapping_add(1_000_003),
    )?;
    let depth = cfg.layer_dims.len();
    let n_s = problem.n_s();
    let n = problem.n();
    let uniform = DMatrix::from_element(n_s, n, 1.0 / n_s as f64);
    let z: Vec<_> = (0..depth).map(|_| uniform.clone()).collect();
    let j = z.clone();
    let e: Vec<_> = cfg.layer_dims.iter().map(|&dl| DMatrix::zeros(dl, n)).collect();
    let lam1 = e.clone();
    let lam2: Vec<_> = (0..depth).map(|_| DMatrix::zeros(n_s, n)).collect();
    Ok(SolverState {
        stack_s,
        stack_t,
        z,
        j,
        e,
        lam1,
        lam2,
        mu: cfg.mu0,
        iter: 0,
    })
}

fn check_finite(state: &SolverState, iter: usize) -> Result<()> {
    let finite = |m: &DMatrix<f64>| m.iter().all(|v| v.is_finite());
    for l in 0..state.z.len() {
        let checks: [(&str, &DMatrix<f64>); 7] = [
            ("D_s", &state.stack_s.bases[l]),
            ("D_t", &state.stack_t.bases[l]),
            ("H_s", &state.stack_s.reprs[l]),
            ("H_t", &state.stack_t.reprs[l]),
            ("Z", &state.z[l]),
            ("J", &state.j[l]),
            ("E", &state.e[l]),
        ];
        for (name, m) in checks {
            if !finite(m) {
                return Err(CdmsError::Divergence {
                    what: name.to_string(),
                    iter,
                    layer: l,
                });
            }
        }
    }
    Ok(())
}

/// Runs the full ADMM loop until both residuals drop below eps or the
/// iteration cap is reached.
pub fn solve(problem: &TransferProblem) -> Result<SolverOutput> {
    let mut state = init_state(problem)?;
    let depth = state.z.len();
    let eps = problem.config.eps;
    let mut residual_log = Vec::new();
    let mut converged = false;
    let mut iters_run = 0;

    for iter in 0..problem.config.max_iters {
        for l in 0..depth {
            update_basis(&mut state, problem, Domain::Source, l);
            update_basis(&mut state, problem, Domain::Target, l);
            update_representation_source(&mut state, problem, l);
            update_representation_target(&mut state, problem, l);
            update_auxiliary_j(&mut state, problem, l);
            update_coefficients_z(&mut state, problem, l)?;
            update_error_e(&mut state, problem, l)?;
        }
        let mu_before = state.mu;
        let (r1, r2) = update_multipliers(&mut state, problem);
        check_finite(&state, iter)?;
        state.iter = iter + 1;
        iters_run = iter + 1;
        residual_log.push(IterationRecord {
            iter: iter + 1,
            r1,
            r2,
            objective: objective(&state, problem),
            mu: mu_before,
        });
        if r1 < eps && r2 < eps {
            converged = true;
            break;
        }
    }

    Ok(SolverOutput {
        z: state.z,
        residual_log,
        converged,
        iters_run,
    })
}

/// Writes the residual log as `iter,r1,r2,objective,mu` CSV.
pub fn residual_log_csv(log: &[IterationRecord]) -> String {
    let mut out = String::from("iter,r1,r2,objective,mu\n");
    for rec in log {
        out.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            rec.iter, rec.r1, rec.r2, rec.objective, rec.mu
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn tiny_problem(seed: u64) -> TransferProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 10;
        let n_s = 12;
        let n_t = 10;
        let x_s = DMatrix::from_fn(d, n_s, |_, _| rng.gen::<f64>());
        let x_t = DMatrix::from_fn(d, n_t, |_, _| rng.gen::<f64>());
        let labels: Vec<i64> = (0..n_s).map(|i| (i / 6) as i64).collect();
        let config = SolverConfig {
            layer_dims: vec![6, 3],
            tau: 3,
            pretrain_iters: 30,
            max_iters: 5,
            seed,
            ..SolverConfig::default()
        };
        TransferProblem::new(
            FeatureMatrix::new(x_s).unwrap(),
            FeatureMatrix::new(x_t).unwrap(),
            LabelSequence::from_raw(&labels).unwrap(),
            config,
        )
        .unwrap()
    }

    #[test]
    fn init_state_contract() {
        let problem = tiny_problem(1);
        let state = init_state(&problem).unwrap();
        for z in &state.z {
            for j in 0..z.ncols() {
                assert_relative_eq!(z.column(j).sum(), 1.0, epsilon = 1e-12);
            }
        }
        for l in 0..state.z.len() {
            assert_eq!((&state.z[l] - &state.j[l]).amax(), 0.0);
            assert_eq!(state.e[l].amax(), 0.0);
            assert_eq!(state.lam1[l].amax(), 0.0);
            assert_eq!(state.lam2[l].amax(), 0.0);
        }
        assert_eq!(state.mu, problem.config.mu0);
        let again = init_state(&problem).unwrap();
        assert_eq!(state.stack_s.reprs[0], again.stack_s.reprs[0]);
    }

    #[test]
    fn basis_rule_scalar_case() {
        // 1x1: X=2, D=1, H=1, alpha=0 -> D becomes 2
        let theta = scalar(1.0);
        let omega = scalar(1.0);
        let out = basis_update_rule(&theta, &omega, &scalar(2.0), &scalar(1.0), &scalar(1.0), &scalar(0.0), 0.0);
        assert_relative_eq!(out[(0, 0)], 2.0);
    }

    #[test]
    fn basis_rule_fixed_point_on_exact_data() {
        // L=1: X = D H exactly and D_t = D_s -> numerator equals denominator
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d_s = DMatrix::from_fn(4, 2, |_, _| rng.gen::<f64>() + 0.1);
        let h = DMatrix::from_fn(2, 6, |_, _| rng.gen::<f64>() + 0.1);
        let x = &d_s * &h;
        let theta = DMatrix::identity(4, 4);
        let omega = DMatrix::identity(2, 2);
        let out = basis_update_rule(&theta, &omega, &x, &h, &d_s, &d_s, 0.7);
        assert!((out - &d_s).amax() < 1e-10);
    }

    #[test]
    fn basis_update_preserves_nonnegativity() {
        let problem = tiny_problem(3);
        let mut state = init_state(&problem).unwrap();
        for l in 0..2 {
            update_basis(&mut state, &problem, Domain::Source, l);
            update_basis(&mut state, &problem, Domain::Target, l);
        }
        for l in 0..2 {
            assert!(state.stack_s.bases[l].iter().all(|&v| v >= 0.0));
            assert!(state.stack_t.bases[l].iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn repr_source_scalar_case() {
        // X=Theta=H=1, E=Lam=0, J=0, mu=2, gamma=0:
        // numer = 2*1 + 2*(0-0)*1 = 2; denom = 2*1*1 + 2*1*1 = 4 -> H = 0.5
        let out = repr_source_rule(
            &scalar(1.0),
            &scalar(1.0),
            &scalar(1.0),
            &scalar(0.0),
            &scalar(0.0),
            &scalar(0.0),
            &scalar(0.0),
            2.0,
            0.0,
        );
        assert_relative_eq!(out[(0, 0)], 0.5);
    }

    #[test]
    fn repr_target_scalar_case() {
        // numer = 2 + 2*1 = 4, denom = 2 + 2 = 4 -> unchanged
        let out = repr_target_rule(
            &scalar(1.0),
            &scalar(1.0),
            &scalar(1.0),
            &scalar(1.0),
            &scalar(0.0),
            &scalar(0.0),
            2.0,
        );
        assert_relative_eq!(out[(0, 0)], 1.0);
    }

    #[test]
    fn repr_updates_stay_nonnegative() {
        let problem = tiny_problem(4);
        let mut state = init_state(&problem).unwrap();
        for _ in 0..3 {
            for l in 0..2 {
                update_representation_source(&mut state, &problem, l);
                update_representation_target(&mut state, &problem, l);
            }
        }
        for l in 0..2 {
            assert!(state.stack_s.reprs[l].iter().all(|&v| v >= 0.0));
            assert!(state.stack_t.reprs[l].iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn j_solve_degenerate_and_scalar() {
        // H_s = 0 -> J = Z + Lam2/mu exactly
        let h_s = DMatrix::zeros(3, 2);
        let a = DMatrix::from_element(3, 5, 1.0);
        let z = DMatrix::from_element(2, 5, 0.25);
        let lam = DMatrix::from_element(2, 5, 0.5);
        let j = j_solve(&h_s, &a, &z, &lam);
        assert!((j - (&z + &lam)).amax() < 1e-12);
        // scalars H_s=1, A=3, Z=1, Lam2/mu=0 -> J = (1+1)^{-1}(3+1) = 2
        let j = j_solve(&scalar(1.0), &scalar(3.0), &scalar(1.0), &scalar(0.0));
        assert_relative_eq!(j[(0, 0)], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn j_gradient_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let n_s = rng.gen_range(2..6);
            let n = n_s + rng.gen_range(2..6);
            let dl = rng.gen_range(2..5);
            let mu = 10f64.powf(rng.gen_range(-2.0..1.0));
            let h_s = DMatrix::from_fn(dl, n_s, |_, _| rng.gen::<f64>());
            let a = DMatrix::from_fn(dl, n, |_, _| rng.gen::<f64>() - 0.3);
            let z = DMatrix::from_fn(n_s, n, |_, _| rng.gen::<f64>());
            let lam2_over_mu = DMatrix::from_fn(n_s, n, |_, _| rng.gen::<f64>() - 0.5);
            let j = j_solve(&h_s, &a, &z, &lam2_over_mu);
            // gradient of mu/2||A - H_s J||^2 + mu/2||Z - J + Lam2/mu||^2
            let grad = mu * (h_s.transpose() * (&h_s * &j - &a) + (&j - &z - &lam2_over_mu));
            assert!(grad.norm() <= 1e-8 * (1.0 + j.norm()) * mu.max(1.0));
        }
    }

    #[test]
    fn z_penalty_only_reduces_to_projected_j() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 6;
        let j = DMatrix::from_fn(3, n, |_, _| rng.gen::<f64>());
        let lam2 = DMatrix::zeros(3, n);
        let kernel = DMatrix::zeros(n, n);
        let lap = DMatrix::zeros(n, n);
        let z0 = z_unconstrained(&kernel, &lap, &j, &lam2, 0.0, 0.0, 2.0);
        assert!((&z0 - &j).amax() < 1e-12);
    }

    #[test]
    fn z_linear_system_residual() {
        let problem = tiny_problem(7);
        let mut state = init_state(&problem).unwrap();
        state.mu = 0.5;
        for l in 0..2 {
            let kernel = hsic::diversity_kernel(l, &state.z).unwrap();
            let z0 = update_coefficients_z(&mut state, &problem, l).unwrap();
            let lhs = 2.0 * problem.config.beta * &kernel
                + 2.0 * problem.config.gamma * problem.graph.laplacian()
                + state.mu * DMatrix::identity(problem.n(), problem.n());
            let rhs = state.mu * &state.j[l] - &state.lam2[l];
            let scale = rhs.amax().max(1.0);
            assert!((z0 * lhs - rhs).amax() <= 1e-8 * scale);
            for c in 0..state.z[l].ncols() {
                assert_relative_eq!(state.z[l].column(c).sum(), 1.0, epsilon = 1e-12);
                assert!(state.z[l].column(c).iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn e_update_shrinkage() {
        let problem = tiny_problem(8);
        let mut state = init_state(&problem).unwrap();
        state.mu = 1e6;
        // make J equal Z so G = [H_s,H_t] - H_s J
        update_error_e(&mut state, &problem, 0).unwrap();
        let h_cat = h_concat(&state.stack_s.reprs[0], &state.stack_t.reprs[0]);
        let g = &h_cat - &state.stack_s.reprs[0] * &state.j[0];
        for c in 0..g.ncols() {
            let gn = g.column(c).norm();
            let en = state.e[0].column(c).norm();
            if gn > 1e-6 {
                assert_relative_eq!(en, gn - 1e-6, epsilon = 1e-9);
            } else {
                assert_eq!(en, 0.0);
            }
        }
    }

    #[test]
    fn multiplier_update_scalars_and_cap() {
        let problem = tiny_problem(9);
        let mut state = init_state(&problem).unwrap();
        state.mu = 0.1;
        // Z = J and constraint satisfied by zero H? craft residual r = H_cat - H_s J - E
        let (_, r2) = update_multipliers(&mut state, &problem);
        assert_eq!(r2, 0.0);
        assert_relative_eq!(state.mu, 0.15, epsilon = 1e-15);
        for l in 0..2 {
            assert_eq!(state.lam2[l].amax(), 0.0);
        }
        state.mu = problem.config.mu_max;
        update_multipliers(&mut state, &problem);
        assert_eq!(state.mu, problem.config.mu_max);
    }

    #[test]
    fn objective_null_and_consistency_cases() {
        let problem = tiny_problem(10);
        let mut state = init_state(&problem).unwrap();
        // zero everything: only gamma * tr(Z L Z^T) could survive, and
        // uniform Z columns are constant vectors in the Laplacian null space
        for l in 0..2 {
            state.stack_s.bases[l].fill(0.0);
            state.stack_t.bases[l].fill(0.0);
            state.stack_s.reprs[l].fill(0.0);
            state.stack_t.reprs[l].fill(0.0);
        }
        let mut zero_problem = problem.clone();
        zero_problem.x_s = FeatureMatrix::new(DMatrix::zeros(10, 12)).unwrap();
        zero_problem.x_t = FeatureMatrix::new(DMatrix::zeros(10, 10)).unwrap();
        let obj = objective(&state, &zero_problem);
        assert!(obj.abs() < 1e-8, "objective {obj}");
    }

    #[test]
    fn objective_matches_term_by_term_reimplementation() {
        let problem = tiny_problem(11);
        let mut state = init_state(&problem).unwrap();
        // perturb so no term is trivially zero
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for l in 0..2 {
            state.z[l] = prox::project_columns_simplex(&DMatrix::from_fn(
                problem.n_s(),
                problem.n(),
                |_, _| rng.gen::<f64>(),
            ));
        }
        let fast = objective(&state, &problem);
        // independent double-entry accounting
        let cfg = &problem.config;
        let mut slow = 0.0;
        let chain_s = &state.stack_s.bases[0] * &state.stack_s.bases[1];
        let chain_t = &state.stack_t.bases[0] * &state.stack_t.bases[1];
        slow += (problem.x_s.data() - chain_s * &state.stack_s.reprs[1]).norm_squared();
        slow += (problem.x_t.data() - chain_t * &state.stack_t.reprs[1]).norm_squared();
        for l in 0..2 {
            let h_cat = h_concat(&state.stack_s.reprs[l], &state.stack_t.reprs[l]);
            let resid = &h_cat - &state.stack_s.reprs[l] * &state.z[l];
            slow += (0..resid.ncols()).map(|c| resid.column(c).norm()).sum::<f64>();
            slow += cfg.alpha * (&state.stack_s.bases[l] - &state.stack_t.bases[l]).norm_squared();
            let m = hsic::centering_matrix(problem.n()).unwrap();
            for other in 0..2 {
                if other == l {
                    continue;
                }
                let km = state.z[other].transpose() * &state.z[other];
                slow += cfg.beta * (&state.z[l] * (&m * km * &m) * state.z[l].transpose()).trace();
            }
            slow += cfg.gamma
                * ((&state.z[l] * problem.graph.laplacian() * state.z[l].transpose()).trace()
                    + (&state.stack_s.reprs[l]
                        * problem.graph.laplacian_source()
                        * state.stack_s.reprs[l].transpose())
                    .trace());
        }
        assert_relative_eq!(fast, slow, max_relative = 1e-10);
    }

    #[test]
    fn solve_stops_after_one_iteration_with_huge_eps() {
        let mut problem = tiny_problem(13);
        problem.config.eps = 1e100;
        let out = solve(&problem).unwrap();
        assert!(out.converged);
        assert_eq!(out.iters_run, 1);
        assert_eq!(out.residual_log.len(), 1);
    }

    #[test]
    fn solve_is_deterministic() {
        let problem = tiny_problem(14);
        let a = solve(&problem).unwrap();
        let b = solve(&problem).unwrap();
        assert_eq!(a.iters_run, b.iters_run);
        for (ra, rb) in a.residual_log.iter().zip(&b.residual_log) {
            assert_eq!(ra.r1, rb.r1);
            assert_eq!(ra.r2, rb.r2);
            assert_eq!(ra.objective, rb.objective);
        }
        for (za, zb) in a.z.iter().zip(&b.z) {
            assert_eq!(za, zb);
        }
    }

    #[test]
    fn simplex_feasibility_after_every_iteration() {
        let mut problem = tiny_problem(15);
        problem.config.max_iters = 4;
        let mut state = init_state(&problem).unwrap();
        for _ in 0..4 {
            for l in 0..2 {
                update_basis(&mut state, &problem, Domain::Source, l);
                update_basis(&mut state, &problem, Domain::Target, l);
                update_representation_source(&mut state, &problem, l);
                update_representation_target(&mut state, &problem, l);
                update_auxiliary_j(&mut state, &problem, l);
                update_coefficients_z(&mut state, &problem, l).unwrap();
                update_error_e(&mut state, &problem, l).unwrap();
            }
            update_multipliers(&mut state, &problem);
            for z in &state.z {
                for c in 0..z.ncols() {
                    assert_relative_eq!(z.column(c).sum(), 1.0, epsilon = 1e-12);
                    assert!(z.column(c).iter().all(|&v| v >= 0.0));
                }
            }
            for l in 0..2 {
                assert!(state.stack_s.bases[l].iter().all(|&v| v >= 0.0));
                assert!(state.stack_s.reprs[l].iter().all(|&v| v >= 0.0));
                assert!(state.stack_t.bases[l].iter().all(|&v| v >= 0.0));
                assert!(state.stack_t.reprs[l].iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn mu_schedule_monotone_and_capped() {
        let mut problem = tiny_problem(16);
        problem.config.max_iters = 40;
        problem.config.mu0 = 1.0;
        problem.config.mu_max = 10.0;
        let out = solve(&problem).unwrap();
        let mut prev = 0.0;
        for rec in &out.residual_log {
            assert!(rec.mu >= prev);
            assert!(rec.mu <= problem.config.mu_max);
            prev = rec.mu;
        }
    }

    #[test]
    fn single_layer_self_representation_sanity() {
        // alpha=beta=gamma=0, L=1, identical source/target data on a tiny
        // separable instance: the solver reduces to self-representation and
        // must drive both residuals under eps.
        let mut x = DMatrix::zeros(6, 8);
        for j in 0..4 {
            x[(0, j)] = 1.0;
            x[(1, j)] = 0.5;
        }
        for j in 4..8 {
            x[(4, j)] = 1.0;
            x[(5, j)] = 0.5;
        }
        let labels: Vec<i64> = (0..8).map(|i| (i / 4) as i64).collect();
        let config = SolverConfig {
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
            layer_dims: vec![4],
            tau: 2,
            pretrain_iters: 100,
            max_iters: 120,
            seed: 3,
            ..SolverConfig::default()
        };
        let problem = TransferProblem::new(
            FeatureMatrix::new(x.clone()).unwrap(),
            FeatureMatrix::new(x).unwrap(),
            LabelSequence::from_raw(&labels).unwrap(),
            config,
        )
        .unwrap();
        let out = solve(&problem).unwrap();
        assert!(out.converged, "failed to converge: last={:?}", out.residual_log.last());
        let last = out.residual_log.last().unwrap();
        assert!(last.r1 < problem.config.eps);
        assert!(last.r2 < problem.config.eps);
    }
}
