//! Controlled synthetic transfer instances: per-cluster nonnegative
//! subspace bases, segment-structured source/target sequences, and an
//! end-to-end benchmark harness.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::affinity;
use crate::error::CdmsError;
use crate::io::{FeatureMatrix, LabelSequence, SolverConfig};
use crate::metrics::{self, EvalReport};
use crate::solver::{self, TransferProblem};
use crate::Result;

/// Parameters of a synthetic transfer instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub k: usize,
    pub d: usize,
    pub subspace_dim: usize,
    pub n_segments_source: usize,
    pub n_segments_target: usize,
    pub seg_len_range: (usize, usize),
    /// Entrywise perturbation scale applied to target bases.
    pub domain_shift: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            k: 3,
            d: 60,
            subspace_dim: 4,
            n_segments_source: 3,
            n_segments_target: 3,
            seg_len_range: (45, 55),
            domain_shift: 0.05,
            noise_sigma: 0.01,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(CdmsError::Config(m));
        if self.k < 2 {
            return err("k must be >= 2".into());
        }
        if self.subspace_dim < 1 {
            return err("subspace_dim must be >= 1".into());
        }
        if self.subspace_dim > self.d {
            return err("subspace_dim must not exceed d".into());
        }
        if self.seg_len_range.0 < self.subspace_dim {
            return err(format!(
                "seg_len_range min {} below subspace_dim {}",
                self.seg_len_range.0, self.subspace_dim
            ));
        }
        if self.seg_len_range.1 < self.seg_len_range.0 {
            return err("seg_len_range max below min".into());
        }
        if self.n_segments_source < 1 || self.n_segments_target < 1 {
            return err("segment counts must be positive".into());
        }
        if !(self.domain_shift.is_finite() && self.domain_shift >= 0.0) {
            return err("domain_shift must be finite and nonnegative".into());
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return err("noise_sigma must be finite and nonnegative".into());
        }
        Ok(())
    }

    /// Applies one `key = value` assignment from a spec file.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |k: &str, v: &str| CdmsError::Config(format!("unparsable value `{v}` for key `{k}`"));
        match key {
            "k" => self.k = value.parse().map_err(|_| bad(key, value))?,
            "d" => self.d = value.parse().map_err(|_| bad(key, value))?,
            "subspace_dim" => self.subspace_dim = value.parse().map_err(|_| bad(key, value))?,
            "n_segments_source" => self.n_segments_source = value.parse().map_err(|_| bad(key, value))?,
            "n_segments_target" => self.n_segments_target = value.parse().map_err(|_| bad(key, value))?,
            "seg_len_range" => {
                let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                if parts.len() != 2 {
                    return Err(bad(key, value));
                }
                let lo = parts[0].parse().map_err(|_| bad(key, value))?;
                let hi = parts[1].parse().map_err(|_| bad(key, value))?;
                self.seg_len_range = (lo, hi);
            }
            "domain_shift" => self.domain_shift = value.parse().map_err(|_| bad(key, value))?,
            "noise_sigma" => self.noise_sigma = value.parse().map_err(|_| bad(key, value))?,
            "seed" => self.seed = value.parse().map_err(|_| bad(key, value))?,
            other => return Err(CdmsError::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }
}

/// A generated source/target pair with ground-truth frame labels.
#[derive(Debug, Clone)]
pub struct TransferInstance {
    pub source: FeatureMatrix,
    pub source_labels: LabelSequence,
    pub target: FeatureMatrix,
    pub target_labels: LabelSequence,
}

fn half_normal(rng: &mut ChaCha8Rng) -> f64 {
    let v: f64 = StandardNormal.sample(rng);
    v.abs()
}

fn segment_frames(
    bases: &[DMatrix<f64>],
    cluster_order: &[usize],
    n_segments: usize,
    spec: &SynthSpec,
    rng: &mut ChaCha8Rng,
) -> (DMatrix<f64>, Vec<i64>) {
    let mut columns: Vec<DVector<f64>> = Vec::new();
    let mut labels = Vec::new();
    for seg in 0..n_segments {
        let cluster = cluster_order[seg % cluster_order.len()];
        let len = rng.gen_range(spec.seg_len_range.0..=spec.seg_len_range.1);
        for _ in 0..len {
            let w = DVector::from_fn(spec.subspace_dim, |_, _| half_normal(rng));
            let mut frame = &bases[cluster] * w;
            if spec.noise_sigma > 0.0 {
                for v in frame.iter_mut() {
                    *v += spec.noise_sigma * half_normal(rng);
                }
            }
            // construction keeps entries nonnegative; clamp guards roundoff
            for v in frame.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            columns.push(frame);
            labels.push(cluster as i64);
        }
    }
    let n = columns.len();
    let m = DMatrix::from_fn(spec.d, n, |i, j| columns[j][i]);
    (m, labels)
}

/// Draws a seeded instance: shared nonnegative cluster bases, perturbed
/// for the target domain, with contiguous labeled segments.
pub fn generate_transfer_instance(spec: &SynthSpec) -> Result<TransferInstance> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let bases: Vec<DMatrix<f64>> = (0..spec.k)
        .map(|_| DMatrix::from_fn(spec.d, spec.subspace_dim, |_, _| half_normal(&mut rng)))
        .collect();
    let target_bases: Vec<DMatrix<f64>> = bases
        .iter()
        .map(|b| {
            b.map(|v| {
                let shifted = v + spec.domain_shift * half_normal(&mut rng);
                shifted.max(0.0)
            })
        })
        .collect();

    let source_order: Vec<usize> = (0..spec.k).collect();
    // shuffled cycle for the target, forced away from the identity order
    let mut target_order = source_order.clone();
    for i in (1..target_order.len()).rev() {
        let j = rng.gen_range(0..=i);
        target_order.swap(i, j);
    }
    if target_order == source_order {
        target_order.rotate_left(1);
    }

    let (x_s, labels_s) = segment_frames(&bases, &source_order, spec.n_segments_source, spec, &mut rng);
    let (x_t, labels_t) = segment_frames(&target_bases, &target_order, spec.n_segments_target, spec, &mut rng);

    Ok(TransferInstance {
        source: FeatureMatrix::new(x_s)?,
        source_labels: LabelSequence::from_raw(&labels_s)?,
        target: FeatureMatrix::new(x_t)?,
        target_labels: LabelSequence::from_raw(&labels_t)?,
    })
}

/// End-to-end benchmark result, including per-layer single-layer NMI for
/// the multi-layer fusion comparison.
#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub eval: EvalReport,
    pub converged: bool,
    pub iters: usize,
    pub wall_time: f64,
    pub per_layer_nmi: Vec<f64>,
}

impl BenchmarkReport {
    /// One CSV row: `nmi,acc,converged,iters,wall_time,<per-layer nmi...>`.
    pub fn csv_row(&self) -> String {
        let mut row = format!(
            "{},{},{},{},{}",
            self.eval.nmi, self.eval.acc, self.converged, self.iters, self.wall_time
        );
        for v in &self.per_layer_nmi {
            row.push_str(&format!(",{v}"));
        }
        row
    }
}

/// Generates an instance, solves it, clusters the fused affinity, and
/// evaluates against the ground-truth target labels.
pub fn run_benchmark(spec: &SynthSpec, config: &SolverConfig, k: usize) -> Result<BenchmarkReport> {
    let start = Instant::now();
    let instance = generate_transfer_instance(spec)?;
    let n_s = instance.source.cols();
    let problem = TransferProblem::new(
        instance.source,
        instance.target,
        instance.source_labels,
        config.clone(),
    )?;
    let output = solver::solve(&problem)?;

    let fused = affinity::fuse_affinity(&output.z, n_s)?;
    let pred = affinity::normalized_cuts(&fused, k, config.seed)?;
    let eval = metrics::evaluate(&instance.target_labels, &pred)?;

    let mut per_layer_nmi = Vec::with_capacity(output.z.len());
    for z in &output.z {
        let single = affinity::fuse_affinity(std::slice::from_ref(z), n_s)?;
        let labels = affinity::normalized_cuts(&single, k, config.seed)?;
        per_layer_nmi.push(metrics::nmi(&instance.target_labels, &labels)?);
    }

    Ok(BenchmarkReport {
        eval,
        converged: output.converged,
        iters: output.iters_run,
        wall_time: start.elapsed().as_secs_f64(),
        per_layer_nmi,
    })
}
