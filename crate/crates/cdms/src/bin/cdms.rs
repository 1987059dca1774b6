//! Command-line front end: segment, pretrain, synth, eval, sweep.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;

use cdms::affinity::{fuse_affinity, normalized_cuts};
use cdms::error::CdmsError;
use cdms::io::{
    load_config, load_feature_matrix, load_labels, parse_key_values, save_labels, save_matrix,
    LabelSequence, Orientation, SolverConfig,
};
use cdms::metrics::evaluate;
use cdms::nmf::pretrain_stack;
use cdms::solver::{residual_log_csv, solve, SolverOutput, TransferProblem};
use cdms::synth::{generate_transfer_instance, SynthSpec};
use cdms::Result;

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CdmsError::io(path, e))
}

fn make_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| CdmsError::io(path, e))
}

#[derive(Parser)]
#[command(name = "cdms", about = "Temporal segmentation by transfer subspace learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment a target sequence using a labeled source sequence.
    Segment(SegmentArgs),
    /// Layer-wise NMF pretraining; dumps per-layer factor CSVs.
    Pretrain(PretrainArgs),
    /// Generate a synthetic source/target instance with ground truth.
    Synth(SynthArgs),
    /// Compare predicted labels against ground truth.
    Eval(EvalArgs),
    /// Grid search over alpha, beta, gamma.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SegmentArgs {
    /// Source feature CSV, one feature dimension per row.
    #[arg(long)]
    source: PathBuf,
    /// Source ground-truth labels, one integer per line.
    #[arg(long)]
    source_labels: PathBuf,
    /// Target feature CSV, one feature dimension per row.
    #[arg(long)]
    target: PathBuf,
    /// Number of clusters.
    #[arg(long)]
    clusters: usize,
    /// Optional key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: current directory).
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[command(flatten)]
    overrides: ConfigOverrides,
}

/// Per-key config overrides; flags win over the config file.
#[derive(Args)]
struct ConfigOverrides {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Comma-separated layer sizes, e.g. 128,64,16.
    #[arg(long)]
    layer_dims: Option<String>,
    #[arg(long)]
    tau: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    pretrain_iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigOverrides {
    fn apply(&self, config: &mut SolverConfig) -> Result<()> {
        if let Some(v) = self.alpha {
            config.set("alpha", &v.to_string())?;
        }
        if let Some(v) = self.beta {
            config.set("beta", &v.to_string())?;
        }
        if let Some(v) = self.gamma {
            config.set("gamma", &v.to_string())?;
        }
        if let Some(v) = &self.layer_dims {
            config.set("layer_dims", v)?;
        }
        if let Some(v) = self.tau {
            config.set("tau", &v.to_string())?;
        }
        if let Some(v) = self.max_iters {
            config.set("max_iters", &v.to_string())?;
        }
        if let Some(v) = self.pretrain_iters {
            config.set("pretrain_iters", &v.to_string())?;
        }
        if let Some(v) = self.seed {
            config.set("seed", &v.to_string())?;
        }
        Ok(())
    }
}

#[derive(Args)]
struct PretrainArgs {
    /// Input feature CSV, one feature dimension per row.
    #[arg(long)]
    input: PathBuf,
    /// Comma-separated layer sizes, strictly decreasing.
    #[arg(long)]
    dims: String,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SynthArgs {
    /// Generator spec file (key = value grammar).
    #[arg(long)]
    spec: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted labels, one integer per line.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth labels, one integer per line.
    #[arg(long)]
    truth: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    source_labels: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// Ground-truth target labels for scoring each grid point.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    clusters: usize,
    /// Comma-separated alpha values.
    #[arg(long)]
    alpha_grid: String,
    /// Comma-separated beta values.
    #[arg(long)]
    beta_grid: String,
    /// Comma-separated gamma values.
    #[arg(long)]
    gamma_grid: String,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads for grid points.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successful exits; usage errors are not.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Segment(args) => cmd_segment(&args),
        Command::Pretrain(args) => cmd_pretrain(&args),
        Command::Synth(args) => cmd_synth(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Sweep(args) => cmd_sweep(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CdmsError::Divergence { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn build_config(path: Option<&Path>, overrides: &ConfigOverrides) -> Result<SolverConfig> {
    let mut config = match path {
        Some(p) => load_config(p)?,
        None => SolverConfig::default(),
    };
    overrides.apply(&mut config)?;
    config.validate()?;
    Ok(config)
}

fn load_problem(
    source: &Path,
    source_labels: &Path,
    target: &Path,
    config: SolverConfig,
) -> Result<TransferProblem> {
    let x_s = load_feature_matrix(source, Orientation::RowsAreFeatures)?;
    let x_t = load_feature_matrix(target, Orientation::RowsAreFeatures)?;
    let labels = load_labels(source_labels)?;
    TransferProblem::new(x_s, x_t, labels, config)
}

/// Solves, fuses the per-layer coefficients, and clusters the target frames.
fn segment_pipeline(
    problem: &TransferProblem,
    k: usize,
) -> Result<(SolverOutput, DMatrix<f64>, LabelSequence)> {
    let output = solve(problem)?;
    let affinity = fuse_affinity(&output.z, problem.n_s())?;
    let labels = normalized_cuts(&affinity, k, problem.config.seed)?;
    let matrix = affinity.matrix().clone();
    Ok((output, matrix, labels))
}

fn cmd_segment(args: &SegmentArgs) -> Result<()> {
    let config = build_config(args.config.as_deref(), &args.overrides)?;
    let problem = load_problem(&args.source, &args.source_labels, &args.target, config)?;
    let (output, affinity, labels) = segment_pipeline(&problem, args.clusters)?;

    make_dir(&args.out)?;
    save_labels(&args.out.join("labels.txt"), labels.labels())?;
    save_matrix(&args.out.join("affinity.csv"), &affinity)?;
    write_file(&args.out.join("residuals.csv"), &residual_log_csv(&output.residual_log))?;
    let objective = output.residual_log.last().map_or(f64::NAN, |r| r.objective);
    let summary = format!(
        "converged = {}\niters = {}\nobjective = {:.16e}\n",
        output.converged, output.iters_run, objective
    );
    write_file(&args.out.join("summary.txt"), &summary)?;
    Ok(())
}

fn parse_dims(text: &str) -> Result<Vec<usize>> {
    let dims: Vec<usize> = text
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| CdmsError::InvalidArgument(format!("bad layer dim '{}'", t.trim())))
        })
        .collect::<Result<_>>()?;
    if dims.is_empty() || dims.contains(&0) {
        return Err(CdmsError::InvalidArgument("dims must be positive".into()));
    }
    if dims.windows(2).any(|w| w[1] >= w[0]) {
        return Err(CdmsError::InvalidArgument(
            "dims must be strictly decreasing".into(),
        ));
    }
    Ok(dims)
}

fn cmd_pretrain(args: &PretrainArgs) -> Result<()> {
    let dims = parse_dims(&args.dims)?;
    let x = load_feature_matrix(&args.input, Orientation::RowsAreFeatures)?;
    let stack = pretrain_stack(x.data(), &dims, args.iters, args.seed)?;

    make_dir(&args.out)?;
    for (l, (basis, repr)) in stack.bases.iter().zip(&stack.reprs).enumerate() {
        save_matrix(&args.out.join(format!("D{}.csv", l + 1)), basis)?;
        save_matrix(&args.out.join(format!("H{}.csv", l + 1)), repr)?;
    }
    let mut approx = stack.bases[0].clone();
    for b in &stack.bases[1..] {
        approx = approx * b;
    }
    approx = approx * stack.reprs.last().unwrap();
    let err = (x.data() - approx).norm();
    println!("reconstruction_error = {err:.6e}");
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.spec).map_err(|e| CdmsError::io(&args.spec, e))?;
    let mut spec = SynthSpec::default();
    parse_key_values(&args.spec, &text, |k, v| spec.set(k, v))?;
    spec.validate()?;
    let inst = generate_transfer_instance(&spec)?;

    make_dir(&args.out)?;
    save_matrix(&args.out.join("source.csv"), inst.source.data())?;
    save_labels(&args.out.join("source_labels.txt"), inst.source_labels.labels())?;
    save_matrix(&args.out.join("target.csv"), inst.target.data())?;
    save_labels(&args.out.join("target_labels.txt"), inst.target_labels.labels())?;
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let pred = load_labels(&args.pred)?;
    let truth = load_labels(&args.truth)?;
    let report = evaluate(&truth, &pred)?;
    println!("{report}");
    Ok(())
}

fn parse_grid(text: &str, name: &str) -> Result<Vec<f64>> {
    let vals: Vec<f64> = text
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CdmsError::InvalidArgument(format!("bad {name} value '{}'", t.trim())))
        })
        .collect::<Result<_>>()?;
    if vals.is_empty() {
        return Err(CdmsError::InvalidArgument(format!("{name} is empty")));
    }
    Ok(vals)
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let alphas = parse_grid(&args.alpha_grid, "alpha-grid")?;
    let betas = parse_grid(&args.beta_grid, "beta-grid")?;
    let gammas = parse_grid(&args.gamma_grid, "gamma-grid")?;
    if args.jobs == 0 {
        return Err(CdmsError::InvalidArgument("jobs must be positive".into()));
    }
    let base_config = match &args.config {
        Some(p) => load_config(p)?,
        None => SolverConfig::default(),
    };
    let problem = load_problem(&args.source, &args.source_labels, &args.target, base_config)?;
    let truth = load_labels(&args.truth)?;
    if truth.len() != problem.n_t() {
        return Err(CdmsError::DimensionMismatch(format!(
            "truth labels length {} != target frame count {}",
            truth.len(),
            problem.n_t()
        )));
    }

    // Grid order: alpha outermost, gamma innermost, matching the flag order.
    let mut points = Vec::new();
    for &a in &alphas {
        for &b in &betas {
            for &g in &gammas {
                points.push((a, b, g));
            }
        }
    }

    let rows = Mutex::new(vec![String::new(); points.len()]);
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..args.jobs.min(points.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= points.len() {
                    break;
                }
                let (a, b, g) = points[i];
                let row = sweep_point(&problem, &truth, args.clusters, a, b, g);
                rows.lock().unwrap()[i] = row;
            });
        }
    });

    let mut out = String::from("alpha,beta,gamma,nmi,acc,iters\n");
    for row in rows.into_inner().unwrap() {
        out.push_str(&row);
        out.push('\n');
    }
    write_file(&args.out, &out)?;
    Ok(())
}

fn sweep_point(
    problem: &TransferProblem,
    truth: &LabelSequence,
    k: usize,
    alpha: f64,
    beta: f64,
    gamma: f64,
) -> String {
    let mut p = problem.clone();
    p.config.alpha = alpha;
    p.config.beta = beta;
    p.config.gamma = gamma;
    let scored: Result<(f64, f64, usize)> = (|| {
        let (output, _, labels) = segment_pipeline(&p, k)?;
        let report = evaluate(truth, &labels)?;
        Ok((report.nmi, report.acc, output.iters_run))
    })();
    match scored {
        Ok((nmi, acc, iters)) => format!("{alpha},{beta},{gamma},{nmi},{acc},{iters}"),
        Err(_) => format!("{alpha},{beta},{gamma},NaN,NaN,0"),
    }
}
