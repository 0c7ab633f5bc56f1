//! Command-line front end for fractional Wishart spectral simulation.
//!
//! One subcommand per task: `simulate` runs a Monte Carlo ensemble and writes
//! its summary; the `verify-*` subcommands, `gaps`, `holder`, and `invmoment`
//! each run one self-contained numerical check; `law-table` tabulates the
//! dilated limit law. Every subcommand accepts `--seed`, `--out`, `--format
//! {json|csv}`, and `--workers`; identical invocations produce identical
//! output bytes, independent of the worker count.
//!
//! Exit codes: 0 when the command succeeds and every enabled check passes,
//! 1 when a check fails (the machine-readable report still goes to standard
//! output), 2 on usage or configuration errors. Progress messages go to
//! standard error only.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::Serialize;

use fwishart::analysis;
use fwishart::limit_law::{self, DilatedMp, MpParams};
use fwishart::mat::Mat;
use fwishart::mc::{self, OutputFormat};
use fwishart::rng::{child_seed, GaussianStream};
use fwishart::spectra;
use fwishart::wishart::{build_wishart, eigh_sorted};
use fwishart::{
    run_ensemble, summarize, EnsembleSummary, Error, FbmMethod, Hurst, Result, Scale, SimConfig,
};

/// Relative tolerance on analytic gradients against central differences.
const GRADIENT_TOL: f64 = 1e-6;
/// Central-difference step for the gradient check.
const GRADIENT_FD_STEP: f64 = 1e-6;
/// Relative tolerance between the entry-sum of second derivatives and its
/// closed form.
const SECOND_SUM_TOL: f64 = 1e-9;
/// Finite-difference step for the evolution-PDE residual.
const PDE_FD_STEP: f64 = 1e-4;

#[derive(Parser)]
#[command(
    name = "fwishart",
    version,
    about = "Simulate fractional Wishart eigenvalue processes and verify their spectral laws"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo ensemble and report spectral distances to the limit law.
    Simulate(SimulateArgs),
    /// Check that scaled empirical spectra approach the dilated limit law.
    VerifyLimit(VerifyLimitArgs),
    /// Check eigenvalue gradients and curvature sums against finite differences.
    VerifyGradients(VerifyGradientsArgs),
    /// Check the evolution PDE satisfied by the limit-law transform.
    VerifyPde(VerifyPdeArgs),
    /// Check the integral evolution equation of the limit-law transform.
    VerifyCst(VerifyCstArgs),
    /// Check that simulated eigenvalues never collide at positive times.
    Gaps(GapsArgs),
    /// Estimate the path regularity exponent from structure functions.
    Holder(HolderArgs),
    /// Estimate the scaling exponent of inverse moments of the top gap.
    Invmoment(InvmomentArgs),
    /// Tabulate density and distribution function of the dilated limit law.
    LawTable(LawTableArgs),
}

/// Flags shared by every subcommand.
#[derive(Args, Clone, Debug)]
struct OutputArgs {
    /// Master seed for all randomness.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Also write the result to this file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Serialization for tables and files: json or csv.
    #[arg(long, value_parser = parse_format)]
    format: Option<OutputFormat>,
    /// Worker threads for ensemble simulation; defaults to the CPU count.
    /// Results do not depend on this value.
    #[arg(long)]
    workers: Option<usize>,
}

impl OutputArgs {
    fn format_or(&self, default: OutputFormat) -> OutputFormat {
        self.format.unwrap_or(default)
    }

    fn workers(&self) -> usize {
        self.workers.unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Matrix dimension (number of eigenvalues).
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Number of driving columns; at least n.
    #[arg(long, default_value_t = 15)]
    p: usize,
    /// Hurst index of the driving noise, in (0, 1).
    #[arg(long, alias = "H", value_parser = parse_hurst, default_value = "0.75")]
    hurst: Hurst,
    /// Time horizon of the simulation grid.
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    /// Number of grid steps.
    #[arg(long, default_value_t = 16)]
    steps: usize,
    /// Number of independent replicas.
    #[arg(long, default_value_t = 10)]
    replicas: usize,
    /// Path sampler: cholesky or circulant.
    #[arg(long, value_parser = parse_method, default_value = "circulant")]
    fbm_method: FbmMethod,
    /// Normalization of X = N^T N: scaled (divide by n) or unscaled.
    #[arg(long, value_parser = parse_scale, default_value = "scaled")]
    scale: Scale,
    /// JSON file holding a p x n offset matrix added to the driving path.
    #[arg(long)]
    offsets: Option<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct VerifyLimitArgs {
    /// Matrix dimension (number of eigenvalues).
    #[arg(long, default_value_t = 150)]
    n: usize,
    /// Number of driving columns; at least n.
    #[arg(long, default_value_t = 300)]
    p: usize,
    /// Hurst index of the driving noise, in (1/2, 1).
    #[arg(long, alias = "H", value_parser = parse_hurst, default_value = "0.75")]
    hurst: Hurst,
    /// Time horizon of the simulation grid.
    #[arg(long, default_value_t = 2.0)]
    horizon: f64,
    /// Number of grid steps.
    #[arg(long, default_value_t = 4)]
    steps: usize,
    /// Number of independent replicas.
    #[arg(long, default_value_t = 5)]
    replicas: usize,
    /// Path sampler: cholesky or circulant.
    #[arg(long, value_parser = parse_method, default_value = "circulant")]
    fbm_method: FbmMethod,
    /// Largest acceptable mean Kolmogorov-Smirnov distance at any positive
    /// grid time.
    #[arg(long, default_value_t = 0.06)]
    threshold: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct VerifyGradientsArgs {
    /// Number of random matrices to test.
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct VerifyPdeArgs {
    /// Largest acceptable PDE residual over the whole check grid.
    #[arg(long, default_value_t = 1e-5)]
    threshold: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct VerifyCstArgs {
    /// Column-to-row ratio c = p / n of the limit law.
    #[arg(long, default_value_t = 2.0)]
    c: f64,
    /// Hurst index, in (1/2, 1).
    #[arg(long, alias = "H", value_parser = parse_hurst, default_value = "0.8")]
    hurst: Hurst,
    /// Comma-separated positive times at which to evaluate the residual.
    #[arg(long, default_value = "0.5,1")]
    times: String,
    /// Largest acceptable residual of the integral evolution equation.
    #[arg(long, default_value_t = 1e-4)]
    threshold: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct GapsArgs {
    /// Matrix dimension (number of eigenvalues); at least 2.
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Number of driving columns; at least n.
    #[arg(long, default_value_t = 15)]
    p: usize,
    /// Hurst index of the driving noise, in (1/2, 1).
    #[arg(long, alias = "H", value_parser = parse_hurst, default_value = "0.75")]
    hurst: Hurst,
    /// Time horizon of the simulation grid.
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    /// Number of grid steps.
    #[arg(long, default_value_t = 128)]
    steps: usize,
    /// Number of independent replicas.
    #[arg(long, default_value_t = 100)]
    replicas: usize,
    /// Path sampler: cholesky or circulant.
    #[arg(long, value_parser = parse_method, default_value = "circulant")]
    fbm_method: FbmMethod,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct HolderArgs {
    /// Matrix dimension (number of eigenvalues).
    #[arg(long, default_value_t = 20)]
    n: usize,
    /// Number of driving columns; at least n.
    #[arg(long, default_value_t = 30)]
    p: usize,
    /// Hurst index of the driving noise, in (1/2, 1).
    #[arg(long, alias = "H", value_parser = parse_hurst, default_value = "0.6")]
    hurst: Hurst,
    /// Time horizon of the simulation grid.
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    /// Number of grid steps.
    #[arg(long, default_value_t = 256)]
    steps: usize,
    /// Number of independent replicas.
    #[arg(long, default_value_t = 500)]
    replicas: usize,
    /// Path sampler: cholesky or circulant.
    #[arg(long, value_parser = parse_method, default_value = "circulant")]
    fbm_method: FbmMethod,
    /// Comma-separated lags in grid steps for the structure function.
    #[arg(long, default_value = "2,4,8,16,32")]
    lags: String,
    /// Acceptable relative deviation of the fitted slope from 4H.
    #[arg(long, default_value_t = 0.1)]
    tolerance: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct InvmomentArgs {
    /// Inverse-moment order r, in (0, 2).
    #[arg(long, default_value_t = 1.0)]
    order: f64,
    /// Matrix dimension (number of eigenvalues); at least 2.
    #[arg(long, default_value_t = 5)]
    n: usize,
    /// Number of driving columns; at least n.
    #[arg(long, default_value_t = 8)]
    p: usize,
    /// Hurst index of the driving noise, in (1/2, 1).
    #[arg(long, alias = "H", value_parser = parse_hurst, default_value = "0.7")]
    hurst: Hurst,
    /// Comma-separated observation scales.
    #[arg(long, default_value = "0.25,0.5,1,2,4")]
    scales: String,
    /// Independent draws of the top gap per scale.
    #[arg(long, default_value_t = 2000)]
    draws: usize,
    /// Acceptable relative deviation of the fitted slope from -2 r H.
    #[arg(long, default_value_t = 0.15)]
    tolerance: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct LawTableArgs {
    /// Column-to-row ratio c of the limit law.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Hurst index, in (0, 1).
    #[arg(long = "H", alias = "hurst", value_parser = parse_hurst, default_value = "0.75")]
    hurst: Hurst,
    /// Positive time of the dilation.
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    /// Number of table rows across the continuous support.
    #[arg(long, default_value_t = 100)]
    points: usize,
    #[command(flatten)]
    output: OutputArgs,
}

fn parse_hurst(s: &str) -> std::result::Result<Hurst, String> {
    let h: f64 = s
        .parse()
        .map_err(|e| format!("invalid Hurst index {s:?}: {e}"))?;
    Hurst::new(h).map_err(|e| e.to_string())
}

fn parse_method(s: &str) -> std::result::Result<FbmMethod, String> {
    s.parse::<FbmMethod>().map_err(|e| e.to_string())
}

fn parse_scale(s: &str) -> std::result::Result<Scale, String> {
    s.parse::<Scale>().map_err(|e| e.to_string())
}

fn parse_format(s: &str) -> std::result::Result<OutputFormat, String> {
    s.parse::<OutputFormat>().map_err(|e| e.to_string())
}

fn parse_f64_list(flag: &str, text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|e| Error::Usage(format!("--{flag}: invalid number {s:?}: {e}")))
        })
        .collect()
}

fn parse_usize_list(flag: &str, text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|e| Error::Usage(format!("--{flag}: invalid integer {s:?}: {e}")))
        })
        .collect()
}

/// Long-memory guard for subcommands that exercise theorems stated only for
/// Hurst indices above 1/2.
fn require_long_memory(command: &str, hurst: Hurst) -> Result<()> {
    if hurst.is_long_memory() {
        Ok(())
    } else {
        Err(Error::Usage(format!(
            "{command} checks a long-memory statement; it needs 1/2 < H < 1, got H = {}",
            hurst.value()
        )))
    }
}

/// Envelope printed to standard output by every subcommand.
#[derive(Serialize)]
struct Report<D: Serialize> {
    command: &'static str,
    pass: bool,
    /// Exact command line that reproduces this result.
    reproduce: String,
    details: D,
}

struct Outcome {
    pass: bool,
    /// Full report, printed to standard output.
    stdout: String,
}

fn render_report<D: Serialize>(report: &Report<D>) -> Result<String> {
    serde_json::to_string_pretty(report)
        .map_err(|e| Error::Numerical(format!("report serialization failed: {e}")))
}

fn write_out(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Writes the report (json) or a command-specific table (csv) to `--out`.
fn write_report_out(args: &OutputArgs, stdout: &str, csv: &str) -> Result<()> {
    if let Some(path) = &args.out {
        let bytes = match args.format_or(OutputFormat::Json) {
            OutputFormat::Json => format!("{stdout}\n"),
            OutputFormat::Csv => csv.to_string(),
        };
        write_out(path, bytes.as_bytes())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(outcome) => {
            println!("{}", outcome.stdout);
            if outcome.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<Outcome> {
    match command {
        Command::Simulate(args) => run_simulate(args),
        Command::VerifyLimit(args) => run_verify_limit(args),
        Command::VerifyGradients(args) => run_verify_gradients(args),
        Command::VerifyPde(args) => run_verify_pde(args),
        Command::VerifyCst(args) => run_verify_cst(args),
        Command::Gaps(args) => run_gaps(args),
        Command::Holder(args) => run_holder(args),
        Command::Invmoment(args) => run_invmoment(args),
        Command::LawTable(args) => run_law_table(args),
    }
}

fn read_offsets(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: format!("expected a JSON array of offset rows: {e}"),
    })
}

/// Runs the ensemble described by `cfg` and persists the summary per `--out`.
fn simulate_and_summarize(cfg: &SimConfig, output: &OutputArgs) -> Result<EnsembleSummary> {
    eprintln!(
        "simulating {} replicas of n = {}, p = {} over {} steps",
        cfg.replicas, cfg.n, cfg.p, cfg.steps
    );
    let started = Instant::now();
    let ensemble = run_ensemble(cfg, output.workers())?;
    let mut summary = summarize(cfg, &ensemble)?;
    summary.wall_clock = started.elapsed().as_secs_f64();
    if let Some(path) = &output.out {
        mc::persist(&summary, path, output.format_or(OutputFormat::Json))?;
    }
    Ok(summary)
}

fn run_simulate(args: SimulateArgs) -> Result<Outcome> {
    let cfg = SimConfig {
        n: args.n,
        p: args.p,
        hurst: args.hurst,
        horizon: args.horizon,
        steps: args.steps,
        replicas: args.replicas,
        seed: args.output.seed,
        fbm_method: args.fbm_method,
        scale: args.scale,
        offsets: args.offsets.as_deref().map(read_offsets).transpose()?,
    };
    let summary = simulate_and_summarize(&cfg, &args.output)?;
    let mut reproduce = format!(
        "fwishart simulate --n {} --p {} --hurst {} --horizon {} --steps {} --replicas {} \
         --fbm-method {} --scale {} --seed {}",
        cfg.n,
        cfg.p,
        cfg.hurst.value(),
        cfg.horizon,
        cfg.steps,
        cfg.replicas,
        method_name(cfg.fbm_method),
        scale_name(cfg.scale),
        cfg.seed
    );
    if let Some(path) = &args.offsets {
        reproduce.push_str(&format!(" --offsets {}", path.display()));
    }
    let stdout = render_report(&Report {
        command: "simulate",
        pass: true,
        reproduce,
        details: summary,
    })?;
    Ok(Outcome { pass: true, stdout })
}

#[derive(Serialize)]
struct LimitDetails {
    threshold: f64,
    /// Largest mean Kolmogorov-Smirnov distance over positive grid times.
    worst_ks_mean: f64,
    summary: EnsembleSummary,
}

fn run_verify_limit(args: VerifyLimitArgs) -> Result<Outcome> {
    require_long_memory("verify-limit", args.hurst)?;
    let cfg = SimConfig {
        n: args.n,
        p: args.p,
        hurst: args.hurst,
        horizon: args.horizon,
        steps: args.steps,
        replicas: args.replicas,
        seed: args.output.seed,
        fbm_method: args.fbm_method,
        scale: Scale::Scaled,
        offsets: None,
    };
    let summary = simulate_and_summarize(&cfg, &args.output)?;
    let worst_ks_mean = summary
        .distances
        .iter()
        .filter(|row| row.time > 0.0)
        .map(|row| row.ks_mean)
        .fold(0.0f64, f64::max);
    let pass = worst_ks_mean <= args.threshold;
    let reproduce = format!(
        "fwishart verify-limit --n {} --p {} --hurst {} --horizon {} --steps {} --replicas {} \
         --fbm-method {} --threshold {} --seed {}",
        cfg.n,
        cfg.p,
        cfg.hurst.value(),
        cfg.horizon,
        cfg.steps,
        cfg.replicas,
        method_name(cfg.fbm_method),
        args.threshold,
        cfg.seed
    );
    let stdout = render_report(&Report {
        command: "verify-limit",
        pass,
        reproduce,
        details: LimitDetails {
            threshold: args.threshold,
            worst_ks_mean,
            summary,
        },
    })?;
    Ok(Outcome { pass, stdout })
}

#[derive(Serialize)]
struct GradientTrial {
    trial: usize,
    n: usize,
    p: usize,
    /// Largest relative deviation between analytic and central-difference
    /// gradient entries over all eigenvalues.
    gradient_rel_err: f64,
    /// Largest relative deviation between the entry-sum of second derivatives
    /// and its closed form.
    sum_rel_err: f64,
}

#[derive(Serialize)]
struct GradientDetails {
    trials: usize,
    /// Trials skipped because the sampled spectrum nearly collided.
    skipped: usize,
    gradient_tol: f64,
    sum_tol: f64,
    max_gradient_rel_err: f64,
    max_sum_rel_err: f64,
    rows: Vec<GradientTrial>,
}

/// Central-difference derivative of the i-th ordered eigenvalue of N^T N with
/// respect to entry (k, h) of N.
fn fd_eigenvalue_derivative(nmat: &Mat, i: usize, k: usize, h: usize) -> Result<f64> {
    let bumped = |delta: f64| -> Result<f64> {
        let mut rows: Vec<Vec<f64>> = (0..nmat.rows()).map(|r| nmat.row(r).to_vec()).collect();
        rows[k][h] += delta;
        let wishart = build_wishart(&Mat::from_rows(&rows)?, Scale::Unscaled)?;
        Ok(eigh_sorted(&wishart.matrix)?.lambda[i])
    };
    let hi = bumped(GRADIENT_FD_STEP)?;
    let lo = bumped(-GRADIENT_FD_STEP)?;
    Ok((hi - lo) / (2.0 * GRADIENT_FD_STEP))
}

fn run_verify_gradients(args: VerifyGradientsArgs) -> Result<Outcome> {
    if args.trials == 0 {
        return Err(Error::Usage("--trials must be positive".into()));
    }
    let stream = GaussianStream::new(args.output.seed);
    let mut rows = Vec::with_capacity(args.trials);
    let mut skipped = 0usize;
    for trial in 0..args.trials {
        // Dimensions n in 2..=6 and p in n..=8, drawn uniformly.
        let u_n = stream.uniform(2 * trial as u64, 0);
        let u_p = stream.uniform(2 * trial as u64, 1);
        let n = 2 + (u_n * 5.0) as usize;
        let p = n + (u_p * (8 - n + 1) as f64) as usize;
        let mut data = vec![0.0; p * n];
        for (idx, slot) in data.iter_mut().enumerate() {
            *slot = stream.normal(2 * trial as u64 + 1, idx as u64);
        }
        let nmat = Mat::from_vec(p, n, data)?;
        let dec = eigh_sorted(&build_wishart(&nmat, Scale::Unscaled)?.matrix)?;

        let mut gradient_rel_err = 0.0f64;
        let mut sum_rel_err = 0.0f64;
        let mut collided = false;
        for i in 0..n {
            let grad = spectra::eig_gradient(&nmat, &dec, i)?;
            for k in 0..p {
                for h in 0..n {
                    let analytic = grad.values[(k, h)];
                    let fd = fd_eigenvalue_derivative(&nmat, i, k, h)?;
                    let rel = (fd - analytic).abs() / analytic.abs().max(1.0);
                    gradient_rel_err = gradient_rel_err.max(rel);
                }
            }
            let closed = match spectra::second_derivative_sum(&dec.lambda, p, i) {
                Ok(v) => v,
                Err(Error::Precondition(_)) => {
                    collided = true;
                    break;
                }
                Err(e) => return Err(e),
            };
            let entry_sum: f64 = spectra::eig_second_diag(&nmat, &dec, i)?.data().iter().sum();
            let rel = (entry_sum - closed).abs() / closed.abs().max(1.0);
            sum_rel_err = sum_rel_err.max(rel);
        }
        if collided {
            skipped += 1;
            eprintln!("trial {trial}: near-degenerate spectrum, skipped");
            continue;
        }
        rows.push(GradientTrial {
            trial,
            n,
            p,
            gradient_rel_err,
            sum_rel_err,
        });
    }
    if rows.is_empty() {
        return Err(Error::Degenerate(
            "every trial was skipped as near-degenerate; rerun with another seed".into(),
        ));
    }
    let max_gradient_rel_err = rows
        .iter()
        .map(|r| r.gradient_rel_err)
        .fold(0.0f64, f64::max);
    let max_sum_rel_err = rows.iter().map(|r| r.sum_rel_err).fold(0.0f64, f64::max);
    let pass = max_gradient_rel_err <= GRADIENT_TOL && max_sum_rel_err <= SECOND_SUM_TOL;
    let reproduce = format!(
        "fwishart verify-gradients --trials {} --seed {}",
        args.trials, args.output.seed
    );
    let mut csv = String::from("trial,n,p,gradient_rel_err,sum_rel_err\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.trial, r.n, r.p, r.gradient_rel_err, r.sum_rel_err
        ));
    }
    let stdout = render_report(&Report {
        command: "verify-gradients",
        pass,
        reproduce,
        details: GradientDetails {
            trials: args.trials,
            skipped,
            gradient_tol: GRADIENT_TOL,
            sum_tol: SECOND_SUM_TOL,
            max_gradient_rel_err,
            max_sum_rel_err,
            rows,
        },
    })?;
    write_report_out(&args.output, &stdout, &csv)?;
    Ok(Outcome { pass, stdout })
}

#[derive(Serialize, Clone, Copy)]
struct PdePoint {
    c: f64,
    hurst: f64,
    t: f64,
    z_re: f64,
    z_im: f64,
    residual: f64,
}

#[derive(Serialize)]
struct PdeDetails {
    threshold: f64,
    step: f64,
    points: usize,
    max_residual: f64,
    worst: PdePoint,
}

fn run_verify_pde(args: VerifyPdeArgs) -> Result<Outcome> {
    let ratios = [0.5, 1.0, 2.0];
    let hursts = [0.6, 0.75, 0.9];
    let times = [0.5, 1.0, 2.0];
    let re_parts = [-1.0, 0.5, 2.0, 4.0];
    let im_parts = [0.5, 2.0];
    let mut rows = Vec::new();
    for &c in &ratios {
        let params = MpParams::new(c)?;
        for &h in &hursts {
            let hurst = Hurst::new(h)?;
            for &t in &times {
                for &re in &re_parts {
                    for &im in &im_parts {
                        let z = Complex64::new(re, im);
                        let residual =
                            limit_law::pde_residual(params, hurst, t, z, PDE_FD_STEP, PDE_FD_STEP)?
                                .norm();
                        rows.push(PdePoint {
                            c,
                            hurst: h,
                            t,
                            z_re: re,
                            z_im: im,
                            residual,
                        });
                    }
                }
            }
        }
    }
    let worst = *rows
        .iter()
        .max_by(|a, b| a.residual.total_cmp(&b.residual))
        .expect("the residual grid is non-empty");
    let pass = worst.residual <= args.threshold;
    let reproduce = format!(
        "fwishart verify-pde --threshold {} --seed {}",
        args.threshold, args.output.seed
    );
    let mut csv = String::from("c,hurst,t,z_re,z_im,residual\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.c, r.hurst, r.t, r.z_re, r.z_im, r.residual
        ));
    }
    let stdout = render_report(&Report {
        command: "verify-pde",
        pass,
        reproduce,
        details: PdeDetails {
            threshold: args.threshold,
            step: PDE_FD_STEP,
            points: rows.len(),
            max_residual: worst.residual,
            worst,
        },
    })?;
    write_report_out(&args.output, &stdout, &csv)?;
    Ok(Outcome { pass, stdout })
}

#[derive(Serialize)]
struct CstPoint {
    t: f64,
    z_re: f64,
    z_im: f64,
    residual: f64,
}

#[derive(Serialize)]
struct CstDetails {
    c: f64,
    hurst: f64,
    threshold: f64,
    max_residual: f64,
    rows: Vec<CstPoint>,
}

fn run_verify_cst(args: VerifyCstArgs) -> Result<Outcome> {
    require_long_memory("verify-cst", args.hurst)?;
    let params = MpParams::new(args.c)?;
    let times = parse_f64_list("times", &args.times)?;
    if times.is_empty() {
        return Err(Error::Usage("--times must list at least one time".into()));
    }
    let z_points = [Complex64::new(0.0, 1.0), Complex64::new(1.0, 1.0)];
    let mut rows = Vec::new();
    for &t in &times {
        for &z in &z_points {
            eprintln!("integral-equation residual at t = {t}, z = {z}");
            let residual = limit_law::cst_residual(params, args.hurst, t, z)?.norm();
            rows.push(CstPoint {
                t,
                z_re: z.re,
                z_im: z.im,
                residual,
            });
        }
    }
    let max_residual = rows.iter().map(|r| r.residual).fold(0.0f64, f64::max);
    let pass = max_residual <= args.threshold;
    let reproduce = format!(
        "fwishart verify-cst --c {} --hurst {} --times {} --threshold {} --seed {}",
        args.c,
        args.hurst.value(),
        args.times,
        args.threshold,
        args.output.seed
    );
    let mut csv = String::from("t,z_re,z_im,residual\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{},{}\n", r.t, r.z_re, r.z_im, r.residual));
    }
    let stdout = render_report(&Report {
        command: "verify-cst",
        pass,
        reproduce,
        details: CstDetails {
            c: args.c,
            hurst: args.hurst.value(),
            threshold: args.threshold,
            max_residual,
            rows,
        },
    })?;
    write_report_out(&args.output, &stdout, &csv)?;
    Ok(Outcome { pass, stdout })
}

#[derive(Serialize)]
struct GapsDetails {
    exact_ties: usize,
    near_degenerate: usize,
    min_gap: f64,
    /// True when every replica's global minimum gap is strictly positive.
    all_minima_positive: bool,
    summary: EnsembleSummary,
}

fn run_gaps(args: GapsArgs) -> Result<Outcome> {
    require_long_memory("gaps", args.hurst)?;
    if args.n < 2 {
        return Err(Error::Usage(
            "gap statistics need at least two eigenvalues".into(),
        ));
    }
    let cfg = SimConfig {
        n: args.n,
        p: args.p,
        hurst: args.hurst,
        horizon: args.horizon,
        steps: args.steps,
        replicas: args.replicas,
        seed: args.output.seed,
        fbm_method: args.fbm_method,
        scale: Scale::Scaled,
        offsets: None,
    };
    let summary = simulate_and_summarize(&cfg, &args.output)?;
    let gaps = summary
        .gaps
        .clone()
        .ok_or_else(|| Error::Degenerate("summary carries no gap report".into()))?;
    let all_minima_positive = gaps.replica_minima.iter().all(|&g| g > 0.0);
    let pass = gaps.exact_ties == 0 && all_minima_positive;
    let reproduce = format!(
        "fwishart gaps --n {} --p {} --hurst {} --horizon {} --steps {} --replicas {} \
         --fbm-method {} --seed {}",
        cfg.n,
        cfg.p,
        cfg.hurst.value(),
        cfg.horizon,
        cfg.steps,
        cfg.replicas,
        method_name(cfg.fbm_method),
        cfg.seed
    );
    let stdout = render_report(&Report {
        command: "gaps",
        pass,
        reproduce,
        details: GapsDetails {
            exact_ties: gaps.exact_ties,
            near_degenerate: gaps.near_degenerate,
            min_gap: gaps.min_gap,
            all_minima_positive,
            summary,
        },
    })?;
    Ok(Outcome { pass, stdout })
}

#[derive(Serialize)]
struct HolderDetails {
    /// Self-similarity predicts a log-log slope of 4H.
    target_slope: f64,
    tolerance: f64,
    slope: f64,
    hurst_estimate: f64,
    summary: EnsembleSummary,
}

fn run_holder(args: HolderArgs) -> Result<Outcome> {
    require_long_memory("holder", args.hurst)?;
    let lags = parse_usize_list("lags", &args.lags)?;
    let cfg = SimConfig {
        n: args.n,
        p: args.p,
        hurst: args.hurst,
        horizon: args.horizon,
        steps: args.steps,
        replicas: args.replicas,
        seed: args.output.seed,
        fbm_method: args.fbm_method,
        scale: Scale::Scaled,
        offsets: None,
    };
    cfg.validate()?;
    eprintln!(
        "simulating {} replicas of n = {}, p = {} over {} steps",
        cfg.replicas, cfg.n, cfg.p, cfg.steps
    );
    let started = Instant::now();
    let ensemble = run_ensemble(&cfg, args.output.workers())?;
    let structure = analysis::structure_function(&ensemble, &lags)?;
    let mut summary = summarize(&cfg, &ensemble)?;
    summary.structure = Some(structure.clone());
    summary.wall_clock = started.elapsed().as_secs_f64();
    if let Some(path) = &args.output.out {
        mc::persist(&summary, path, args.output.format_or(OutputFormat::Json))?;
    }
    let target_slope = 4.0 * args.hurst.value();
    let pass = (structure.slope - target_slope).abs() <= args.tolerance * target_slope;
    let reproduce = format!(
        "fwishart holder --n {} --p {} --hurst {} --horizon {} --steps {} --replicas {} \
         --fbm-method {} --lags {} --tolerance {} --seed {}",
        cfg.n,
        cfg.p,
        cfg.hurst.value(),
        cfg.horizon,
        cfg.steps,
        cfg.replicas,
        method_name(cfg.fbm_method),
        args.lags,
        args.tolerance,
        cfg.seed
    );
    let stdout = render_report(&Report {
        command: "holder",
        pass,
        reproduce,
        details: HolderDetails {
            target_slope,
            tolerance: args.tolerance,
            slope: structure.slope,
            hurst_estimate: structure.hurst_estimate,
            summary,
        },
    })?;
    Ok(Outcome { pass, stdout })
}

#[derive(Serialize)]
struct InvmomentDetails {
    order: f64,
    n: usize,
    p: usize,
    hurst: f64,
    draws: usize,
    /// Self-similarity predicts a log-log slope of -2 r H.
    expected_slope: f64,
    tolerance: f64,
    report: analysis::InverseMomentReport,
}

fn run_invmoment(args: InvmomentArgs) -> Result<Outcome> {
    require_long_memory("invmoment", args.hurst)?;
    if args.n < 2 {
        return Err(Error::Usage(
            "the top gap needs at least two eigenvalues".into(),
        ));
    }
    let scales = parse_f64_list("scales", &args.scales)?;
    let mut data = Vec::with_capacity(scales.len());
    for (idx, &scale) in scales.iter().enumerate() {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Usage(format!(
                "--scales entries must be positive, got {scale}"
            )));
        }
        // One single-step grid per scale; scales get independent seed streams
        // so the fitted slope averages over independent noise.
        let cfg = SimConfig {
            n: args.n,
            p: args.p,
            hurst: args.hurst,
            horizon: scale,
            steps: 1,
            replicas: args.draws,
            seed: child_seed(args.output.seed, 1000 + idx as u64),
            fbm_method: FbmMethod::Circulant,
            scale: Scale::Scaled,
            offsets: None,
        };
        eprintln!("sampling {} top gaps at scale {scale}", args.draws);
        let ensemble = run_ensemble(&cfg, args.output.workers())?;
        let gaps: Vec<f64> = ensemble
            .iter()
            .map(|path| {
                let row = path.row(1);
                row[0] - row[1]
            })
            .collect();
        data.push((scale, gaps));
    }
    let report = analysis::inverse_moment_scaling(args.order, &data)?;
    let expected_slope = -2.0 * args.order * args.hurst.value();
    let pass = (report.slope - expected_slope).abs() <= args.tolerance * expected_slope.abs();
    let reproduce = format!(
        "fwishart invmoment --order {} --n {} --p {} --hurst {} --scales {} --draws {} \
         --tolerance {} --seed {}",
        args.order,
        args.n,
        args.p,
        args.hurst.value(),
        args.scales,
        args.draws,
        args.tolerance,
        args.output.seed
    );
    let mut csv = String::from("scale,mean\n");
    for (s, m) in report.scales.iter().zip(&report.means) {
        csv.push_str(&format!("{s},{m}\n"));
    }
    let stdout = render_report(&Report {
        command: "invmoment",
        pass,
        reproduce,
        details: InvmomentDetails {
            order: args.order,
            n: args.n,
            p: args.p,
            hurst: args.hurst.value(),
            draws: args.draws,
            expected_slope,
            tolerance: args.tolerance,
            report,
        },
    })?;
    write_report_out(&args.output, &stdout, &csv)?;
    Ok(Outcome { pass, stdout })
}

#[derive(Serialize)]
struct LawRow {
    x: f64,
    density: f64,
    cdf: f64,
}

#[derive(Serialize)]
struct LawDetails {
    c: f64,
    hurst: f64,
    t: f64,
    atom: f64,
    support: (f64, f64),
    rows: Vec<LawRow>,
}

fn run_law_table(args: LawTableArgs) -> Result<Outcome> {
    if args.points == 0 {
        return Err(Error::Usage("--points must be positive".into()));
    }
    if !(args.t.is_finite() && args.t > 0.0) {
        return Err(Error::Usage(format!(
            "the law table needs a positive time, got t = {}",
            args.t
        )));
    }
    let law = DilatedMp::new(MpParams::new(args.c)?, args.hurst, args.t)?;
    let (lo, hi) = law.edges();
    let width = (hi - lo) / args.points as f64;
    let mut rows = Vec::with_capacity(args.points);
    for j in 0..args.points {
        let x = lo + (j as f64 + 0.5) * width;
        rows.push(LawRow {
            x,
            density: law.density(x)?,
            cdf: law.cdf(x),
        });
    }
    let mut csv = String::from("x,density,cdf\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{}\n", r.x, r.density, r.cdf));
    }
    let reproduce = format!(
        "fwishart law-table --c {} --H {} --t {} --points {}",
        args.c,
        args.hurst.value(),
        args.t,
        args.points
    );
    let report_json = render_report(&Report {
        command: "law-table",
        pass: true,
        reproduce,
        details: LawDetails {
            c: args.c,
            hurst: args.hurst.value(),
            t: args.t,
            atom: law.atom(),
            support: (lo, hi),
            rows,
        },
    })?;
    // The table itself is the product here, so csv replaces the report on
    // standard output and is the default.
    let format = args.output.format_or(OutputFormat::Csv);
    if let Some(path) = &args.output.out {
        let bytes = match format {
            OutputFormat::Csv => csv.clone(),
            OutputFormat::Json => format!("{report_json}\n"),
        };
        write_out(path, bytes.as_bytes())?;
    }
    let stdout = match format {
        OutputFormat::Csv => csv.trim_end().to_string(),
        OutputFormat::Json => report_json,
    };
    Ok(Outcome { pass: true, stdout })
}

fn method_name(method: FbmMethod) -> &'static str {
    match method {
        FbmMethod::Cholesky => "cholesky",
        FbmMethod::Circulant => "circulant",
    }
}

fn scale_name(scale: Scale) -> &'static str {
    match scale {
        Scale::Scaled => "scaled",
        Scale::Unscaled => "unscaled",
    }
}
