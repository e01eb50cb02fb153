use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use sphex::experiment::{
    emit_csv, emit_plot_script, run_phase_transition, to_csv_string, ErrorMetric, ExperimentConfig,
    SampleRange,
};
use sphex::oracles::{
    dims_suite, leverage_suite, make_bandlimited, orthogonality_suite, reproducing_suite,
    CheckReport, ZonalFunction, DEFAULT_QUAD_NODES,
};
use sphex::{
    fit_samples, fit_with_report, read_model, write_model, FitOptions, FitReport, ProblemParams,
};

mod input;

#[derive(Parser)]
#[command(
    name = "sphex",
    version,
    about = "Recover the degree-q spherical harmonic expansion of a function on S^{d-1} from samples",
    long_about = "Recover the degree-q spherical harmonic expansion of a black-box function on the \
unit sphere S^{d-1} from s uniformly sampled evaluations.\n\n\
The fit solves z = K⁺f, where K is the s×s Gram matrix of the projection kernel \
k(σ,w) = Σ_{ℓ≤q} α_{ℓ,d}/|S^{d-1}| · P_d^ℓ(<σ,w>) at the sample points, and evaluates \
y(σ) as a weighted sum of zonal kernels centred at the samples.\n\n\
Exit codes: 0 success, 1 validation or usage error, 2 numerical failure or failed check, 3 I/O error."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    Fit(FitArgs),
    Eval(EvalArgs),
    Check(CheckArgs),
    Phase(PhaseArgs),
}

/// Fit a model from function samples and write it as a SHEX file.
///
/// Builds the Gram matrix of the degree-≤q projection kernel at the sample
/// points, solves z = K⁺f by a symmetric eigendecomposition with small
/// eigenvalues truncated, and stores the points and weights. With --oracle
/// the points are s i.i.d. uniform draws from the seeded stream; with
/// --samples-file they are taken as given, one `x_1 .. x_d value` record per
/// line.
#[derive(Args)]
#[command(group(ArgGroup::new("source").required(true).args(["samples_file", "oracle"])))]
struct FitArgs {
    /// Ambient dimension (the sphere is S^{d-1}).
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    d: u64,
    /// Maximum harmonic degree.
    #[arg(long, value_parser = clap::value_parser!(u64).range(0..=64))]
    q: u64,
    /// Text file of `x_1 .. x_d value` records (unit-norm points, `#` comments).
    #[arg(long)]
    samples_file: Option<PathBuf>,
    /// Built-in test function: const, coord1, zonal:Q:SEED or zonal-plus-noise:Q:SEED.
    #[arg(long, requires = "s")]
    oracle: Option<Oracle>,
    /// Number of uniform sample points (with --oracle).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    s: Option<u64>,
    /// Seed of the sampling stream (with --oracle).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Relative eigenvalue cutoff; defaults to s · machine epsilon.
    #[arg(long)]
    rank_tol: Option<f64>,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
}

/// Evaluate a stored model at the points of a file, one value per line.
///
/// Each value is y(σ) = Σ_j z_j Σ_{ℓ≤q} α_{ℓ,d} P_d^ℓ(<w_j,σ>) / sqrt(s·|S^{d-1}|),
/// printed with 17 significant digits.
#[derive(Args)]
struct EvalArgs {
    /// Model file written by `fit`.
    #[arg(long)]
    model: PathBuf,
    /// Text file with one unit-norm point (d reals) per line.
    #[arg(long)]
    points: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Orthogonality,
    Reproducing,
    Leverage,
    Dims,
    All,
}

/// Run numerical validation suites and print one report line per check.
///
/// orthogonality: Gauss-Legendre Gram matrix of P_d^0..P_d^q against
/// |S^{d-1}|/(α_{ℓ,d}|S^{d-2}|). reproducing: Monte Carlo check of
/// P_d^ℓ(<x,y>) = α_{ℓ,d} E_w[P_d^ℓ(<x,w>) P_d^ℓ(<y,w>)] and of cross-degree
/// orthogonality, within 5 standard errors. leverage: kernel diagonal equal to
/// β_{q,d}/|S^{d-1}| at random points. dims: harmonic dimension tables.
/// Exits 0 iff every check passes.
#[derive(Args)]
struct CheckArgs {
    #[arg(long, value_enum)]
    suite: Suite,
    /// Restrict to one dimension (default: a small range per suite).
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    d: Option<u64>,
    /// Maximum degree (default: per suite).
    #[arg(long, value_parser = clap::value_parser!(u64).range(0..=64))]
    q: Option<u64>,
    /// Seed for the randomized suites.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Monte Carlo points per reproducing check.
    #[arg(long, default_value_t = 200_000, value_parser = clap::value_parser!(u64).range(2..))]
    mc_samples: u64,
    /// Random points per leverage check.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    points: u64,
}

/// Sweep a (d, q, s) grid of random recovery trials and report success rates.
///
/// Each trial draws f = Σ_{ℓ≤q} c_ℓ P_d^ℓ(<σ,v>) with v uniform and c_ℓ
/// standard normal, fits it from s uniform samples, and counts a success when
/// the error on fresh test points is at most the threshold. Trial seeds derive
/// from --seed, so the output does not depend on --workers. Writes the CSV
/// (to stdout unless --out-csv is given) and an optional gnuplot script.
#[derive(Args)]
struct PhaseArgs {
    /// Comma-separated dimensions.
    #[arg(long, value_delimiter = ',', default_values_t = [3, 4])]
    d_list: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    q_min: usize,
    #[arg(long, default_value_t = 12)]
    q_max: usize,
    #[arg(long, default_value_t = 40)]
    s_min: usize,
    #[arg(long, default_value_t = 1200)]
    s_max: usize,
    #[arg(long, default_value_t = 40)]
    s_step: usize,
    /// Trials per grid cell.
    #[arg(long, default_value_t = sphex::experiment::DEFAULT_TRIALS)]
    trials: usize,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Success threshold on the test error.
    #[arg(long, default_value_t = sphex::experiment::DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Test error: max_abs, rms or rel_max.
    #[arg(long, default_value = "max_abs")]
    metric: ErrorMetric,
    /// Test points per trial.
    #[arg(long, default_value_t = sphex::experiment::DEFAULT_TEST_POINTS)]
    test_points: usize,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    #[arg(long)]
    out_plot: Option<PathBuf>,
    /// Record per-cell wall time in the CSV (otherwise 0, keeping output reproducible).
    #[arg(long)]
    timing: bool,
}

type BoxedFn = Box<dyn Fn(&[f64]) -> f64>;

#[derive(Clone, Debug)]
enum Oracle {
    Const,
    Coord1,
    Zonal { q: usize, seed: u64 },
    ZonalPlusNoise { q: usize, seed: u64 },
}

impl FromStr for Oracle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let degree_seed = |p: &[&str]| -> Result<(usize, u64), String> {
            let q = p[1]
                .parse()
                .map_err(|_| format!("bad degree {:?} in {s:?}", p[1]))?;
            let seed = p[2]
                .parse()
                .map_err(|_| format!("bad seed {:?} in {s:?}", p[2]))?;
            if q > 63 {
                return Err(format!("oracle degree {q} too large"));
            }
            Ok((q, seed))
        };
        match parts.as_slice() {
            ["const"] => Ok(Oracle::Const),
            ["coord1"] => Ok(Oracle::Coord1),
            ["zonal", _, _] => degree_seed(&parts).map(|(q, seed)| Oracle::Zonal { q, seed }),
            ["zonal-plus-noise", _, _] => {
                degree_seed(&parts).map(|(q, seed)| Oracle::ZonalPlusNoise { q, seed })
            }
            _ => Err(format!(
                "unknown oracle {s:?}; expected const, coord1, zonal:Q:SEED or zonal-plus-noise:Q:SEED"
            )),
        }
    }
}

impl Oracle {
    fn build(&self, d: usize) -> Result<BoxedFn> {
        Ok(match *self {
            Oracle::Const => Box::new(|_| 1.0),
            Oracle::Coord1 => Box::new(|w| w[0]),
            Oracle::Zonal { q, seed } => {
                let f = make_bandlimited(&ProblemParams::new(d, q)?, seed);
                Box::new(move |w| f.eval(w))
            }
            Oracle::ZonalPlusNoise { q, seed } => {
                let low = make_bandlimited(&ProblemParams::new(d, q)?, seed);
                let mut degrees = low.degrees().to_vec();
                degrees.push((q + 1, 1.0));
                let f = ZonalFunction::new(low.center().clone(), degrees)?;
                Box::new(move |w| f.eval(w))
            }
        })
    }
}

/// Fails with an I/O error unless the directory that will hold `path` exists.
fn check_output_dir(path: &Path) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if !dir.is_dir() {
        return Err(sphex::Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "output directory does not exist",
            ),
        }
        .into());
    }
    Ok(())
}

fn report_text(r: &FitReport) -> String {
    format!(
        "s = {}\nbeta = {}\nrank = {}\ncondition = {:.16e}\nresidual_norm = {:.16e}\n",
        r.s, r.beta, r.rank, r.condition, r.residual_norm
    )
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let params = ProblemParams::new(a.d as usize, a.q as usize)?;
    if let Some(t) = a.rank_tol {
        if !(t > 0.0 && t < 1.0) {
            bail!(sphex::Error::InvalidParameter(format!(
                "rank tolerance {t} must lie in (0, 1)"
            )));
        }
    }
    check_output_dir(&a.out)?;
    let opts = FitOptions {
        rank_tol: a.rank_tol,
    };
    let (model, report) = match (&a.samples_file, &a.oracle) {
        (Some(path), _) => {
            let records = input::read_records(path, params.d() + 1, "sample")?;
            let points = input::to_points(&records, params.d())
                .with_context(|| path.display().to_string())?;
            let values: Vec<f64> = records.values.iter().map(|v| v[params.d()]).collect();
            eprintln!(
                "warning: fitting on the supplied points as-is; the recovery guarantee assumes \
                 i.i.d. uniform samples on the sphere"
            );
            fit_samples(points, &values, &params, opts)?
        }
        (None, Some(oracle)) => {
            let f = oracle.build(params.d())?;
            let s = a.s.expect("clap enforces --s with --oracle") as usize;
            fit_with_report(f, &params, s, a.seed, opts)?
        }
        (None, None) => unreachable!("clap enforces one source"),
    };
    write_model(&model, &a.out)?;
    emit(&format!(
        "{}model = {}\n",
        report_text(&report),
        a.out.display()
    ))
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let model = read_model(&a.model)?;
    let d = model.params().d();
    let records = input::read_records(&a.points, d, "point")?;
    let points = input::to_points(&records, d).with_context(|| a.points.display().to_string())?;
    let mut out = String::new();
    for v in model.evaluate_many(&points)? {
        out.push_str(&format!("{v:.16e}\n"));
    }
    emit(&out)
}

fn suite_reports(a: &CheckArgs, suite: Suite) -> Result<Vec<CheckReport>> {
    let dims = |default: Vec<usize>| a.d.map(|d| vec![d as usize]).unwrap_or(default);
    let q = |default: usize| a.q.map(|q| q as usize).unwrap_or(default);
    let mut out = Vec::new();
    match suite {
        Suite::Dims => {
            for d in dims((2..=8).collect()) {
                out.extend(dims_suite(d, q(12))?);
            }
        }
        Suite::Orthogonality => {
            for d in dims(vec![3, 4, 5]) {
                out.extend(orthogonality_suite(d, q(10), DEFAULT_QUAD_NODES)?);
            }
        }
        Suite::Reproducing => {
            for d in dims(vec![3, 4, 5]) {
                out.extend(reproducing_suite(
                    d,
                    q(6),
                    10,
                    a.mc_samples as usize,
                    a.seed ^ d as u64,
                )?);
            }
        }
        Suite::Leverage => {
            for d in dims((2..=6).collect()) {
                out.extend(leverage_suite(
                    d,
                    q(10),
                    a.points as usize,
                    a.seed ^ d as u64,
                )?);
            }
        }
        Suite::All => {
            for s in [
                Suite::Dims,
                Suite::Orthogonality,
                Suite::Reproducing,
                Suite::Leverage,
            ] {
                out.extend(suite_reports(a, s)?);
            }
        }
    }
    Ok(out)
}

fn cmd_check(a: CheckArgs) -> Result<bool> {
    if let (Some(d), q) = (a.d, a.q.unwrap_or(0)) {
        ProblemParams::new(d as usize, q as usize)?;
    }
    let reports = suite_reports(&a, a.suite)?;
    let mut text = String::new();
    for r in &reports {
        text.push_str(&format!("{r}\n"));
    }
    let failed = reports.iter().filter(|r| !r.pass).count();
    text.push_str(&format!(
        "summary: {} checks, {failed} failed\n",
        reports.len()
    ));
    emit(&text)?;
    Ok(failed == 0)
}

fn cmd_phase(a: PhaseArgs) -> Result<()> {
    let cfg = ExperimentConfig {
        d_list: a.d_list,
        q_min: a.q_min,
        q_max: a.q_max,
        s_range: SampleRange {
            min: a.s_min,
            max: a.s_max,
            step: a.s_step,
        },
        trials: a.trials,
        master_seed: a.seed,
        error_metric: a.metric,
        threshold: a.threshold,
        test_points: a.test_points,
        worker_count: a.workers,
        record_timing: a.timing,
        rank_tol: None,
    };
    cfg.validate()?;
    for p in a.out_csv.iter().chain(&a.out_plot) {
        check_output_dir(p)?;
    }
    let results = run_phase_transition(&cfg)?;
    let failures: usize = results.iter().map(|r| r.solver_failures).sum();
    if failures > 0 {
        eprintln!("note: {failures} trials failed inside the solver and were counted as failures");
    }
    if let Some(path) = &a.out_plot {
        emit_plot_script(&results, path)?;
    }
    match &a.out_csv {
        Some(path) => {
            emit_csv(&results, path)?;
            let mut text = String::new();
            for r in &results {
                text.push_str(&format!(
                    "d={} q={} s={} beta={} success_rate={:.2}\n",
                    r.d, r.q, r.s, r.beta, r.success_rate
                ));
            }
            emit(&text)
        }
        None => emit(&to_csv_string(&results)?),
    }
}

/// Writes to stdout, treating a closed pipe as success.
fn emit(text: &str) -> Result<()> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

/// The context chain down to the first library error, whose message
/// already includes its own cause.
fn message(err: &anyhow::Error) -> String {
    let mut parts = Vec::new();
    for cause in err.chain() {
        parts.push(cause.to_string());
        if cause.is::<sphex::Error>() {
            break;
        }
    }
    parts.join(": ")
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<sphex::Error>() {
            return match e {
                sphex::Error::Numerical { .. } => 2,
                sphex::Error::Io { .. } | sphex::Error::Csv(_) => 3,
                _ => 1,
            };
        }
        if cause.is::<std::io::Error>() {
            return 3;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(a).map(|_| true),
        Command::Eval(a) => cmd_eval(a).map(|_| true),
        Command::Check(a) => cmd_check(a),
        Command::Phase(a) => cmd_phase(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {}", message(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
