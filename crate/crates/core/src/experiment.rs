//! Recovery experiments: success-probability sweeps over `(d, q, s)` grids
//! and the noisy-recovery ratio probe.
//!
//! Every trial draws its test function, sample points and test points from
//! seeds derived from the master seed and the trial's coordinates, so a
//! sweep is a pure function of its configuration regardless of how many
//! workers run it. The sample points additionally depend on `s`; the test
//! function and test points do not, so cells that differ only in `s` see the
//! same functions.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonic::ProblemParams;
use crate::model_io::write_atomic;
use crate::oracles::{make_bandlimited, ZonalFunction};
use crate::regression::{fit_with_report, FitOptions};
use crate::sampling::{derive_seed_path, derive_trial_seed, sample_uniform_sphere, NormalStream};

/// Success threshold applied to the test error by default.
pub const DEFAULT_THRESHOLD: f64 = 1e-12;
pub const DEFAULT_TEST_POINTS: usize = 100;
pub const DEFAULT_TRIALS: usize = 100;

/// Header of the results CSV.
pub const CSV_HEADER: &str =
    "d,q,s,beta,trials,successes,success_rate,median_error,max_error,wall_time_ms";

/// How a trial's test error is measured on the fresh test points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorMetric {
    /// `max |y - f|`.
    #[default]
    MaxAbs,
    /// `sqrt(mean (y - f)²)`.
    Rms,
    /// `max |y - f| / max |f|`.
    RelMax,
}

impl std::str::FromStr for ErrorMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max_abs" => Ok(Self::MaxAbs),
            "rms" => Ok(Self::Rms),
            "rel_max" => Ok(Self::RelMax),
            other => Err(Error::invalid(format!(
                "unknown error metric {other:?} (expected max_abs, rms or rel_max)"
            ))),
        }
    }
}

/// A stepped inclusive range of sample counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleRange {
    pub min: usize,
    pub max: usize,
    pub step: usize,
}

impl SampleRange {
    pub fn values(&self) -> Vec<usize> {
        (self.min..=self.max).step_by(self.step.max(1)).collect()
    }
}

/// One grid point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub d: usize,
    pub q: usize,
    pub s: usize,
}

/// Sweep configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub d_list: Vec<usize>,
    pub q_min: usize,
    pub q_max: usize,
    pub s_range: SampleRange,
    pub trials: usize,
    pub master_seed: u64,
    pub error_metric: ErrorMetric,
    pub threshold: f64,
    pub test_points: usize,
    /// Worker threads; 0 uses the rayon default.
    pub worker_count: usize,
    /// Record per-cell wall time. Off by default so output is reproducible
    /// byte for byte; when off, `wall_time_ms` is written as 0.
    pub record_timing: bool,
    /// Relative eigenvalue cutoff for the pseudoinverse.
    pub rank_tol: Option<f64>,
}

impl Default for ExperimentConfig {
    /// Desk-scale grid: `d ∈ {3, 4}`, `q ∈ 5..=12`, `s ∈ 40..=1200` step 40.
    fn default() -> Self {
        Self {
            d_list: vec![3, 4],
            q_min: 5,
            q_max: 12,
            s_range: SampleRange {
                min: 40,
                max: 1200,
                step: 40,
            },
            trials: DEFAULT_TRIALS,
            master_seed: 0,
            error_metric: ErrorMetric::MaxAbs,
            threshold: DEFAULT_THRESHOLD,
            test_points: DEFAULT_TEST_POINTS,
            worker_count: 0,
            record_timing: false,
            rank_tol: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::invalid("threshold must be positive"));
        }
        if self.test_points == 0 {
            return Err(Error::invalid("test_points must be at least 1"));
        }
        if self.d_list.is_empty() || self.d_list.iter().any(|&d| d < 2) {
            return Err(Error::invalid("d_list must be nonempty with every d >= 2"));
        }
        if self.q_min > self.q_max {
            return Err(Error::invalid("q range is empty"));
        }
        let s = &self.s_range;
        if s.step == 0 || s.min == 0 || s.min > s.max {
            return Err(Error::invalid(
                "s range must be nonempty with s >= 1 and step >= 1",
            ));
        }
        for &d in &self.d_list {
            ProblemParams::new(d, self.q_max)?;
        }
        Ok(())
    }

    /// Grid cells in canonical `(d, q, s)` order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut d_list = self.d_list.clone();
        d_list.sort_unstable();
        d_list.dedup();
        let s_values = self.s_range.values();
        let mut cells = Vec::new();
        for &d in &d_list {
            for q in self.q_min..=self.q_max {
                cells.extend(s_values.iter().map(|&s| Cell { d, q, s }));
            }
        }
        cells
    }
}

/// Why a trial counted as a failure without producing a test error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureReason {
    Numerical,
    InputData,
    Other,
}

/// Outcome of one recovery trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub error: f64,
    pub success: bool,
    pub failure: Option<FailureReason>,
    pub elapsed_ms: u128,
}

/// Aggregate over the trials of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub d: usize,
    pub q: usize,
    pub s: usize,
    pub beta: u64,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub median_error: f64,
    pub max_error: f64,
    pub wall_time_ms: u64,
    /// Trials that failed inside the solver or oracle. Not part of the CSV.
    #[serde(skip)]
    pub solver_failures: usize,
}

/// Test and sample seeds of one trial.
fn trial_seeds(master: u64, cell: Cell, trial: usize) -> (u64, u64, u64) {
    let base = derive_seed_path(master, &[cell.d as u64, cell.q as u64, trial as u64]);
    (
        derive_trial_seed(base, 0),
        derive_trial_seed(base, 1),
        derive_seed_path(base, &[2, cell.s as u64]),
    )
}

fn test_error(
    metric: ErrorMetric,
    model: &crate::regression::ExpansionModel,
    f: &dyn Fn(&[f64]) -> f64,
    d: usize,
    m: usize,
    seed: u64,
) -> Result<f64> {
    let pts = sample_uniform_sphere(d, m, seed)?;
    let ys = model.evaluate_many(&pts)?;
    let (mut max_err, mut sum_sq, mut max_f) = (0.0f64, 0.0f64, 0.0f64);
    for (p, y) in pts.iter().zip(ys) {
        let fv = f(p);
        let e = (y - fv).abs();
        // NaN must not be swallowed by max
        max_err = if e.is_nan() { f64::NAN } else { max_err.max(e) };
        sum_sq += e * e;
        max_f = max_f.max(fv.abs());
    }
    Ok(match metric {
        ErrorMetric::MaxAbs => max_err,
        ErrorMetric::Rms => (sum_sq / m as f64).sqrt(),
        ErrorMetric::RelMax => max_err / max_f,
    })
}

/// Runs one trial: draw a random bandlimited function of degree `q`, fit
/// with `s` samples, and measure the error on fresh test points.
pub fn run_trial(cfg: &ExperimentConfig, cell: Cell, trial: usize) -> TrialOutcome {
    let start = Instant::now();
    let (fn_seed, test_seed, sample_seed) = trial_seeds(cfg.master_seed, cell, trial);
    let result = ProblemParams::new(cell.d, cell.q).and_then(|params| {
        let f = make_bandlimited(&params, fn_seed);
        let opts = FitOptions {
            rank_tol: cfg.rank_tol,
        };
        let (model, _) = fit_with_report(|w| f.eval(w), &params, cell.s, sample_seed, opts)?;
        test_error(
            cfg.error_metric,
            &model,
            &|w| f.eval(w),
            cell.d,
            cfg.test_points,
            test_seed,
        )
    });
    let elapsed_ms = start.elapsed().as_millis();
    match result {
        Ok(error) => TrialOutcome {
            error,
            success: error <= cfg.threshold,
            failure: None,
            elapsed_ms,
        },
        Err(e) => TrialOutcome {
            error: f64::INFINITY,
            success: false,
            failure: Some(match e {
                Error::Numerical { .. } => FailureReason::Numerical,
                Error::InputData(_) => FailureReason::InputData,
                _ => FailureReason::Other,
            }),
            elapsed_ms,
        },
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn aggregate(
    cfg: &ExperimentConfig,
    cell: Cell,
    outcomes: &[TrialOutcome],
) -> Result<ExperimentResult> {
    let beta = ProblemParams::new(cell.d, cell.q)?.beta();
    let mut errors: Vec<f64> = outcomes.iter().map(|o| o.error).collect();
    errors.sort_by(|a, b| a.total_cmp(b));
    let successes = outcomes.iter().filter(|o| o.success).count();
    let wall: u128 = outcomes.iter().map(|o| o.elapsed_ms).sum();
    Ok(ExperimentResult {
        d: cell.d,
        q: cell.q,
        s: cell.s,
        beta,
        trials: outcomes.len(),
        successes,
        success_rate: successes as f64 / outcomes.len() as f64,
        median_error: median(&errors),
        max_error: *errors.last().unwrap(),
        wall_time_ms: if cfg.record_timing { wall as u64 } else { 0 },
        solver_failures: outcomes.iter().filter(|o| o.failure.is_some()).count(),
    })
}

fn with_pool<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(job))
}

/// Runs `cfg.trials` trials for each cell (in any order, on
/// `cfg.worker_count` workers) and returns results sorted by `(d, q, s)`.
/// The grid fields of `cfg` are ignored.
pub fn run_cells(cfg: &ExperimentConfig, cells: &[Cell]) -> Result<Vec<ExperimentResult>> {
    if cfg.trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let mut cells = cells.to_vec();
    cells.sort_unstable();
    cells.dedup();
    for c in &cells {
        ProblemParams::new(c.d, c.q)?;
        if c.s == 0 {
            return Err(Error::invalid("cell with s = 0"));
        }
    }
    let tasks: Vec<(Cell, usize)> = cells
        .iter()
        .flat_map(|&c| (0..cfg.trials).map(move |t| (c, t)))
        .collect();
    let outcomes: Vec<TrialOutcome> = with_pool(cfg.worker_count, || {
        use rayon::prelude::*;
        tasks
            .par_iter()
            .map(|&(c, t)| run_trial(cfg, c, t))
            .collect()
    })?;
    cells
        .iter()
        .zip(outcomes.chunks_exact(cfg.trials))
        .map(|(&c, o)| aggregate(cfg, c, o))
        .collect()
}

/// Runs the configured `(d, q, s)` grid.
pub fn run_phase_transition(cfg: &ExperimentConfig) -> Result<Vec<ExperimentResult>> {
    cfg.validate()?;
    run_cells(cfg, &cfg.cells())
}

/// Adjacent-`s` pairs `(d, q, s_lo, s_hi)` whose success rate drops by more
/// than `2 / trials`.
pub fn monotonicity_violations(results: &[ExperimentResult]) -> Vec<(usize, usize, usize, usize)> {
    results
        .windows(2)
        .filter(|w| w[0].d == w[1].d && w[0].q == w[1].q)
        .filter(|w| w[0].success_rate - w[1].success_rate > 2.0 / w[0].trials as f64)
        .map(|w| (w[0].d, w[0].q, w[0].s, w[1].s))
        .collect()
}

/// Smallest `s` in the results for `(d, q)` with success rate `>= level`.
pub fn transition_point(
    results: &[ExperimentResult],
    d: usize,
    q: usize,
    level: f64,
) -> Option<usize> {
    results
        .iter()
        .filter(|r| r.d == d && r.q == q && r.success_rate >= level)
        .map(|r| r.s)
        .min()
}

/// Settings for [`run_noisy_recovery`].
#[derive(Debug, Clone)]
pub struct NoisyConfig {
    pub params: ProblemParams,
    pub s: usize,
    /// Coefficient of the degree-`q+1` zonal term added to the bandlimited
    /// part.
    pub high_coef: f64,
    pub trials: usize,
    pub seed: u64,
    /// Monte Carlo points for the two squared norms.
    pub mc_samples: usize,
    /// Overall factor applied to the whole test function.
    pub amplitude: f64,
}

impl NoisyConfig {
    pub fn new(params: ProblemParams, s: usize, high_coef: f64, trials: usize, seed: u64) -> Self {
        Self {
            params,
            s,
            high_coef,
            trials,
            seed,
            mc_samples: 100_000,
            amplitude: 1.0,
        }
    }
}

/// Per-trial numbers from [`run_noisy_recovery`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisyTrial {
    /// `‖y - f^{(q)}‖²` estimated by Monte Carlo.
    pub error_sq: f64,
    /// `‖f - f^{(q)}‖²` estimated on the same points.
    pub residual_sq: f64,
    /// `error_sq / residual_sq`, or `error_sq` itself when the residual is
    /// exactly zero.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyReport {
    pub trials: Vec<NoisyTrial>,
    pub median_ratio: f64,
    pub max_ratio: f64,
}

/// Fits `f = f_low + c·P_d^{q+1}(<·, u>)` at degree `q`, with `f_low` a
/// random bandlimited function, and measures the realized ratio
/// `‖y - f^{(q)}‖² / ‖f - f^{(q)}‖²`.
///
/// The degree-`q+1` zonal term is orthogonal to every harmonic of degree
/// `≤ q`, so `f^{(q)} = f_low` exactly.
pub fn run_noisy_recovery(cfg: &NoisyConfig) -> Result<NoisyReport> {
    if cfg.s == 0 || cfg.trials == 0 || cfg.mc_samples < 2 {
        return Err(Error::invalid(
            "noisy recovery needs s, trials >= 1 and mc_samples >= 2",
        ));
    }
    let params = &cfg.params;
    let (d, q) = (params.d(), params.q());
    let area = params.area();
    let mut trials = Vec::with_capacity(cfg.trials);
    for t in 0..cfg.trials as u64 {
        let base = derive_trial_seed(cfg.seed, t);
        let low = make_bandlimited(params, derive_trial_seed(base, 0)).scaled(cfg.amplitude);
        let high_center = NormalStream::new(derive_trial_seed(base, 1)).sphere_point(d);
        let high = ZonalFunction::new(high_center, vec![(q + 1, cfg.amplitude * cfg.high_coef)])?;
        let f = |w: &[f64]| low.eval(w) + high.eval(w);
        let (model, _) = fit_with_report(
            f,
            params,
            cfg.s,
            derive_trial_seed(base, 2),
            FitOptions::default(),
        )?;

        let pts = sample_uniform_sphere(d, cfg.mc_samples, derive_trial_seed(base, 3))?;
        let ys = model.evaluate_many(&pts)?;
        let (mut err, mut res) = (0.0, 0.0);
        for (p, y) in pts.iter().zip(ys) {
            err += (y - low.eval(p)).powi(2);
            res += high.eval(p).powi(2);
        }
        let n = cfg.mc_samples as f64;
        let (error_sq, residual_sq) = (area * err / n, area * res / n);
        let ratio = if residual_sq > 0.0 {
            error_sq / residual_sq
        } else {
            error_sq
        };
        trials.push(NoisyTrial {
            error_sq,
            residual_sq,
            ratio,
        });
    }
    let mut ratios: Vec<f64> = trials.iter().map(|t| t.ratio).collect();
    ratios.sort_by(|a, b| a.total_cmp(b));
    Ok(NoisyReport {
        median_ratio: median(&ratios),
        max_ratio: *ratios.last().unwrap(),
        trials,
    })
}

/// Renders results as CSV with header [`CSV_HEADER`].
pub fn to_csv_string(results: &[ExperimentResult]) -> Result<String> {
    if results.is_empty() {
        return Err(Error::invalid("no results to write"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in results {
        w.serialize(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::invalid(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Parses CSV written by [`to_csv_string`].
pub fn parse_csv(text: &str) -> Result<Vec<ExperimentResult>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != CSV_HEADER {
        return Err(Error::InputData(format!(
            "unexpected CSV header {header:?}"
        )));
    }
    Ok(r.deserialize()
        .collect::<std::result::Result<Vec<_>, _>>()?)
}

pub fn emit_csv(results: &[ExperimentResult], path: &Path) -> Result<()> {
    let text = to_csv_string(results)?;
    write_atomic(path, text.as_bytes())
}

/// A gnuplot script drawing, for each `d`, the success rate as a `(q, s)`
/// heatmap with the `β_{q,d}` curve on top. The data are inlined as
/// datablocks, so the script is self-contained.
pub fn plot_script(results: &[ExperimentResult]) -> Result<String> {
    if results.is_empty() {
        return Err(Error::invalid("no results to plot"));
    }
    let mut ds: Vec<usize> = results.iter().map(|r| r.d).collect();
    ds.sort_unstable();
    ds.dedup();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# success probability heatmaps; run with: gnuplot -p <this file>"
    );
    for &d in &ds {
        let _ = writeln!(out, "$rate_d{d} << EOD");
        for r in results.iter().filter(|r| r.d == d) {
            let _ = writeln!(out, "{} {} {:.6}", r.q, r.s, r.success_rate);
        }
        let _ = writeln!(out, "EOD");
        let _ = writeln!(out, "$beta_d{d} << EOD");
        let mut qs: Vec<(usize, u64)> = results
            .iter()
            .filter(|r| r.d == d)
            .map(|r| (r.q, r.beta))
            .collect();
        qs.sort_unstable();
        qs.dedup();
        for (q, b) in qs {
            let _ = writeln!(out, "{q} {b}");
        }
        let _ = writeln!(out, "EOD");
    }
    let _ = writeln!(out, "set terminal pngcairo size {},480", 560 * ds.len());
    let _ = writeln!(out, "set output 'phase_transition.png'");
    let _ = writeln!(out, "set multiplot layout 1,{}", ds.len());
    let _ = writeln!(
        out,
        "set xlabel 'q'\nset ylabel 's'\nset cblabel 'success rate'"
    );
    let _ = writeln!(out, "set cbrange [0:1]\nset palette grey");
    for &d in &ds {
        let _ = writeln!(out, "set title 'd = {d}'");
        let _ = writeln!(
            out,
            "plot $rate_d{d} using 1:2:3 with image notitle, \\\n     $beta_d{d} using 1:2 with linespoints lw 2 lc rgb 'red' title 'beta(q,d)'"
        );
    }
    let _ = writeln!(out, "unset multiplot");
    Ok(out)
}

pub fn emit_plot_script(results: &[ExperimentResult], path: &Path) -> Result<()> {
    let text = plot_script(results)?;
    write_atomic(path, text.as_bytes())
}
