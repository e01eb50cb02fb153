//! Kernel regression for the degree-`q` spherical harmonic expansion.
//!
//! Given uniform samples `w_1..w_s` and values `f(w_j)`, the recovered
//! function is
//!
//! ```text
//! y(σ) = Σ_ℓ α_{ℓ,d} / sqrt(s |S^{d-1}|) · Σ_j z_j P_d^ℓ(<w_j, σ>),
//! z    = K† f,   K_ij = Σ_ℓ (α_{ℓ,d} / s) P_d^ℓ(<w_i, w_j>),
//! f_j  = sqrt(|S^{d-1}| / s) · f(w_j).
//! ```
//!
//! `K` is the Gram matrix of the sampled projection onto degree-`≤ q`
//! harmonics, so its rank is at most `β_{q,d}`. The pseudoinverse is
//! applied through a symmetric eigendecomposition with a relative cutoff.

use faer::diag::Diag;
use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd::{self, ComputeEigenvectors};
use faer::{Mat, Par};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::harmonic::{ProblemParams, ZonalSeries};
use crate::sampling::{dot, sample_uniform_sphere, SampleSet};

/// Reproducing kernel `k_{q,d}(t) = Σ_ℓ (α_{ℓ,d} / |S^{d-1}|) P_d^ℓ(t)`.
///
/// At `t = 1` this is `β_{q,d} / |S^{d-1}|`, the (constant) leverage value.
pub fn kernel_value(params: &ProblemParams, t: f64) -> Result<f64> {
    params.kernel_series().eval(t)
}

/// Symmetric `s × s` Gram matrix.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    mat: Mat<f64>,
    params: Option<ProblemParams>,
}

impl GramMatrix {
    /// Wraps an arbitrary symmetric matrix given row-major.
    pub fn from_entries(n: usize, entries: &[f64]) -> Result<Self> {
        if n == 0 || entries.len() != n * n {
            return Err(Error::invalid(format!(
                "{} entries do not form a nonempty {n}×{n} matrix",
                entries.len()
            )));
        }
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (entries[i * n + j], entries[j * n + i]);
                if a != b && !(a.is_nan() && b.is_nan()) {
                    return Err(Error::invalid(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self {
            mat: Mat::from_fn(n, n, |i, j| entries[i * n + j]),
            params: None,
        })
    }

    pub fn size(&self) -> usize {
        self.mat.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mat[(i, j)]
    }

    /// The parameters the matrix was assembled for, if it is a kernel Gram.
    pub fn params(&self) -> Option<&ProblemParams> {
        self.params.as_ref()
    }

    /// `K v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let n = self.size();
        (0..n)
            .map(|i| (0..n).map(|j| self.mat[(i, j)] * v[j]).sum())
            .collect()
    }

    /// Eigenvalues in nondecreasing order.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let n = self.size();
        let mut s = Diag::<f64>::zeros(n);
        let par = Par::Seq;
        let mut mem = MemBuffer::new(evd::self_adjoint_evd_scratch::<f64>(
            n,
            ComputeEigenvectors::No,
            par,
            Default::default(),
        ));
        evd::self_adjoint_evd(
            self.mat.as_ref(),
            s.as_mut(),
            None,
            par,
            MemStack::new(&mut mem),
            Default::default(),
        )
        .map_err(|e| self.evd_failure(e))?;
        Ok((0..n).map(|i| s[i]).collect())
    }

    fn frobenius(&self) -> f64 {
        let n = self.size();
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| self.mat[(i, j)].powi(2))
            .sum::<f64>()
            .sqrt()
    }

    fn evd_failure(&self, e: evd::EvdError) -> Error {
        let n = self.size();
        let min_diag = (0..n)
            .map(|i| self.mat[(i, i)])
            .fold(f64::INFINITY, f64::min);
        Error::Numerical {
            message: format!(
                "symmetric eigendecomposition failed ({e:?}); size {n}, ‖K‖_F = {:e}",
                self.frobenius()
            ),
            condition: Some(self.frobenius() / min_diag.abs()),
        }
    }
}

/// Assembles `K_ij = Σ_ℓ (α_{ℓ,d} / s) P_d^ℓ(<w_i, w_j>)`.
///
/// Each inner product is computed once and the degree sum uses the
/// three-term recurrence, so the cost is `O(s² (d + q))`. Rows are
/// assembled in parallel; the upper triangle is mirrored so the result is
/// exactly symmetric.
pub fn build_gram(points: &SampleSet, params: &ProblemParams) -> Result<GramMatrix> {
    if points.d() != params.d() {
        return Err(Error::invalid(format!(
            "points live in R^{} but params have d = {}",
            points.d(),
            params.d()
        )));
    }
    let s = points.len();
    let series = params.dimension_series();
    let inv_s = 1.0 / s as f64;
    let rows: Vec<Vec<f64>> = (0..s)
        .into_par_iter()
        .map(|i| {
            let wi = points.point(i);
            (i..s)
                .map(|j| {
                    let t = dot(wi, points.point(j)).clamp(-1.0, 1.0);
                    series.eval_clamped(t) * inv_s
                })
                .collect()
        })
        .collect();
    let mat = Mat::from_fn(s, s, |i, j| {
        if i <= j {
            rows[i][j - i]
        } else {
            rows[j][i - j]
        }
    });
    Ok(GramMatrix {
        mat,
        params: Some(params.clone()),
    })
}

/// Sampled right-hand side `f_j = sqrt(|S^{d-1}| / s) · f(w_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleVector {
    values: Vec<f64>,
}

impl SampleVector {
    /// Scales raw oracle values; fails on the first non-finite value.
    pub fn from_oracle_values(params: &ProblemParams, raw: &[f64]) -> Result<Self> {
        if let Some(i) = raw.iter().position(|v| !v.is_finite()) {
            return Err(Error::InputData(format!(
                "oracle returned non-finite value {} at sample point {i}",
                raw[i]
            )));
        }
        let c = (params.area() / raw.len() as f64).sqrt();
        Ok(Self {
            values: raw.iter().map(|v| c * v).collect(),
        })
    }

    /// Wraps an already-scaled vector.
    pub fn from_scaled(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Default relative rank cutoff: `s · ε_machine`.
pub fn default_rank_tol(s: usize) -> f64 {
    s as f64 * f64::EPSILON
}

/// Result of [`pinv_solve`].
#[derive(Debug, Clone)]
pub struct PinvSolution {
    pub z: Vec<f64>,
    /// Number of eigenvalues above the cutoff.
    pub rank: usize,
    pub lambda_max: f64,
    /// Smallest eigenvalue kept, `λ_max / condition`.
    pub lambda_min_kept: f64,
    /// `λ_max / λ_min_kept` over the retained spectrum.
    pub condition: f64,
    /// `‖K z - f‖₂`.
    pub residual_norm: f64,
}

/// `z = K† f` through the symmetric eigendecomposition of `K`.
///
/// Eigenvalues `≤ rank_tol · λ_max` are treated as zero; `rank_tol` defaults
/// to [`default_rank_tol`]. The decomposition is sequential, so the result
/// is bit-reproducible for a fixed input.
pub fn pinv_solve(k: &GramMatrix, f: &[f64], rank_tol: Option<f64>) -> Result<PinvSolution> {
    let n = k.size();
    if f.len() != n {
        return Err(Error::invalid(format!(
            "right-hand side has length {} but K is {n}×{n}",
            f.len()
        )));
    }
    let rank_tol = rank_tol.unwrap_or_else(|| default_rank_tol(n));
    if !(rank_tol >= 0.0) {
        return Err(Error::invalid(format!(
            "rank tolerance {rank_tol} must be nonnegative"
        )));
    }
    if let Some(i) = (0..n * n).find(|&idx| !k.mat[(idx / n, idx % n)].is_finite()) {
        return Err(Error::Numerical {
            message: format!("Gram entry ({}, {}) is not finite", i / n, i % n),
            condition: None,
        });
    }

    let par = Par::Seq;
    let mut u = Mat::<f64>::zeros(n, n);
    let mut s = Diag::<f64>::zeros(n);
    let mut mem = MemBuffer::new(evd::self_adjoint_evd_scratch::<f64>(
        n,
        ComputeEigenvectors::Yes,
        par,
        Default::default(),
    ));
    evd::self_adjoint_evd(
        k.mat.as_ref(),
        s.as_mut(),
        Some(u.as_mut()),
        par,
        MemStack::new(&mut mem),
        Default::default(),
    )
    .map_err(|e| k.evd_failure(e))?;

    // eigenvalues ascend; the retained block is a suffix
    let lambda_max = s[n - 1].max(0.0);
    let cutoff = rank_tol * lambda_max;
    let first_kept = (0..n).find(|&i| s[i] > cutoff).unwrap_or(n);
    let mut z = vec![0.0; n];
    for col in first_kept..n {
        let uc = u.col(col);
        let coef = (0..n).map(|r| uc[r] * f[r]).sum::<f64>() / s[col];
        for r in 0..n {
            z[r] += coef * uc[r];
        }
    }
    let rank = n - first_kept;
    let lambda_min_kept = if rank > 0 { s[first_kept] } else { 0.0 };
    let kz = k.mul_vec(&z);
    let residual_norm = kz
        .iter()
        .zip(f)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(PinvSolution {
        z,
        rank,
        lambda_max,
        lambda_min_kept,
        condition: if rank > 0 {
            lambda_max / lambda_min_kept
        } else {
            f64::INFINITY
        },
        residual_norm,
    })
}

/// Knobs for [`fit_samples`].
#[derive(Debug, Clone, Copy, Default)]
pub struct FitOptions {
    /// Relative eigenvalue cutoff; `None` uses [`default_rank_tol`].
    pub rank_tol: Option<f64>,
}

/// Diagnostics from a fit.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub s: usize,
    pub beta: u64,
    pub rank: usize,
    pub condition: f64,
    pub residual_norm: f64,
}

/// The recovered expansion `y ∈ H^{(q)}(S^{d-1})`.
#[derive(Debug, Clone)]
pub struct ExpansionModel {
    points: SampleSet,
    weights: Vec<f64>,
    params: ProblemParams,
    scale: f64,
    series: ZonalSeries,
}

impl ExpansionModel {
    pub fn new(points: SampleSet, weights: Vec<f64>, params: ProblemParams) -> Result<Self> {
        if points.d() != params.d() {
            return Err(Error::invalid(format!(
                "points live in R^{} but params have d = {}",
                points.d(),
                params.d()
            )));
        }
        if weights.len() != points.len() {
            return Err(Error::invalid(format!(
                "{} weights for {} points",
                weights.len(),
                points.len()
            )));
        }
        let scale = (points.len() as f64 * params.area()).sqrt();
        let series = params.dimension_series();
        Ok(Self {
            points,
            weights,
            params,
            scale,
            series,
        })
    }

    pub fn points(&self) -> &SampleSet {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn params(&self) -> &ProblemParams {
        &self.params
    }

    /// `sqrt(s · |S^{d-1}|)`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `y(σ)`. Costs one inner product per sample point plus an `O(q)`
    /// recurrence, `O(s (d + q))` in total.
    pub fn evaluate(&self, sigma: &[f64]) -> Result<f64> {
        if sigma.len() != self.params.d() {
            return Err(Error::invalid(format!(
                "query point has {} coordinates, model has d = {}",
                sigma.len(),
                self.params.d()
            )));
        }
        Ok(self.evaluate_unchecked(sigma))
    }

    fn evaluate_unchecked(&self, sigma: &[f64]) -> f64 {
        let d = self.params.d();
        let coords = self.points.coords();
        let mut blocks = coords.chunks_exact(4 * d);
        let mut zs = self.weights.chunks_exact(4);
        let mut acc = 0.0;
        for (block, z) in (&mut blocks).zip(&mut zs) {
            let mut t = [0.0; 4];
            for k in 0..4 {
                t[k] = dot(&block[k * d..(k + 1) * d], sigma).clamp(-1.0, 1.0);
            }
            let v = self.series.eval_clamped4(t);
            acc += z[0] * v[0] + z[1] * v[1] + z[2] * v[2] + z[3] * v[3];
        }
        for (w, z) in blocks.remainder().chunks_exact(d).zip(zs.remainder()) {
            acc += z * self.series.eval_clamped(dot(w, sigma).clamp(-1.0, 1.0));
        }
        acc / self.scale
    }

    /// Evaluates at every point of `points` in parallel.
    pub fn evaluate_many(&self, points: &SampleSet) -> Result<Vec<f64>> {
        if points.d() != self.params.d() {
            return Err(Error::invalid(format!(
                "query points live in R^{}, model has d = {}",
                points.d(),
                self.params.d()
            )));
        }
        Ok(points
            .coords()
            .par_chunks_exact(points.d())
            .map(|p| self.evaluate_unchecked(p))
            .collect())
    }
}

/// Runs the regression on given points and raw function values.
pub fn fit_samples(
    points: SampleSet,
    raw_values: &[f64],
    params: &ProblemParams,
    opts: FitOptions,
) -> Result<(ExpansionModel, FitReport)> {
    if raw_values.len() != points.len() {
        return Err(Error::invalid(format!(
            "{} values for {} points",
            raw_values.len(),
            points.len()
        )));
    }
    let f = SampleVector::from_oracle_values(params, raw_values)?;
    let k = build_gram(&points, params)?;
    let sol = pinv_solve(&k, f.values(), opts.rank_tol)?;
    let report = FitReport {
        s: points.len(),
        beta: params.beta(),
        rank: sol.rank,
        condition: sol.condition,
        residual_norm: sol.residual_norm,
    };
    Ok((ExpansionModel::new(points, sol.z, params.clone())?, report))
}

/// Samples `s` uniform points with `seed`, queries `oracle` once per point in
/// sample order, and fits.
pub fn fit_with_report<F>(
    mut oracle: F,
    params: &ProblemParams,
    s: usize,
    seed: u64,
    opts: FitOptions,
) -> Result<(ExpansionModel, FitReport)>
where
    F: FnMut(&[f64]) -> f64,
{
    let points = sample_uniform_sphere(params.d(), s, seed)?;
    let raw: Vec<f64> = points.iter().map(&mut oracle).collect();
    fit_samples(points, &raw, params, opts)
}

/// [`fit_with_report`] with default options, discarding diagnostics.
pub fn fit<F>(oracle: F, params: &ProblemParams, s: usize, seed: u64) -> Result<ExpansionModel>
where
    F: FnMut(&[f64]) -> f64,
{
    fit_with_report(oracle, params, s, seed, FitOptions::default()).map(|(m, _)| m)
}

/// `y(σ)` for a stored model.
pub fn evaluate(model: &ExpansionModel, sigma: &[f64]) -> Result<f64> {
    model.evaluate(sigma)
}

/// Sample count `⌈c · (β / ε²) · (ln β + 1/δ)⌉`, with `ln β` floored at 1.
///
/// `eps` and `delta` must lie in `(0, 1]`.
pub fn sample_count(params: &ProblemParams, eps: f64, delta: f64, c: f64) -> Result<u64> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::invalid(format!("eps = {eps} must lie in (0, 1]")));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid(format!(
            "delta = {delta} must lie in (0, 1]"
        )));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid(format!("c = {c} must be positive")));
    }
    let beta = params.beta() as f64;
    let s = c * beta / (eps * eps) * (beta.ln().max(1.0) + 1.0 / delta);
    Ok((s.ceil() as u64).max(1))
}
