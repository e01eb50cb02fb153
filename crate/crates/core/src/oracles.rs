//! Independent numerical checks of the identities the regression relies on:
//! Monte Carlo inner products on the sphere, Gauss–Legendre orthogonality of
//! the Gegenbauer polynomials, the zonal reproducing property, and the
//! constant value of the leverage function.
//!
//! Reports render as `check_name, params, value, target, tolerance, PASS|FAIL`.

use std::fmt;
use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;

use crate::error::{Error, Result};
use crate::harmonic::{
    cumulative_dim, gegenbauer_build, harmonic_dim, sphere_area, ProblemParams, ZonalSeries,
    MAX_DEGREE,
};
use crate::regression::kernel_value;
use crate::sampling::{derive_trial_seed, NormalStream, SpherePoint};

/// Monte Carlo verdicts pass within this many standard errors.
pub const MC_SIGMAS: f64 = 5.0;

/// Nodes per Gauss–Legendre panel.
pub const PANEL_ORDER: usize = 32;
/// Default total node count: 16 panels of 32 nodes.
pub const DEFAULT_QUAD_NODES: usize = 16 * PANEL_ORDER;

/// One line of a check report.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub params: String,
    pub value: f64,
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckReport {
    fn new(
        name: &str,
        params: String,
        value: f64,
        target: f64,
        tolerance: f64,
        pass: bool,
    ) -> Self {
        Self {
            name: name.to_string(),
            params,
            value,
            target,
            tolerance,
            pass,
        }
    }

    fn abs(name: &str, params: String, value: f64, target: f64, tolerance: f64) -> Self {
        let pass = (value - target).abs() <= tolerance;
        Self::new(name, params, value, target, tolerance, pass)
    }

    fn rel(name: &str, params: String, value: f64, target: f64, tolerance: f64) -> Self {
        let pass = (value - target).abs() <= tolerance * target.abs();
        Self::new(name, params, value, target, tolerance, pass)
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}, {}, {:.16e}, {:.16e}, {:.16e}, {}",
            self.name,
            self.params,
            self.value,
            self.target,
            self.tolerance,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

/// `x ↦ Σ c_ℓ P_d^ℓ(<x, center>)`.
#[derive(Debug, Clone)]
pub struct ZonalFunction {
    center: SpherePoint,
    degrees: Vec<(usize, f64)>,
    params: ProblemParams,
    series: ZonalSeries,
}

impl ZonalFunction {
    /// `degrees` lists `(ℓ, c_ℓ)` pairs; repeated degrees add up.
    pub fn new(center: SpherePoint, degrees: Vec<(usize, f64)>) -> Result<Self> {
        let max_deg = degrees
            .iter()
            .map(|&(l, _)| l)
            .max()
            .ok_or_else(|| Error::invalid("zonal function needs at least one degree"))?;
        let params = ProblemParams::new(center.d(), max_deg)?;
        let mut weights = vec![0.0; max_deg + 1];
        for &(l, c) in &degrees {
            weights[l] += c;
        }
        let series = ZonalSeries::new(center.d(), weights)?;
        Ok(Self {
            center,
            degrees,
            params,
            series,
        })
    }

    pub fn center(&self) -> &SpherePoint {
        &self.center
    }

    pub fn degrees(&self) -> &[(usize, f64)] {
        &self.degrees
    }

    /// Parameters spanning degrees `0..=max ℓ` in the function's dimension.
    pub fn params(&self) -> &ProblemParams {
        &self.params
    }

    pub fn is_bandlimited(&self, q: usize) -> bool {
        self.degrees.iter().all(|&(l, _)| l <= q)
    }

    /// Value at a point of the sphere (`x` must have the center's dimension).
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.series
            .eval_clamped(self.center.dot(x).clamp(-1.0, 1.0))
    }

    /// The same function multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let degrees = self.degrees.iter().map(|&(l, c)| (l, c * factor)).collect();
        Self::new(self.center.clone(), degrees).expect("scaling keeps a valid function")
    }
}

/// Random bandlimited test function `Σ_{ℓ≤q} c_ℓ P_d^ℓ(<σ, v>)` with
/// `v ~ U(S^{d-1})` and `c_ℓ ~ N(0, 1)` i.i.d.
///
/// Draws `v` first, then `c_0..c_q`, from one pinned stream.
pub fn make_bandlimited(params: &ProblemParams, seed: u64) -> ZonalFunction {
    let mut stream = NormalStream::new(seed);
    let center = stream.sphere_point(params.d());
    let degrees = (0..=params.q()).map(|l| (l, stream.normal())).collect();
    ZonalFunction::new(center, degrees).expect("params are validated")
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MCEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n: usize,
    pub seed: u64,
}

/// Estimates `<f, g> = |S^{d-1}| · E_w[f(w) g(w)]` from `n` uniform points.
pub fn mc_inner_product<F, G>(f: F, g: G, d: usize, n: usize, seed: u64) -> Result<MCEstimate>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> f64,
{
    if n < 2 {
        return Err(Error::invalid("Monte Carlo estimate needs n >= 2"));
    }
    if d < 2 {
        return Err(Error::invalid(format!(
            "dimension d = {d} must be at least 2"
        )));
    }
    let area = sphere_area(d)?;
    let mut stream = NormalStream::new(seed);
    let mut w = vec![0.0; d];
    // Welford
    let (mut mean, mut m2) = (0.0f64, 0.0f64);
    for i in 0..n {
        stream.sphere_point_into(&mut w);
        let v = f(&w) * g(&w);
        if !v.is_finite() {
            return Err(Error::InputData(format!(
                "non-finite integrand at sample {i}"
            )));
        }
        let delta = v - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (v - mean);
    }
    let var = m2 / (n - 1) as f64;
    Ok(MCEstimate {
        value: area * mean,
        std_error: area * (var / n as f64).sqrt(),
        n,
        seed,
    })
}

fn check_degree(ell: usize) -> Result<()> {
    if ell > MAX_DEGREE {
        return Err(Error::invalid(format!("degree {ell} exceeds {MAX_DEGREE}")));
    }
    Ok(())
}

/// Checks `P_d^ℓ(<x,y>) = α_{ℓ,d} · E_w[P_d^ℓ(<x,w>) P_d^ℓ(<y,w>)]` by Monte
/// Carlo; passes within [`MC_SIGMAS`] standard errors.
pub fn check_reproducing(
    params: &ProblemParams,
    ell: usize,
    x: &SpherePoint,
    y: &SpherePoint,
    n: usize,
    seed: u64,
) -> Result<CheckReport> {
    check_degree(ell)?;
    let d = params.d();
    if x.d() != d || y.d() != d {
        return Err(Error::invalid("points do not match the dimension"));
    }
    let p = gegenbauer_build(d, ell)?;
    let alpha = harmonic_dim(ell, d)? as f64;
    let est = mc_inner_product(
        |w| p.eval_clamped(x.dot(w).clamp(-1.0, 1.0)),
        |w| p.eval_clamped(y.dot(w).clamp(-1.0, 1.0)),
        d,
        n,
        seed,
    )?;
    let value = alpha * est.value / params.area();
    let se = alpha * est.std_error / params.area();
    let target = p.eval(x.dot(y.coords()))?;
    Ok(CheckReport::abs(
        "reproducing",
        format!("d={d} l={ell} n={n} se={se:.3e}"),
        value,
        target,
        MC_SIGMAS * se,
    ))
}

/// Cross-degree check: `<P_d^ℓ(<x,·>), P_d^ℓ'(<y,·>)> = 0` for `ℓ ≠ ℓ'`,
/// within [`MC_SIGMAS`] standard errors.
pub fn check_cross_degree(
    d: usize,
    ell: usize,
    ell2: usize,
    x: &SpherePoint,
    y: &SpherePoint,
    n: usize,
    seed: u64,
) -> Result<CheckReport> {
    check_degree(ell.max(ell2))?;
    let p = gegenbauer_build(d, ell)?;
    let p2 = gegenbauer_build(d, ell2)?;
    let est = mc_inner_product(
        |w| p.eval_clamped(x.dot(w).clamp(-1.0, 1.0)),
        |w| p2.eval_clamped(y.dot(w).clamp(-1.0, 1.0)),
        d,
        n,
        seed,
    )?;
    Ok(CheckReport::abs(
        "cross_degree",
        format!("d={d} l={ell} l'={ell2} n={n}"),
        est.value,
        0.0,
        MC_SIGMAS * est.std_error,
    ))
}

/// Value of a composite Gauss–Legendre integral and any accuracy warning.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub warning: Option<String>,
}

fn panel_rule() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(NonZeroUsize::new(PANEL_ORDER).unwrap()))
}

/// `∫_{-1}^{1} P_d^ℓ(t) P_d^ℓ'(t) (1-t²)^{(d-3)/2} dt`.
///
/// With `t = cos θ` the integrand becomes `P P' sin^{d-2} θ` on `[0, π]`,
/// a trigonometric polynomial with no endpoint singularity even for `d = 2`.
/// It is integrated with `⌈nodes / 32⌉` panels of 32-point Gauss–Legendre.
pub fn quad_orthogonality(d: usize, ell: usize, ell2: usize, nodes: usize) -> Result<QuadResult> {
    if nodes < 64 {
        return Err(Error::invalid(format!(
            "quadrature needs at least 64 nodes, got {nodes}"
        )));
    }
    check_degree(ell.max(ell2))?;
    let p = gegenbauer_build(d, ell)?;
    let p2 = gegenbauer_build(d, ell2)?;
    let panels = nodes.div_ceil(PANEL_ORDER);
    let h = std::f64::consts::PI / panels as f64;
    let rule = panel_rule();
    let power = (d - 2) as i32;
    let value = (0..panels)
        .map(|k| {
            let a = k as f64 * h;
            rule.integrate(a, a + h, |theta| {
                let t = theta.cos();
                p.eval_clamped(t) * p2.eval_clamped(t) * theta.sin().powi(power)
            })
        })
        .sum();
    let trig_degree = ell + ell2 + d - 2;
    let warning = (2 * trig_degree > panels * PANEL_ORDER).then(|| {
        format!(
            "{} nodes may under-resolve a degree-{trig_degree} trigonometric integrand",
            panels * PANEL_ORDER
        )
    });
    Ok(QuadResult { value, warning })
}

/// `|S^{d-1}| / (α_{ℓ,d} |S^{d-2}|)`, the squared weighted norm of `P_d^ℓ`.
pub fn gegenbauer_norm_sq(d: usize, ell: usize) -> Result<f64> {
    Ok(sphere_area(d)? / (harmonic_dim(ell, d)? as f64 * sphere_area(d - 1)?))
}

/// The leverage value `τ_q(w) = k_{q,d}(w, w) = β_{q,d} / |S^{d-1}|`.
///
/// Since `<w, w> = 1` on the sphere, `w` only fixes the dimension: the value
/// is the kernel at `t = 1` and does not depend on which point is passed.
pub fn check_leverage_constant(params: &ProblemParams, w: &SpherePoint) -> Result<f64> {
    if w.d() != params.d() {
        return Err(Error::invalid("point does not match the dimension"));
    }
    kernel_value(params, 1.0)
}

fn binom(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    (1..=k as u128).fold(1u128, |acc, i| acc * (n as u128 + 1 - i) / i)
}

/// Dimension tables for `d` and `ℓ ≤ q`: `α_0 = 1`, `α_1 = d`, positivity,
/// `β = C(d+q-1, q) + C(d+q-2, q-1)`, and `β = (q+1)²` when `d = 3`.
pub fn dims_suite(d: usize, q: usize) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();
    let p = format!("d={d}");
    out.push(CheckReport::abs(
        "alpha0",
        p.clone(),
        harmonic_dim(0, d)? as f64,
        1.0,
        0.0,
    ));
    out.push(CheckReport::abs(
        "alpha1",
        p,
        harmonic_dim(1, d)? as f64,
        d as f64,
        0.0,
    ));
    for qq in 0..=q {
        let a = harmonic_dim(qq, d)?;
        out.push(CheckReport::new(
            "alpha_positive",
            format!("d={d} l={qq}"),
            a as f64,
            1.0,
            0.0,
            a >= 1,
        ));
        let beta = cumulative_dim(qq, d)?;
        let closed = if qq == 0 {
            1
        } else {
            binom((d + qq - 1) as u64, qq as u64) + binom((d + qq - 2) as u64, (qq - 1) as u64)
        };
        out.push(CheckReport::abs(
            "beta_identity",
            format!("d={d} q={qq}"),
            beta as f64,
            closed as f64,
            0.0,
        ));
        if d == 3 {
            out.push(CheckReport::abs(
                "beta_d3_square",
                format!("q={qq}"),
                beta as f64,
                ((qq + 1) * (qq + 1)) as f64,
                0.0,
            ));
        }
    }
    Ok(out)
}

/// Quadrature Gram of `P_d^0..P_d^q`: off-diagonal entries within `1e-10`
/// of zero, diagonal entries within `1e-9` relative of
/// [`gegenbauer_norm_sq`].
pub fn orthogonality_suite(d: usize, q: usize, nodes: usize) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();
    for l in 0..=q {
        for l2 in l..=q {
            let r = quad_orthogonality(d, l, l2, nodes)?;
            let params = format!("d={d} l={l} l'={l2}");
            out.push(if l == l2 {
                CheckReport::rel(
                    "orthogonality_diag",
                    params,
                    r.value,
                    gegenbauer_norm_sq(d, l)?,
                    1e-9,
                )
            } else {
                CheckReport::abs("orthogonality_offdiag", params, r.value, 0.0, 1e-10)
            });
        }
    }
    Ok(out)
}

/// `checks` randomized reproducing-property checks with `ℓ ≤ q`, plus as
/// many cross-degree checks.
pub fn reproducing_suite(
    d: usize,
    q: usize,
    checks: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<CheckReport>> {
    let params = ProblemParams::new(d, q)?;
    let mut out = Vec::with_capacity(2 * checks);
    for i in 0..checks as u64 {
        let mut st = NormalStream::new(derive_trial_seed(seed, 2 * i));
        let x = st.sphere_point(d);
        let y = st.sphere_point(d);
        let ell = (st.uniform() * (q + 1) as f64) as usize;
        out.push(check_reproducing(
            &params,
            ell.min(q),
            &x,
            &y,
            n,
            derive_trial_seed(seed, 2 * i + 1),
        )?);
        if q >= 1 {
            let l2 = (ell.min(q) + 1 + (st.uniform() * q as f64) as usize) % (q + 1);
            out.push(check_cross_degree(
                d,
                ell.min(q),
                l2,
                &x,
                &y,
                n,
                derive_trial_seed(!seed, i),
            )?);
        }
    }
    Ok(out)
}

/// Leverage value at `points` random points of `S^{d-1}` against
/// `β_{q,d} / |S^{d-1}|` (relative `1e-12`), plus an exact equality check
/// across the points.
pub fn leverage_suite(d: usize, q: usize, points: usize, seed: u64) -> Result<Vec<CheckReport>> {
    let params = ProblemParams::new(d, q)?;
    let target = cumulative_dim(q, d)? as f64 / sphere_area(d)?;
    let mut st = NormalStream::new(seed);
    let mut out = Vec::new();
    let mut first = None;
    for _ in 0..points {
        let w = st.sphere_point(d);
        let v = check_leverage_constant(&params, &w)?;
        out.push(CheckReport::rel(
            "leverage",
            format!("d={d} q={q}"),
            v,
            target,
            1e-12,
        ));
        let f = *first.get_or_insert(v);
        out.push(CheckReport::new(
            "leverage_constant",
            format!("d={d} q={q}"),
            v,
            f,
            0.0,
            v == f,
        ));
    }
    Ok(out)
}
