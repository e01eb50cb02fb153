//! Dimension counts of spherical harmonic spaces, sphere surface areas, and
//! Gegenbauer polynomials normalized so that `P_d^ℓ(1) = 1`.
//!
//! Two evaluation routes are provided. [`GegenbauerPoly`] evaluates a single
//! degree from its explicit coefficient form
//! `Σ_j c_j t^{ℓ-2j} (1-t²)^j`, and [`ZonalSeries`] evaluates a weighted sum
//! `Σ_ℓ a_ℓ P_d^ℓ(t)` over all degrees at once with the three-term recurrence.
//! The tests check the two against each other.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Largest supported harmonic degree. The coefficient form loses accuracy to
/// cancellation beyond this.
pub const MAX_DEGREE: usize = 64;

/// Arguments with `1 < |t| <= 1 + CLAMP_TOL` are clamped to `±1`.
pub const CLAMP_TOL: f64 = 1e-9;

fn binomial(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k as u128 {
        // acc * (n - k + i) is divisible by i: it is i * C(n - k + i, i).
        acc = acc.checked_mul(n as u128 - k as u128 + i)? / i;
    }
    Some(acc)
}

fn check_dim(d: usize) -> Result<()> {
    if d < 2 {
        return Err(Error::invalid(format!(
            "dimension d = {d} must be at least 2"
        )));
    }
    Ok(())
}

/// Dimension `α_{ℓ,d}` of the space of degree-`ell` spherical harmonics on
/// `S^{d-1}`, in exact integer arithmetic.
pub fn harmonic_dim(ell: usize, d: usize) -> Result<u64> {
    check_dim(d)?;
    let overflow = || Error::invalid(format!("α_{{{ell},{d}}} overflows u64"));
    let value = match ell {
        0 => 1,
        1 => d as u128,
        _ => {
            let (ell, d) = (ell as u64, d as u64);
            let a = binomial(d + ell - 1, ell).ok_or_else(overflow)?;
            let b = binomial(d + ell - 3, ell - 2).ok_or_else(overflow)?;
            a - b
        }
    };
    u64::try_from(value).map_err(|_| overflow())
}

/// Dimension `β_{q,d} = Σ_{ℓ≤q} α_{ℓ,d}` of the degree-`≤ q` harmonic space.
///
/// Computed by direct summation. The closed form
/// `C(d+q-1, q) + C(d+q-2, q-1)` agrees with the sum; a trailing `- 1` in
/// some statements of that identity does not.
pub fn cumulative_dim(q: usize, d: usize) -> Result<u64> {
    check_dim(d)?;
    (0..=q).try_fold(0u64, |acc, ell| {
        acc.checked_add(harmonic_dim(ell, d)?)
            .ok_or_else(|| Error::invalid(format!("β_{{{q},{d}}} overflows u64")))
    })
}

/// `ln Γ(d/2)` for integer `d >= 1`, summed exactly over the half-integer
/// or integer recurrence.
fn ln_gamma_half(d: usize) -> f64 {
    if d.is_multiple_of(2) {
        (1..d / 2).map(|k| (k as f64).ln()).sum()
    } else {
        0.5 * PI.ln() + (0..(d - 1) / 2).map(|k| (k as f64 + 0.5).ln()).sum::<f64>()
    }
}

/// Surface area `|S^{d-1}| = 2 π^{d/2} / Γ(d/2)` of the unit sphere in `R^d`.
pub fn sphere_area(d: usize) -> Result<f64> {
    if d < 1 {
        return Err(Error::invalid("sphere_area needs d >= 1"));
    }
    let ln_area = 2f64.ln() + 0.5 * d as f64 * PI.ln() - ln_gamma_half(d);
    Ok(ln_area.exp())
}

fn clamp_arg(t: f64) -> Result<f64> {
    if !t.is_finite() || t.abs() > 1.0 + CLAMP_TOL {
        return Err(Error::Domain {
            value: t,
            tolerance: CLAMP_TOL,
        });
    }
    Ok(t.clamp(-1.0, 1.0))
}

/// Problem dimensions for a degree-`q` expansion on `S^{d-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemParams {
    d: usize,
    q: usize,
    alpha: Vec<u64>,
    beta: u64,
    area: f64,
    area_dm1: f64,
}

impl ProblemParams {
    pub fn new(d: usize, q: usize) -> Result<Self> {
        check_dim(d)?;
        if q > MAX_DEGREE {
            return Err(Error::invalid(format!(
                "degree q = {q} exceeds the supported maximum {MAX_DEGREE}"
            )));
        }
        let alpha = (0..=q)
            .map(|ell| harmonic_dim(ell, d))
            .collect::<Result<Vec<_>>>()?;
        let beta = alpha
            .iter()
            .try_fold(0u64, |acc, &a| acc.checked_add(a))
            .ok_or_else(|| Error::invalid("β overflows u64"))?;
        Ok(Self {
            d,
            q,
            alpha,
            beta,
            area: sphere_area(d)?,
            area_dm1: sphere_area(d - 1)?,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// `α_{ℓ,d}` for `ℓ = 0..=q`.
    pub fn alpha(&self) -> &[u64] {
        &self.alpha
    }

    pub fn beta(&self) -> u64 {
        self.beta
    }

    /// `|S^{d-1}|`.
    pub fn area(&self) -> f64 {
        self.area
    }

    /// `|S^{d-2}|`, the area of the equatorial sphere.
    pub fn area_dm1(&self) -> f64 {
        self.area_dm1
    }

    /// Recurrence-based evaluator for the reproducing kernel
    /// `k_{q,d}(t) = Σ_ℓ (α_{ℓ,d} / |S^{d-1}|) P_d^ℓ(t)`.
    pub fn kernel_series(&self) -> ZonalSeries {
        let weights = self.alpha.iter().map(|&a| a as f64 / self.area).collect();
        ZonalSeries::new(self.d, weights).expect("params are validated")
    }

    /// Series `Σ_ℓ α_{ℓ,d} P_d^ℓ(t)` without the area normalization.
    pub fn dimension_series(&self) -> ZonalSeries {
        let weights = self.alpha.iter().map(|&a| a as f64).collect();
        ZonalSeries::new(self.d, weights).expect("params are validated")
    }
}

/// Gegenbauer polynomial `P_d^ℓ` in coefficient form, normalized to
/// `P_d^ℓ(1) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GegenbauerPoly {
    d: usize,
    ell: usize,
    coeffs: Vec<f64>,
}

impl GegenbauerPoly {
    pub fn new(d: usize, ell: usize) -> Result<Self> {
        check_dim(d)?;
        if ell > MAX_DEGREE {
            return Err(Error::invalid(format!(
                "degree {ell} exceeds the supported maximum {MAX_DEGREE}"
            )));
        }
        let mut coeffs = Vec::with_capacity(ell / 2 + 1);
        coeffs.push(1.0);
        for j in 0..ell / 2 {
            let num = ((ell - 2 * j) * (ell - 2 * j - 1)) as f64;
            let den = (2 * (j + 1) * (d - 1 + 2 * j)) as f64;
            let next = -num / den * coeffs[j];
            coeffs.push(next);
        }
        Ok(Self { d, ell, coeffs })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn degree(&self) -> usize {
        self.ell
    }

    /// `c_0 ..= c_{⌊ℓ/2⌋}`.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        Ok(self.eval_clamped(clamp_arg(t)?))
    }

    /// Evaluates at `t`, which must already lie in `[-1, 1]`.
    ///
    /// Writing `a = t²`, `b = 1 - t²` and `m = ⌊ℓ/2⌋`, the sum is
    /// `t^{ℓ mod 2} Σ_j c_j a^{m-j} b^j`, accumulated Horner-style in `a`.
    pub fn eval_clamped(&self, t: f64) -> f64 {
        let a = t * t;
        let b = 1.0 - a;
        let mut acc = self.coeffs[0];
        let mut b_pow = 1.0;
        for &c in &self.coeffs[1..] {
            b_pow *= b;
            acc = acc * a + c * b_pow;
        }
        if self.ell % 2 == 1 {
            acc * t
        } else {
            acc
        }
    }
}

/// Builds the coefficients of `P_d^ℓ`.
pub fn gegenbauer_build(d: usize, ell: usize) -> Result<GegenbauerPoly> {
    GegenbauerPoly::new(d, ell)
}

/// Evaluates `p` at `t`, clamping arguments within [`CLAMP_TOL`] of `±1`.
pub fn gegenbauer_eval(p: &GegenbauerPoly, t: f64) -> Result<f64> {
    p.eval(t)
}

/// A weighted sum `Σ_{ℓ=0}^{q} a_ℓ P_d^ℓ(t)`, evaluated in `O(q)` with the
/// normalized three-term recurrence
/// `(ℓ+d-2) P^{ℓ+1} = (2ℓ+d-2) t P^ℓ - ℓ P^{ℓ-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZonalSeries {
    d: usize,
    weights: Vec<f64>,
    // (2ℓ+d-2)/(ℓ+d-2) and ℓ/(ℓ+d-2) for ℓ = 1..q-1
    rec: Vec<(f64, f64)>,
}

impl ZonalSeries {
    pub fn new(d: usize, weights: Vec<f64>) -> Result<Self> {
        check_dim(d)?;
        if weights.is_empty() {
            return Err(Error::invalid("zonal series needs at least one weight"));
        }
        let q = weights.len() - 1;
        let rec = (1..q.max(1))
            .map(|ell| {
                let den = (ell + d - 2) as f64;
                ((2 * ell + d - 2) as f64 / den, ell as f64 / den)
            })
            .collect();
        Ok(Self { d, weights, rec })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn degree(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        Ok(self.eval_clamped(clamp_arg(t)?))
    }

    /// Evaluates at `t`, which must already lie in `[-1, 1]`.
    #[inline]
    pub fn eval_clamped(&self, t: f64) -> f64 {
        let w = &self.weights;
        let mut acc = w[0];
        if w.len() == 1 {
            return acc;
        }
        let (mut prev, mut cur) = (1.0, t);
        acc += w[1] * t;
        for (&(a, b), &wl) in self.rec.iter().zip(&w[2..]) {
            let next = a * t * cur - b * prev;
            prev = cur;
            cur = next;
            acc += wl * cur;
        }
        acc
    }

    /// Four independent evaluations interleaved for instruction-level
    /// parallelism.
    #[inline]
    pub fn eval_clamped4(&self, t: [f64; 4]) -> [f64; 4] {
        let w = &self.weights;
        let mut acc = [w[0]; 4];
        if w.len() == 1 {
            return acc;
        }
        let mut prev = [1.0; 4];
        let mut cur = t;
        for k in 0..4 {
            acc[k] += w[1] * t[k];
        }
        for (&(a, b), &wl) in self.rec.iter().zip(&w[2..]) {
            for k in 0..4 {
                let next = a * t[k] * cur[k] - b * prev[k];
                prev[k] = cur[k];
                cur[k] = next;
                acc[k] += wl * next;
            }
        }
        acc
    }
}
