//! Seeded uniform sampling on `S^{d-1}`.
//!
//! The stream is pinned so that other implementations can reproduce it bit
//! for bit:
//!
//! 1. A `xoshiro256++` generator is seeded from the 64-bit seed through
//!    SplitMix64 (the reference `seed_from_u64` expansion).
//! 2. Uniforms are `(next_u64() >> 11) * 2^-53`, in `[0, 1)`.
//! 3. Standard normals come from the Marsaglia polar method: draw
//!    `u = 2U - 1`, `v = 2U - 1` until `0 < u² + v² < 1`, then return
//!    `u·m` and keep `v·m` as the spare for the next call, with
//!    `m = sqrt(-2 ln(u²+v²) / (u²+v²))`. The spare carries over between
//!    points.
//! 4. A point is `d` consecutive normals divided by their Euclidean norm. A
//!    vector with norm below `1e-150` is discarded and `d` fresh normals are
//!    drawn.

use rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};

/// Tolerance on `| ‖x‖ - 1 |` for externally supplied points.
pub const UNIT_NORM_TOL: f64 = 1e-9;

const DEGENERATE_NORM: f64 = 1e-150;
const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix_finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the `trial_index`-th independent stream under `master_seed`.
///
/// Both arguments pass through the SplitMix64 finalizer, a bijection on
/// `u64`, so distinct indices under one master never collide.
pub fn derive_trial_seed(master_seed: u64, trial_index: u64) -> u64 {
    let idx = splitmix_finalize(trial_index.wrapping_add(GOLDEN_GAMMA));
    splitmix_finalize(master_seed.wrapping_add(GOLDEN_GAMMA) ^ idx)
}

/// Folds [`derive_trial_seed`] over a path of indices.
pub fn derive_seed_path(master_seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(master_seed, |s, &i| derive_trial_seed(s, i))
}

/// Uniform and standard-normal draws from the pinned stream.
#[derive(Debug, Clone)]
pub struct NormalStream {
    rng: Xoshiro256PlusPlus,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: Xoshiro256PlusPlus::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let m = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * m);
                return u * m;
            }
        }
    }

    /// Writes one uniform point of `S^{d-1}` into `out`.
    pub fn sphere_point_into(&mut self, out: &mut [f64]) {
        loop {
            for x in out.iter_mut() {
                *x = self.normal();
            }
            let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm >= DEGENERATE_NORM {
                out.iter_mut().for_each(|x| *x /= norm);
                return;
            }
        }
    }

    pub fn sphere_point(&mut self, d: usize) -> SpherePoint {
        let mut coords = vec![0.0; d];
        self.sphere_point_into(&mut coords);
        SpherePoint(coords)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A unit vector in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpherePoint(Vec<f64>);

impl SpherePoint {
    /// Accepts `coords` if its norm is within [`UNIT_NORM_TOL`] of 1.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        check_unit(&coords)?;
        Ok(Self(coords))
    }

    /// Scales `coords` onto the sphere.
    pub fn normalized(mut coords: Vec<f64>) -> Result<Self> {
        let norm = dot(&coords, &coords).sqrt();
        if !(norm.is_finite() && norm >= DEGENERATE_NORM) {
            return Err(Error::invalid(format!(
                "cannot normalize vector of norm {norm}"
            )));
        }
        coords.iter_mut().for_each(|x| *x /= norm);
        Ok(Self(coords))
    }

    /// The unit vector along axis `axis` of `R^d`.
    pub fn basis(d: usize, axis: usize) -> Self {
        let mut coords = vec![0.0; d];
        coords[axis] = 1.0;
        Self(coords)
    }

    pub fn d(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        dot(&self.0, other)
    }
}

impl AsRef<[f64]> for SpherePoint {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

fn check_unit(coords: &[f64]) -> Result<()> {
    let norm = dot(coords, coords).sqrt();
    if !((norm - 1.0).abs() <= UNIT_NORM_TOL) {
        return Err(Error::InputData(format!(
            "point is not on the unit sphere (norm {norm})"
        )));
    }
    Ok(())
}

/// An ordered set of points on `S^{d-1}`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    d: usize,
    seed: Option<u64>,
    coords: Vec<f64>,
}

impl SampleSet {
    /// Wraps externally supplied points, validating each norm.
    pub fn from_coords(d: usize, coords: Vec<f64>) -> Result<Self> {
        if d < 2 {
            return Err(Error::invalid(format!(
                "dimension d = {d} must be at least 2"
            )));
        }
        if coords.is_empty() || !coords.len().is_multiple_of(d) {
            return Err(Error::invalid(format!(
                "{} coordinates do not form a nonempty set of {d}-vectors",
                coords.len()
            )));
        }
        for (i, p) in coords.chunks_exact(d).enumerate() {
            check_unit(p).map_err(|e| Error::InputData(format!("point {i}: {e}")))?;
        }
        Ok(Self {
            d,
            seed: None,
            coords,
        })
    }

    /// Wraps coordinates without validation; used by the model reader, which
    /// must reproduce stored bits exactly.
    pub(crate) fn from_raw(d: usize, coords: Vec<f64>) -> Self {
        Self {
            d,
            seed: None,
            coords,
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// The seed the set was drawn with, or `None` for supplied points.
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.d)
    }

    /// All coordinates, row-major.
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }
}

/// Draws `n` i.i.d. uniform points on `S^{d-1}` from the pinned stream.
pub fn sample_uniform_sphere(d: usize, n: usize, seed: u64) -> Result<SampleSet> {
    if d < 2 {
        return Err(Error::invalid(format!(
            "dimension d = {d} must be at least 2"
        )));
    }
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let mut stream = NormalStream::new(seed);
    let mut coords = vec![0.0; n * d];
    for p in coords.chunks_exact_mut(d) {
        stream.sphere_point_into(p);
    }
    Ok(SampleSet {
        d,
        seed: Some(seed),
        coords,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn points_are_unit() {
        let s = sample_uniform_sphere(7, 500, 3).unwrap();
        assert_eq!(s.len(), 500);
        for p in s.iter() {
            assert!((dot(p, p).sqrt() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(sample_uniform_sphere(1, 5, 0).is_err());
        assert!(sample_uniform_sphere(3, 0, 0).is_err());
    }

    #[test]
    fn regeneration_is_bit_identical() {
        let a = sample_uniform_sphere(4, 1000, 99).unwrap();
        let b = sample_uniform_sphere(4, 1000, 99).unwrap();
        assert_eq!(a, b);
        let c = sample_uniform_sphere(4, 1000, 100).unwrap();
        assert_ne!(a.coords(), c.coords());
    }

    #[test]
    fn sample_mean_is_near_zero() {
        let n = 10_000;
        let s = sample_uniform_sphere(3, n, 2024).unwrap();
        let mut mean = [0.0; 3];
        for p in s.iter() {
            for k in 0..3 {
                mean[k] += p[k] / n as f64;
            }
        }
        assert!(dot(&mean, &mean).sqrt() <= 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn second_moment_is_isotropic() {
        let (d, n) = (4, 20_000);
        let s = sample_uniform_sphere(d, n, 77).unwrap();
        let mut m = vec![0.0; d * d];
        for p in s.iter() {
            for i in 0..d {
                for j in 0..d {
                    m[i * d + j] += p[i] * p[j] / n as f64;
                }
            }
        }
        for i in 0..d {
            for j in 0..d {
                let target = if i == j { 1.0 / d as f64 } else { 0.0 };
                assert!(
                    (m[i * d + j] - target).abs() <= 0.01,
                    "entry ({i},{j}) = {}",
                    m[i * d + j]
                );
            }
        }
    }

    #[test]
    fn trial_seeds() {
        assert_eq!(derive_trial_seed(5, 9), derive_trial_seed(5, 9));
        assert_ne!(derive_trial_seed(5, 0), derive_trial_seed(6, 0));
        let mut seen = HashSet::with_capacity(1_000_000);
        for i in 0..1_000_000u64 {
            assert!(seen.insert(derive_trial_seed(42, i)), "collision at {i}");
        }
    }

    #[test]
    fn normals_have_unit_variance() {
        let mut st = NormalStream::new(8);
        let n = 200_000;
        let (mut m1, mut m2) = (0.0, 0.0);
        for _ in 0..n {
            let z = st.normal();
            m1 += z;
            m2 += z * z;
        }
        m1 /= n as f64;
        m2 /= n as f64;
        assert!(m1.abs() < 0.01);
        assert!((m2 - 1.0).abs() < 0.02);
    }

    #[test]
    fn supplied_points_are_validated() {
        assert!(SampleSet::from_coords(2, vec![1.0, 0.0, 0.0, 1.0]).is_ok());
        assert!(SampleSet::from_coords(2, vec![1.0, 0.1]).is_err());
        assert!(SampleSet::from_coords(2, vec![1.0, 0.0, 0.0]).is_err());
        assert!(SpherePoint::new(vec![0.6, 0.8]).is_ok());
        assert!(SpherePoint::new(vec![0.6, 0.9]).is_err());
        assert!(SpherePoint::normalized(vec![0.0, 0.0]).is_err());
    }
}
