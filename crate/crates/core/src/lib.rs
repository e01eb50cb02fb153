//! Recovery of the degree-`q` spherical harmonic expansion of a black-box
//! function on `S^{d-1}` from i.i.d. uniform samples.
//!
//! The pipeline samples `s` points uniformly, assembles the Gram matrix of
//! the degree-`≤ q` zonal reproducing kernel, solves `z = K† f` through a
//! symmetric eigendecomposition, and returns the expansion
//! `y(σ) = Σ_j z_j k(<w_j, σ>)` (suitably scaled). With
//! `s ≳ β_{q,d} log β_{q,d}` samples a function that already lies in the
//! degree-`≤ q` space is recovered to solver roundoff.
//!
//! ```
//! use sphex::{fit, ProblemParams};
//!
//! let params = ProblemParams::new(3, 1).unwrap();
//! let model = fit(|w| w[0], &params, 32, 7).unwrap();
//! let y = model.evaluate(&[0.6, 0.0, 0.8]).unwrap();
//! assert!((y - 0.6).abs() < 1e-10);
//! ```

pub mod error;
pub mod experiment;
pub mod harmonic;
pub mod model_io;
pub mod oracles;
pub mod regression;
pub mod sampling;

pub use error::{Error, Result};
pub use harmonic::{
    cumulative_dim, gegenbauer_build, gegenbauer_eval, harmonic_dim, sphere_area, GegenbauerPoly,
    ProblemParams, ZonalSeries,
};
pub use model_io::{deserialize_model, read_model, serialize_model, write_model};
pub use regression::{
    build_gram, evaluate, fit, fit_samples, fit_with_report, kernel_value, pinv_solve,
    sample_count, ExpansionModel, FitOptions, FitReport, GramMatrix, PinvSolution, SampleVector,
};
pub use sampling::{derive_trial_seed, sample_uniform_sphere, SampleSet, SpherePoint};
