//! # kdpp-core
//!
//! Fixed-size determinantal point processes (k-DPPs), their matched
//! varying-size DPPs, and saddlepoint approximations to the elementary
//! symmetric polynomials (ESPs) that normalise them.
//!
//! A k-DPP with L-ensemble `L` picks a size-k subset `X` with probability
//! proportional to `det(L_X)`. Its normaliser is `e_k(λ)`, the k-th ESP of
//! the eigenvalues of `L`. Replacing the hard constraint `|X| = k` by a
//! tilt `e^ν L` with `Σ λᵢeᵛ/(1+λᵢeᵛ) = k` gives a DPP whose inclusion
//! probabilities match the k-DPP's up to `O(1/n)`; a closed-form correction
//! brings that to `O(1/n²)`.
//!
//! ## Modules
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`spectrum`] | L-ensembles, point clouds, eigendecomposition, diagnostics |
//! | [`esp`] | exact (log-domain) and saddlepoint ESPs, saddlepoint solver |
//! | [`diagonal`] | diagonal k-DPPs: exact, basic and corrected inclusion, sampler |
//! | [`kdpp`] | marginal kernels, matched DPPs, general inclusion, samplers |
//! | [`oracle`] | brute-force enumeration, total variation, Monte Carlo |
//! | [`inference`] | k-DPP vs profile DPP likelihood over a bandwidth grid |
//!
//! ## Quick start
//!
//! ```rust
//! use kdpp_core::spectrum::Spectrum;
//! use kdpp_core::{diagonal, esp};
//!
//! let spectrum = Spectrum::new((1..=50).map(f64::from).collect()).unwrap();
//! let exact = esp::esp_exact(&spectrum);
//! let (approx, _) = esp::esp_saddlepoint(&spectrum, 10).unwrap();
//! assert!((approx - exact.get(10)).abs() < 0.09);
//!
//! let basic = diagonal::inclusion_basic(&spectrum, 10).unwrap();
//! let total: f64 = basic.probabilities.values().iter().sum();
//! assert!((total - 10.0).abs() < 1e-8);
//! ```
//!
//! Indices are 0-based throughout the library; the CSV writers emit 1-based
//! indices.

pub mod combin;
pub mod diagonal;
pub mod error;
pub mod esp;
pub mod inference;
pub mod kdpp;
mod linalg;
pub mod measure;
pub mod numeric;
pub mod oracle;
pub mod rng;
pub mod spectrum;

pub use error::{Error, Result};
pub use kdpp::SampleSet;
pub use measure::InclusionMeasure;
pub use spectrum::{LEnsemble, PointCloud, Spectrum};
