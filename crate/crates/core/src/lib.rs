//! Locally differentially private density release with B-spline and spline
//! wavelet features, plug-in estimation of density functionals, and
//! Lepski-type resolution selection.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptive;
pub mod bundle;
pub mod error;
pub mod estimators;
pub mod functionals;
pub mod harness;
pub mod linalg;
pub mod poly;
pub mod privacy;
pub mod quadrature;
pub mod splines;
pub mod wavelets;

pub use adaptive::{adaptive_estimate, lepski_select, LepskiConfig, LepskiTrace, DEFAULT_TAU};
pub use bundle::ReleaseBundle;
pub use error::{Error, Result};
pub use estimators::{choose_resolution, spline_estimate, wavelet_estimate, DensityEstimate, ResolutionRule};
pub use functionals::{FunctionalKind, FunctionalSpec, ReferenceDensity};
pub use poly::PiecewisePolynomial;
pub use privacy::{
    audit_privacy, plan_spline_noise, plan_wavelet_noise, release, sanitize, MechanismKind, NoisePlan,
    SanitizedRecord,
};
pub use splines::{BSplineBasis, SplineFunction};
pub use wavelets::{MultiresolutionLadder, WaveletCoefficients};
