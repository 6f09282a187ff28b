//! Deterministic numerical primitives shared by every pipeline stage.

pub mod chol;
pub mod cov;
pub mod dist;
pub mod rng;

pub use chol::{cholesky_psd, cholesky_psd_raw, sample_mvn, CholeskyFactor, DEFAULT_JITTER, MAX_JITTER};
pub use cov::{CovMatrix, CovSidecar, Provenance};
pub use dist::{chi2_1_cdf, ks_test, std_normal_cdf, std_normal_pdf, std_normal_sf, KsTest};
pub use rng::RandomStream;
