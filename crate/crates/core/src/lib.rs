//! Trials factors for bump hunts, from Gaussian-process toys, brute-force
//! toys and analytic up-crossing rates.

pub mod asimov;
pub mod error;
pub mod excursion;
pub mod io;
pub mod models;
pub mod par;
pub mod region;
pub mod scan;
pub mod stats;
pub mod toys;
pub mod upcross;

pub use error::{Error, Result};
pub use models::{BinnedDataSet, ErrorModel, ModelKind, ModelSpec};
pub use region::{GridPoint, SearchRegion};
pub use scan::{FitResult, Scanner, SignificanceCurve};
pub use stats::{CovMatrix, Provenance, RandomStream};
pub use toys::{TfSource, TrialsFactorCurve};
