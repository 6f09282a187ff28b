//! Covariance of the significance field from Asimov data sets, from toy
//! samples, and amplified differences between the two.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelSpec;
use crate::region::SearchRegion;
use crate::scan::{Scanner, SignificanceCurve};
use crate::stats::{CovMatrix, Provenance};

/// Rank-one contribution `z zᵀ` of one fluctuated Asimov set.
///
/// Only the curve is stored; [`PartialCovariance::matrix`] materializes the
/// outer product on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialCovariance {
    pub source_bin: usize,
    pub curve: Vec<f64>,
}

impl PartialCovariance {
    pub fn n(&self) -> usize {
        self.curve.len()
    }

    pub fn matrix(&self) -> Vec<f64> {
        let z = &self.curve;
        z.iter().flat_map(|a| z.iter().map(move |b| a * b)).collect()
    }
}

pub fn partial_covariance(z: &SignificanceCurve, source_bin: usize) -> PartialCovariance {
    PartialCovariance {
        source_bin,
        curve: z.z.clone(),
    }
}

/// `Σ_k z_k z_kᵀ`, normalized once to unit diagonal.
pub fn accumulate_covariance(region: &SearchRegion, partials: &[PartialCovariance]) -> Result<CovMatrix> {
    let n = region.len();
    if partials.is_empty() {
        return Err(Error::InvalidParams("no partial covariances".into()));
    }
    if let Some(p) = partials.iter().find(|p| p.n() != n) {
        return Err(Error::ShapeMismatch(format!(
            "partial from bin {} has {} points, region has {n}",
            p.source_bin,
            p.n()
        )));
    }
    let rows: Vec<f64> = partials.iter().flat_map(|p| p.curve.iter().copied()).collect();
    let raw = gram(&rows, partials.len(), n);
    CovMatrix::normalize(region.clone(), raw, Provenance::Asimov)
}

/// `PᵀP` for a row-major `k × n` matrix `P`.
fn gram(rows: &[f64], k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    gram_into(rows, k, n, &mut out);
    out
}

fn gram_into(rows: &[f64], k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(rows.len(), k * n);
    if k == 0 {
        return;
    }
    unsafe {
        matrixmultiply::dgemm(
            n, k, n, 1.0,
            rows.as_ptr(), 1, n as isize,
            rows.as_ptr(), n as isize, 1,
            1.0,
            out.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// Scans of every Asimov set of a model.
#[derive(Debug, Clone)]
pub struct AsimovScan {
    /// The unfluctuated background Asimov curve (≡ 0 up to fit tolerance).
    pub nominal: SignificanceCurve,
    pub partials: Vec<PartialCovariance>,
}

pub fn asimov_scan(spec: &ModelSpec) -> Result<AsimovScan> {
    let scanner = Scanner::new(spec)?;
    let sets = spec.make_asimov_set();
    let curves = crate::par::map_indexed(sets.len(), |k| scanner.scan(&sets[k]).map(|r| r.curve));
    let mut curves = curves.into_iter().collect::<Result<Vec<_>>>()?;
    let nominal = curves.remove(0);
    let partials = curves
        .iter()
        .enumerate()
        .map(|(bin, c)| partial_covariance(c, bin))
        .collect();
    Ok(AsimovScan { nominal, partials })
}

/// The GP covariance of a model built from its set of Asimov data sets.
pub fn asimov_covariance(spec: &ModelSpec) -> Result<CovMatrix> {
    let a = asimov_scan(spec)?;
    accumulate_covariance(&spec.region, &a.partials)
}

/// Streaming Pearson correlation over many curves.
#[derive(Debug, Clone)]
pub struct CovAccumulator {
    n: usize,
    count: u64,
    sum: Vec<f64>,
    cross: Vec<f64>,
}

impl CovAccumulator {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            count: 0,
            sum: vec![0.0; n],
            cross: vec![0.0; n * n],
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Adds `rows.len() / n` curves stored row-major.
    pub fn add_block(&mut self, rows: &[f64]) {
        let k = rows.len() / self.n;
        for r in rows.chunks_exact(self.n) {
            for (s, v) in self.sum.iter_mut().zip(r) {
                *s += v;
            }
        }
        gram_into(rows, k, self.n, &mut self.cross);
        self.count += k as u64;
    }

    pub fn merge(&mut self, other: &Self) {
        assert_eq!(self.n, other.n, "merging accumulators of different size");
        self.count += other.count;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.cross.iter_mut().zip(&other.cross) {
            *a += b;
        }
    }

    pub fn finish(&self, region: &SearchRegion, provenance: Provenance) -> Result<CovMatrix> {
        let n = self.n;
        if region.len() != n {
            return Err(Error::ShapeMismatch(format!("region has {} points, curves {n}", region.len())));
        }
        if self.count < 2 {
            return Err(Error::InvalidParams("need at least two curves".into()));
        }
        let c = self.count as f64;
        let mean: Vec<f64> = self.sum.iter().map(|s| s / c).collect();
        let mut raw = self.cross.clone();
        for i in 0..n {
            for j in 0..n {
                raw[i * n + j] = (raw[i * n + j] - c * mean[i] * mean[j]) / (c - 1.0);
            }
        }
        CovMatrix::normalize(region.clone(), raw, provenance)
    }
}

/// Pearson correlation matrix of the curves, mean subtracted.
pub fn empirical_covariance(curves: &[SignificanceCurve]) -> Result<CovMatrix> {
    let first = curves.first().ok_or_else(|| Error::InvalidParams("no curves".into()))?;
    let n = first.z.len();
    let mut acc = CovAccumulator::new(n);
    let mut block = Vec::with_capacity(256 * n);
    for c in curves {
        if c.z.len() != n {
            return Err(Error::ShapeMismatch("curves of different length".into()));
        }
        block.extend_from_slice(&c.z);
        if block.len() == 256 * n {
            acc.add_block(&block);
            block.clear();
        }
    }
    acc.add_block(&block);
    acc.finish(&first.region, Provenance::BruteForce)
}

/// `reference + factor·(approx − reference)`, renormalized to unit diagonal.
pub fn amplify_difference(reference: &CovMatrix, approx: &CovMatrix, factor: f64) -> Result<CovMatrix> {
    if reference.region() != approx.region() {
        return Err(Error::ShapeMismatch("matrices over different regions".into()));
    }
    if !(factor > 0.0) && factor != 0.0 {
        return Err(Error::InvalidParams(format!("factor = {factor}")));
    }
    if factor == 0.0 {
        return Ok(reference.clone().with_provenance(Provenance::Amplified));
    }
    let raw: Vec<f64> = reference
        .values()
        .iter()
        .zip(approx.values())
        .map(|(r, a)| r + factor * (a - r))
        .collect();
    CovMatrix::normalize(reference.region().clone(), raw, Provenance::Amplified)
}

/// Elementwise difference `a − b` with summary quantiles of `|a − b|` over
/// the strict upper triangle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovDiff {
    #[serde(skip)]
    pub diff: Vec<f64>,
    pub n: usize,
    pub max_abs: f64,
    pub mean_abs: f64,
    pub q50: f64,
    pub q90: f64,
    pub q99: f64,
}

pub fn covdiff(a: &CovMatrix, b: &CovMatrix) -> Result<CovDiff> {
    if a.region() != b.region() {
        return Err(Error::ShapeMismatch("matrices over different regions".into()));
    }
    let n = a.n();
    let diff: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect();
    let mut upper: Vec<f64> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| diff[i * n + j].abs())
        .collect();
    upper.sort_by(f64::total_cmp);
    let q = |p: f64| -> f64 {
        if upper.is_empty() {
            return 0.0;
        }
        let pos = p * (upper.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        upper[lo] + (pos - lo as f64) * (upper[hi] - upper[lo])
    };
    Ok(CovDiff {
        n,
        max_abs: upper.last().copied().unwrap_or(0.0),
        mean_abs: if upper.is_empty() {
            0.0
        } else {
            upper.iter().sum::<f64>() / upper.len() as f64
        },
        q50: q(0.5),
        q90: q(0.9),
        q99: q(0.99),
        diff,
    })
}
