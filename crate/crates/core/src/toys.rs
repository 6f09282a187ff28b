//! Global p-values and trials factors from toy significance curves, either
//! Gaussian-process samples or full brute-force scans.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::asimov::CovAccumulator;
use crate::error::{Error, Result};
use crate::excursion::{count_abs_upcrossings, count_crossings, count_upcrossings, euler_characteristic, ExcursionKind, ExcursionSummary};
use crate::models::ModelSpec;
use crate::region::SearchRegion;
use crate::scan::Scanner;
use crate::stats::{std_normal_sf, CholeskyFactor, CovMatrix, Provenance, RandomStream};

/// `0, 0.1, …, 5.5` plus `√0.5`.
pub fn default_levels() -> Vec<f64> {
    let mut v: Vec<f64> = (0..=55).map(|k| k as f64 / 10.0).collect();
    v.push(0.5f64.sqrt());
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TfSource {
    Gp,
    BruteForce,
}

/// Counts, per level, the curves whose maximum exceeds it.
#[derive(Debug, Clone, PartialEq)]
pub struct ExceedanceCounter {
    levels: Vec<f64>,
    /// `hits[k]`: curves whose maximum exceeds exactly the first `k` levels.
    hits: Vec<u64>,
    n: u64,
}

impl ExceedanceCounter {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() || levels.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParams("levels must be non-empty and strictly increasing".into()));
        }
        let hits = vec![0; levels.len() + 1];
        Ok(Self { levels, hits, n: 0 })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn observe_max(&mut self, max: f64) {
        self.hits[self.levels.partition_point(|&u| u < max)] += 1;
        self.n += 1;
    }

    pub fn observe(&mut self, curve: &[f64]) {
        self.observe_max(curve.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }

    pub fn merge(&mut self, other: &Self) {
        assert_eq!(self.levels, other.levels, "merging counters over different levels");
        for (a, b) in self.hits.iter_mut().zip(&other.hits) {
            *a += b;
        }
        self.n += other.n;
    }

    /// Number of curves with `max > u` at every level.
    pub fn exceedances(&self) -> Vec<u64> {
        let mut out = vec![0; self.levels.len()];
        let mut acc = 0;
        for k in (0..self.levels.len()).rev() {
            acc += self.hits[k + 1];
            out[k] = acc;
        }
        out
    }
}

/// Global/local p-values and trials factor per level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialsFactorCurve {
    pub levels: Vec<f64>,
    pub p_global: Vec<f64>,
    pub p_global_err: Vec<f64>,
    pub p_local: Vec<f64>,
    pub tf: Vec<f64>,
    pub tf_err: Vec<f64>,
    pub n_samples: u64,
    pub source: TfSource,
}

impl TrialsFactorCurve {
    pub fn from_counter(c: &ExceedanceCounter, source: TfSource) -> Self {
        let n = c.n().max(1) as f64;
        let hits = c.exceedances();
        let p_global: Vec<f64> = hits.iter().map(|&h| h as f64 / n).collect();
        let p_global_err: Vec<f64> = p_global.iter().map(|p| (p * (1.0 - p) / n).sqrt()).collect();
        let p_local: Vec<f64> = c.levels().iter().map(|&u| std_normal_sf(u)).collect();
        let tf = p_global.iter().zip(&p_local).map(|(g, l)| g / l).collect();
        let tf_err = p_global_err.iter().zip(&p_local).map(|(g, l)| g / l).collect();
        Self {
            levels: c.levels().to_vec(),
            p_global,
            p_global_err,
            p_local,
            tf,
            tf_err,
            n_samples: c.n(),
            source,
        }
    }

    /// Index of the tabulated level equal to `u` (within 1e-9).
    pub fn level_index(&self, u: f64) -> Option<usize> {
        self.levels.iter().position(|&l| (l - u).abs() < 1e-9)
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("u,p_global,p_global_err,p_local,tf,tf_err\n");
        for k in 0..self.levels.len() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                self.levels[k], self.p_global[k], self.p_global_err[k], self.p_local[k], self.tf[k], self.tf_err[k]
            );
        }
        s
    }

    pub fn from_csv_str(text: &str, n_samples: u64, source: TfSource) -> Result<Self> {
        let mut cols: [Vec<f64>; 6] = Default::default();
        for (r, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let vals = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", r + 1)))?;
            if vals.len() != 6 {
                return Err(Error::Parse(format!("line {}: expected 6 columns", r + 1)));
            }
            for (c, v) in cols.iter_mut().zip(vals) {
                c.push(v);
            }
        }
        let [levels, p_global, p_global_err, p_local, tf, tf_err] = cols;
        Ok(Self {
            levels,
            p_global,
            p_global_err,
            p_local,
            tf,
            tf_err,
            n_samples,
            source,
        })
    }
}

/// p-values of the one-sided curve maximum for a batch of curves.
pub fn global_pvalue<'a, I>(curves: I, levels: &[f64], source: TfSource) -> Result<TrialsFactorCurve>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut c = ExceedanceCounter::new(levels.to_vec())?;
    for z in curves {
        c.observe(z);
    }
    if c.n() == 0 {
        return Err(Error::InvalidParams("no curves".into()));
    }
    Ok(TrialsFactorCurve::from_counter(&c, source))
}

/// Linear interpolation of the TF (and its error) at `z_local`.
pub fn trials_factor(curve: &TrialsFactorCurve, z_local: f64) -> Result<(f64, f64)> {
    let l = &curve.levels;
    let (lo, hi) = (l[0], l[l.len() - 1]);
    if !(z_local >= lo && z_local <= hi) {
        return Err(Error::OutOfTabulatedRange { z: z_local, lo, hi });
    }
    let k = l.partition_point(|&u| u <= z_local);
    if k == 0 || l[k - 1] == z_local || k == l.len() {
        let i = k.saturating_sub(1);
        return Ok((curve.tf[i], curve.tf_err[i]));
    }
    let w = (z_local - l[k - 1]) / (l[k] - l[k - 1]);
    let mix = |v: &[f64]| v[k - 1] + w * (v[k] - v[k - 1]);
    Ok((mix(&curve.tf), mix(&curve.tf_err)))
}

/// Running sum and sum of squares of integer counts.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CountStats {
    pub sum: f64,
    pub sum_sq: f64,
    pub n: u64,
}

impl CountStats {
    pub fn push(&mut self, v: i64) {
        let x = v as f64;
        self.sum += x;
        self.sum_sq += x * x;
        self.n += 1;
    }

    pub fn merge(&mut self, o: &Self) {
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
        self.n += o.n;
    }

    pub fn summary(&self, u: f64, kind: ExcursionKind) -> ExcursionSummary {
        let n = self.n.max(1) as f64;
        let mean = self.sum / n;
        let var = if self.n > 1 {
            ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        ExcursionSummary {
            u,
            mean_count: mean,
            std_error: (var / n).sqrt(),
            n_samples: self.n,
            kind,
        }
    }
}

/// What a toy farm records about each curve.
#[derive(Debug, Clone, PartialEq)]
pub struct FarmConfig {
    pub levels: Vec<f64>,
    /// Levels at which 1D up-crossings are counted.
    pub crossing_levels: Vec<f64>,
    /// Levels at which 1D crossings in either direction are counted.
    pub two_way_crossing_levels: Vec<f64>,
    /// Levels at which 1D up-crossings of `|Z|` are counted.
    pub abs_crossing_levels: Vec<f64>,
    /// Levels at which the 2D Euler characteristic is counted.
    pub euler_levels: Vec<f64>,
    /// Accumulate the Pearson correlation matrix of the curves.
    pub covariance: bool,
    /// Flattened points whose values are kept for every curve.
    pub record: Vec<usize>,
}

impl Default for FarmConfig {
    fn default() -> Self {
        Self {
            levels: default_levels(),
            crossing_levels: Vec::new(),
            two_way_crossing_levels: Vec::new(),
            abs_crossing_levels: Vec::new(),
            euler_levels: Vec::new(),
            covariance: false,
            record: Vec::new(),
        }
    }
}

/// Everything retained from a stream of curves.
#[derive(Debug, Clone)]
pub struct ToySummary {
    region: Arc<SearchRegion>,
    config: FarmConfig,
    exceed: ExceedanceCounter,
    crossings: Vec<CountStats>,
    two_way: Vec<CountStats>,
    abs_crossings: Vec<CountStats>,
    euler: Vec<CountStats>,
    cov: Option<CovAccumulator>,
    recorded: Vec<Vec<f64>>,
}

impl ToySummary {
    pub fn new(region: Arc<SearchRegion>, config: FarmConfig) -> Result<Self> {
        let crossings_1d = !config.crossing_levels.is_empty()
            || !config.two_way_crossing_levels.is_empty()
            || !config.abs_crossing_levels.is_empty();
        if crossings_1d && region.dims() != 1 {
            return Err(Error::InvalidParams("up-crossings need a 1D region".into()));
        }
        if !config.euler_levels.is_empty() && region.dims() != 2 {
            return Err(Error::InvalidParams("Euler characteristics need a 2D region".into()));
        }
        if let Some(&k) = config.record.iter().find(|&&k| k >= region.len()) {
            return Err(Error::OutOfRegion(format!("record index {k}")));
        }
        let n = region.len();
        Ok(Self {
            exceed: ExceedanceCounter::new(config.levels.clone())?,
            crossings: vec![CountStats::default(); config.crossing_levels.len()],
            two_way: vec![CountStats::default(); config.two_way_crossing_levels.len()],
            abs_crossings: vec![CountStats::default(); config.abs_crossing_levels.len()],
            euler: vec![CountStats::default(); config.euler_levels.len()],
            cov: config.covariance.then(|| CovAccumulator::new(n)),
            recorded: vec![Vec::new(); config.record.len()],
            region,
            config,
        })
    }

    pub fn n_samples(&self) -> u64 {
        self.exceed.n()
    }

    /// Adds curves stored row-major.
    pub fn observe_block(&mut self, rows: &[f64]) {
        let n = self.region.len();
        for z in rows.chunks_exact(n) {
            self.exceed.observe(z);
            for (s, &u) in self.crossings.iter_mut().zip(&self.config.crossing_levels) {
                s.push(count_upcrossings(z, u) as i64);
            }
            for (s, &u) in self.two_way.iter_mut().zip(&self.config.two_way_crossing_levels) {
                s.push(count_crossings(z, u) as i64);
            }
            for (s, &u) in self.abs_crossings.iter_mut().zip(&self.config.abs_crossing_levels) {
                s.push(count_abs_upcrossings(z, u) as i64);
            }
            if !self.euler.is_empty() {
                let (nm, nw) = (self.region.mass_axis().len(), self.region.n_width());
                for (s, &u) in self.euler.iter_mut().zip(&self.config.euler_levels) {
                    s.push(euler_characteristic(z, nm, nw, u));
                }
            }
            for (r, &k) in self.recorded.iter_mut().zip(&self.config.record) {
                r.push(z[k]);
            }
        }
        if let Some(c) = self.cov.as_mut() {
            c.add_block(rows);
        }
    }

    pub fn merge(&mut self, o: &Self) {
        self.exceed.merge(&o.exceed);
        for (a, b) in self.crossings.iter_mut().zip(&o.crossings) {
            a.merge(b);
        }
        for (a, b) in self.two_way.iter_mut().zip(&o.two_way) {
            a.merge(b);
        }
        for (a, b) in self.abs_crossings.iter_mut().zip(&o.abs_crossings) {
            a.merge(b);
        }
        for (a, b) in self.euler.iter_mut().zip(&o.euler) {
            a.merge(b);
        }
        if let (Some(a), Some(b)) = (self.cov.as_mut(), o.cov.as_ref()) {
            a.merge(b);
        }
        for (a, b) in self.recorded.iter_mut().zip(&o.recorded) {
            a.extend_from_slice(b);
        }
    }

    pub fn exceedance(&self) -> &ExceedanceCounter {
        &self.exceed
    }

    pub fn tf_curve(&self, source: TfSource) -> TrialsFactorCurve {
        TrialsFactorCurve::from_counter(&self.exceed, source)
    }

    pub fn crossing_summaries(&self) -> Vec<ExcursionSummary> {
        self.crossings
            .iter()
            .zip(&self.config.crossing_levels)
            .map(|(s, &u)| s.summary(u, ExcursionKind::Upcrossings1d))
            .collect()
    }

    pub fn two_way_crossing_summaries(&self) -> Vec<ExcursionSummary> {
        self.two_way
            .iter()
            .zip(&self.config.two_way_crossing_levels)
            .map(|(s, &u)| s.summary(u, ExcursionKind::Crossings1d))
            .collect()
    }

    pub fn abs_crossing_summaries(&self) -> Vec<ExcursionSummary> {
        self.abs_crossings
            .iter()
            .zip(&self.config.abs_crossing_levels)
            .map(|(s, &u)| s.summary(u, ExcursionKind::AbsUpcrossings1d))
            .collect()
    }

    pub fn euler_summaries(&self) -> Vec<ExcursionSummary> {
        self.euler
            .iter()
            .zip(&self.config.euler_levels)
            .map(|(s, &u)| s.summary(u, ExcursionKind::Euler2d))
            .collect()
    }

    pub fn covariance(&self, provenance: Provenance) -> Result<CovMatrix> {
        self.cov
            .as_ref()
            .ok_or_else(|| Error::InvalidParams("covariance was not accumulated".into()))?
            .finish(&self.region, provenance)
    }

    /// Values of `Z` at `config.record[i]`, one per curve.
    pub fn recorded(&self, i: usize) -> &[f64] {
        &self.recorded[i]
    }
}

fn gp_block_size(n: usize) -> usize {
    ((1 << 19) / n.max(1)).clamp(16, 4096)
}

/// Streams `n_samples` GP curves `L g_j` through a [`ToySummary`].
///
/// Blocks have a fixed size that depends only on the curve length and are
/// merged in order, so the result does not depend on the worker count.
pub fn gp_farm(
    factor: &CholeskyFactor,
    region: Arc<SearchRegion>,
    n_samples: u64,
    stream: &RandomStream,
    config: &FarmConfig,
) -> Result<ToySummary> {
    if factor.n() != region.len() {
        return Err(Error::ShapeMismatch(format!(
            "factor is {}x{}, region has {} points",
            factor.n(),
            factor.n(),
            region.len()
        )));
    }
    let block = gp_block_size(region.len()) as u64;
    let n_blocks = n_samples.div_ceil(block) as usize;
    let mut total = ToySummary::new(region.clone(), config.clone())?;
    crate::par::for_each_ordered(
        n_blocks,
        2 * crate::par::workers(),
        |b| {
            let start = b as u64 * block;
            let count = block.min(n_samples - start) as usize;
            let rows = factor.sample_block(stream, start, count);
            let mut s = ToySummary::new(region.clone(), config.clone())?;
            s.observe_block(&rows);
            Ok(s)
        },
        |s| total.merge(&s),
    )?;
    Ok(total)
}

/// Brute-force toys: sample a data set per stream index, scan it, and feed
/// the significance curve to a [`ToySummary`].
pub fn brute_force_farm(
    scanner: &Scanner,
    n_toys: u64,
    stream: &RandomStream,
    config: &FarmConfig,
) -> Result<ToySummary> {
    let spec: &ModelSpec = scanner.spec();
    let region = scanner.region().clone();
    let n = region.len();
    let block = 64u64;
    let n_blocks = n_toys.div_ceil(block) as usize;
    let mut total = ToySummary::new(region.clone(), config.clone())?;
    crate::par::for_each_ordered(
        n_blocks,
        2 * crate::par::workers(),
        |b| {
            let start = b as u64 * block;
            let count = block.min(n_toys - start) as usize;
            let mut rows = vec![0.0; count * n];
            for (j, row) in rows.chunks_exact_mut(n).enumerate() {
                let data = spec.sample_toy(&stream.substream(start + j as u64));
                scanner.scan_into(&data, row)?;
            }
            let mut s = ToySummary::new(region.clone(), config.clone())?;
            s.observe_block(&rows);
            Ok(s)
        },
        |s| total.merge(&s),
    )?;
    Ok(total)
}
