//! Up-crossings and Euler characteristics of sampled curves and surfaces,
//! Gross–Vitells extrapolations, and the finite-grid studies.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelSpec;
use crate::region::SearchRegion;
use crate::stats::{cholesky_psd_raw, std_normal_sf, CholeskyFactor, RandomStream, DEFAULT_JITTER};
use crate::toys::CountStats;
use crate::upcross::{expected_upcrossings, KernelSurface};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExcursionKind {
    #[serde(rename = "upcrossings_1d")]
    Upcrossings1d,
    /// Crossings of `u` in either direction.
    #[serde(rename = "crossings_1d")]
    Crossings1d,
    /// Up-crossings of `|Z|`, i.e. of the χ²₁ field `t` through `u²`.
    #[serde(rename = "abs_upcrossings_1d")]
    AbsUpcrossings1d,
    #[serde(rename = "euler_2d")]
    Euler2d,
}

/// Mean excursion count at one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcursionSummary {
    pub u: f64,
    pub mean_count: f64,
    pub std_error: f64,
    pub n_samples: u64,
    pub kind: ExcursionKind,
}

/// Indices `i` with `z[i] ≤ u < z[i+1]`.
pub fn count_upcrossings(z: &[f64], u: f64) -> usize {
    z.windows(2).filter(|w| w[0] <= u && w[1] > u).count()
}

/// Crossings of `u` in either direction, `(z[i] > u) ≠ (z[i+1] > u)`.
pub fn count_crossings(z: &[f64], u: f64) -> usize {
    z.windows(2).filter(|w| (w[0] > u) != (w[1] > u)).count()
}

/// Up-crossings of `|z|` through `u`: entries of `t = z²` into `t > u²`,
/// from either sign.
pub fn count_abs_upcrossings(z: &[f64], u: f64) -> usize {
    z.windows(2).filter(|w| w[0].abs() <= u && w[1].abs() > u).count()
}

/// Euler characteristic `V − E + F` of the cubical complex spanned by the
/// grid nodes above `u`: every such node, every edge joining two of them and
/// every cell whose four corners exceed `u`. `z` is mass-major over `nm × nw`.
pub fn euler_characteristic(z: &[f64], nm: usize, nw: usize, u: f64) -> i64 {
    debug_assert_eq!(z.len(), nm * nw);
    let above = |i: usize, j: usize| z[i * nw + j] > u;
    let (mut v, mut e, mut f) = (0i64, 0i64, 0i64);
    for i in 0..nm {
        for j in 0..nw {
            if !above(i, j) {
                continue;
            }
            v += 1;
            let down = i + 1 < nm && above(i + 1, j);
            let right = j + 1 < nw && above(i, j + 1);
            e += down as i64 + right as i64;
            if down && right && above(i + 1, j + 1) {
                f += 1;
            }
        }
    }
    v - e + f
}

/// A bound on the global p-value and the trials factor at one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GvBound {
    pub u: f64,
    /// Extrapolated expected up-crossing (or Euler characteristic) count.
    pub expected: f64,
    pub p_global_bound: f64,
    pub tf_bound: f64,
}

fn bound_from_expected(u: f64, expected: f64) -> GvBound {
    let p_local = std_normal_sf(u);
    let p = p_local + expected;
    GvBound {
        u,
        expected,
        p_global_bound: p,
        tf_bound: p / p_local,
    }
}

/// One-dimensional extrapolation `N(u) = N(u₀) e^{−(u²−u₀²)/2}`.
pub fn gv_bound_1d(n_u0: f64, u0: f64, u: f64) -> Result<GvBound> {
    if !(u0 > 0.0) || !(n_u0 >= 0.0) {
        return Err(Error::InvalidParams(format!("u0 = {u0}, N(u0) = {n_u0}")));
    }
    if u < u0 - 1e-12 {
        return Err(Error::InvalidParams(format!("u = {u} below the anchor u0 = {u0}")));
    }
    Ok(bound_from_expected(u, n_u0 * (-(u * u - u0 * u0) / 2.0).exp()))
}

/// Coefficients of `E[φ(u)] = (N₁ + N₂ u) e^{−u²/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GvFit2d {
    pub n1: f64,
    pub n2: f64,
}

impl GvFit2d {
    pub fn expected(&self, u: f64) -> f64 {
        (self.n1 + self.n2 * u) * (-u * u / 2.0).exp()
    }

    pub fn bound(&self, u: f64) -> GvBound {
        bound_from_expected(u, self.expected(u))
    }
}

pub fn gv_fit_2d(ec1: &ExcursionSummary, ec2: &ExcursionSummary) -> Result<GvFit2d> {
    if ec1.kind != ExcursionKind::Euler2d || ec2.kind != ExcursionKind::Euler2d {
        return Err(Error::InvalidParams("two-level fit needs Euler-characteristic summaries".into()));
    }
    if (ec1.u - ec2.u).abs() < 1e-12 {
        return Err(Error::InvalidParams("anchor levels must differ".into()));
    }
    let e1 = ec1.mean_count * (ec1.u * ec1.u / 2.0).exp();
    let e2 = ec2.mean_count * (ec2.u * ec2.u / 2.0).exp();
    let n2 = (e2 - e1) / (ec2.u - ec1.u);
    let n1 = e1 - n2 * ec1.u;
    let fit = GvFit2d { n1, n2 };
    if !(fit.n1 + fit.n2 * ec1.u > 0.0 && fit.n1 + fit.n2 * ec2.u > 0.0) {
        return Err(Error::InvalidParams(format!("non-positive anchor counts: {fit:?}")));
    }
    Ok(fit)
}

pub fn gv_bound_2d(ec1: &ExcursionSummary, ec2: &ExcursionSummary, u: f64) -> Result<GvBound> {
    Ok(gv_fit_2d(ec1, ec2)?.bound(u))
}

/// Mean over the search grid of `(mass range) / σ_s(M)`.
pub fn rule_of_thumb(spec: &ModelSpec) -> Result<f64> {
    spec.rule_of_thumb()
}

/// Squared-exponential kernel `e^{−(x−y)²/α²}` on a uniform grid.
pub fn squared_exponential_factor(alpha2: f64, axis: &[f64]) -> Result<CholeskyFactor> {
    let n = axis.len();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            v[i * n + j] = (-(axis[i] - axis[j]).powi(2) / alpha2).exp();
        }
    }
    cholesky_psd_raw(&v, n, DEFAULT_JITTER)
}

fn uniform_axis(length: f64, spacing: f64) -> Vec<f64> {
    let n = (length / spacing + 1e-9).floor() as usize + 1;
    (0..n).map(|i| i as f64 * spacing).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinScanConfig {
    pub alpha2: f64,
    pub bin_sizes: Vec<f64>,
    pub n_samples: u64,
    /// Length of the scanned interval.
    pub length: f64,
    pub level: f64,
}

impl Default for BinScanConfig {
    fn default() -> Self {
        let alpha = 10f64.sqrt();
        Self {
            alpha2: 10.0,
            bin_sizes: [1.0, 2.0, 4.0, 8.0, 16.0].iter().map(|m| m * alpha / 20.0).collect(),
            n_samples: 10_000,
            length: 155.0,
            level: 0.5f64.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinScanRow {
    pub bin_size: f64,
    pub n_points: usize,
    pub mean: f64,
    pub std_error: f64,
    /// Continuum expectation over the length the grid covers.
    pub analytic: f64,
}

impl BinScanRow {
    pub fn deficit(&self) -> f64 {
        1.0 - self.mean / self.analytic
    }
}

/// Mean up-crossings of a squared-exponential GP sampled at several grid
/// spacings, beside the continuum value.
///
/// When every spacing is an integer multiple of the finest one, all grids are
/// subsampled from the same fine curves, so the counts are pathwise
/// non-increasing in the spacing.
pub fn bin_scan_study(cfg: &BinScanConfig, stream: &RandomStream) -> Result<Vec<BinScanRow>> {
    if !(cfg.alpha2 > 0.0) || cfg.bin_sizes.is_empty() || cfg.bin_sizes.iter().any(|&h| !(h > 0.0)) {
        return Err(Error::InvalidParams("alpha2 and bin sizes must be positive".into()));
    }
    if cfg.n_samples < 2 {
        return Err(Error::InvalidParams("need at least 2 samples".into()));
    }
    let finest = cfg.bin_sizes.iter().copied().fold(f64::INFINITY, f64::min);
    let strides: Option<Vec<usize>> = cfg
        .bin_sizes
        .iter()
        .map(|&h| {
            let r = h / finest;
            ((r - r.round()).abs() < 1e-9).then(|| r.round() as usize)
        })
        .collect();

    // continuum reference from the spline engine, fine enough for derivatives
    let alpha = cfg.alpha2.sqrt();
    let ref_axis = uniform_axis(cfg.length, (alpha / 10.0).min(finest));
    let alpha2 = cfg.alpha2;
    let surface = KernelSurface::from_kernel(ref_axis.clone(), |x, y| (-(x - y).powi(2) / alpha2).exp())?;
    let rate = expected_upcrossings(&surface, cfg.level)?.total() / (ref_axis[ref_axis.len() - 1] - ref_axis[0]);

    let run = |axis: &[f64], strides: &[usize], stream: &RandomStream| -> Result<Vec<CountStats>> {
        let f = squared_exponential_factor(cfg.alpha2, axis)?;
        let n = axis.len();
        let block = 512u64;
        let n_blocks = cfg.n_samples.div_ceil(block) as usize;
        let mut total = vec![CountStats::default(); strides.len()];
        crate::par::for_each_ordered(
            n_blocks,
            2 * crate::par::workers(),
            |b| {
                let start = b as u64 * block;
                let count = block.min(cfg.n_samples - start) as usize;
                let rows = f.sample_block(stream, start, count);
                let mut st = vec![CountStats::default(); strides.len()];
                let mut sub = Vec::with_capacity(n);
                for z in rows.chunks_exact(n) {
                    for (s, &k) in st.iter_mut().zip(strides) {
                        sub.clear();
                        sub.extend(z.iter().step_by(k));
                        s.push(count_upcrossings(&sub, cfg.level) as i64);
                    }
                }
                Ok(st)
            },
            |st| {
                for (a, b) in total.iter_mut().zip(&st) {
                    a.merge(b);
                }
            },
        )?;
        Ok(total)
    };

    let row = |h: f64, n_points: usize, s: &CountStats| {
        let sm = s.summary(cfg.level, ExcursionKind::Upcrossings1d);
        BinScanRow {
            bin_size: h,
            n_points,
            mean: sm.mean_count,
            std_error: sm.std_error,
            analytic: rate * h * (n_points - 1) as f64,
        }
    };

    match strides {
        Some(strides) => {
            let axis = uniform_axis(cfg.length, finest);
            let stats = run(&axis, &strides, stream)?;
            Ok(cfg
                .bin_sizes
                .iter()
                .zip(&strides)
                .zip(&stats)
                .map(|((&h, &k), s)| row(h, (axis.len() - 1) / k + 1, s))
                .collect())
        }
        None => cfg
            .bin_sizes
            .iter()
            .enumerate()
            .map(|(i, &h)| {
                let axis = uniform_axis(cfg.length, h);
                let stats = run(&axis, &[1], &stream.substream(i as u64))?;
                Ok(row(h, axis.len(), &stats[0]))
            })
            .collect(),
    }
}

/// Parameters of `y = A² e^{−(x−B)²/C²} + D`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub converged: bool,
}

fn solve4(mut m: [[f64; 4]; 4], mut r: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let piv = (col..4).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        r.swap(col, piv);
        for row in col + 1..4 {
            let f = m[row][col] / m[col][col];
            for k in col..4 {
                m[row][k] -= f * m[col][k];
            }
            r[row] -= f * r[col];
        }
    }
    let mut x = [0.0; 4];
    for i in (0..4).rev() {
        let s: f64 = (i + 1..4).map(|k| m[i][k] * x[k]).sum();
        x[i] = (r[i] - s) / m[i][i];
    }
    Some(x)
}

fn gauss_model(p: &[f64; 4], x: f64) -> f64 {
    let r = (x - p[1]) / p[2];
    p[0] * p[0] * (-r * r).exp() + p[3]
}

/// Levenberg–Marquardt fit of the peak shape, started from `start`.
pub fn fit_peak(x: &[f64], y: &[f64], start: [f64; 4]) -> PeakFit {
    let ssr = |p: &[f64; 4]| -> f64 { x.iter().zip(y).map(|(&xi, &yi)| (gauss_model(p, xi) - yi).powi(2)).sum() };
    let mut p = start;
    let mut f = ssr(&p);
    let mut lambda = 1e-3;
    let mut converged = false;
    for _ in 0..500 {
        let mut jtj = [[0.0; 4]; 4];
        let mut jtr = [0.0; 4];
        for (&xi, &yi) in x.iter().zip(y) {
            let r = xi - p[1];
            let e = (-(r * r) / (p[2] * p[2])).exp();
            let a2e = p[0] * p[0] * e;
            let jac = [2.0 * p[0] * e, a2e * 2.0 * r / (p[2] * p[2]), a2e * 2.0 * r * r / (p[2] * p[2] * p[2]), 1.0];
            let res = a2e + p[3] - yi;
            for i in 0..4 {
                jtr[i] += jac[i] * res;
                for k in 0..4 {
                    jtj[i][k] += jac[i] * jac[k];
                }
            }
        }
        if jtr.iter().map(|g| g * g).sum::<f64>().sqrt() <= 1e-14 * (1.0 + f) {
            converged = true;
            break;
        }
        let mut improved = false;
        for _ in 0..40 {
            let mut m = jtj;
            for (i, row) in m.iter_mut().enumerate() {
                row[i] += lambda * jtj[i][i].max(1e-12);
            }
            let Some(step) = solve4(m, jtr.map(|g| -g)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = [p[0] + step[0], p[1] + step[1], p[2] + step[2], p[3] + step[3]];
            let ft = ssr(&trial);
            if ft.is_finite() && ft <= f {
                let small = step.iter().zip(&trial).all(|(s, t)| s.abs() <= 1e-12 * (1.0 + t.abs()));
                let rel = (f - ft) <= 1e-15 * f.max(1e-300);
                p = trial;
                f = ft;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                if small || rel {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !improved || converged {
            converged = converged || f <= 1e-28;
            break;
        }
    }
    PeakFit {
        a: p[0].abs(),
        b: p[1],
        c: p[2].abs(),
        d: p[3],
        converged: converged && p.iter().all(|v| v.is_finite()),
    }
}

/// Locates the global maximum of one curve and fits the peak in a window of
/// total width `window` around it. Returns `(height, width)`.
pub fn peak_width(axis: &[f64], z: &[f64], window: f64) -> Option<(f64, PeakFit)> {
    let (imax, &ymax) = z.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    let xm = axis[imax];
    let (lo, hi) = (
        axis.partition_point(|&x| x < xm - window / 2.0),
        axis.partition_point(|&x| x <= xm + window / 2.0),
    );
    let (x, y) = (&axis[lo..hi], &z[lo..hi]);
    if x.len() < 5 {
        return None;
    }
    let d0 = y.iter().copied().fold(f64::INFINITY, f64::min);
    let half = d0 + 0.5 * (ymax - d0);
    let k = imax - lo;
    let right = (k..x.len()).find(|&i| y[i] < half).map_or(x[x.len() - 1], |i| x[i]);
    let left = (0..=k).rev().find(|&i| y[i] < half).map_or(x[0], |i| x[i]);
    let hw = (0.5 * (right - left)).max(axis[1] - axis[0]);
    let start = [(ymax - d0).max(1e-6).sqrt(), xm, hw / 2f64.ln().sqrt(), d0];
    let fit = fit_peak(x, y, start);
    fit.converged.then_some((ymax, fit))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakTrend {
    pub heights: Vec<f64>,
    pub widths: Vec<f64>,
    pub slope: f64,
    pub slope_err: f64,
    pub intercept: f64,
    pub n_failed: usize,
}

/// Drops the `trim` fraction of lowest and highest heights, then the same
/// fraction of lowest and highest widths (where runaway fits end up), and fits
/// `width = intercept + slope·height` by ordinary least squares.
pub fn width_trend(pairs: &[(f64, f64)], trim: f64, n_failed: usize) -> Result<PeakTrend> {
    if !(0.0..0.5).contains(&trim) {
        return Err(Error::InvalidParams(format!("trim = {trim}")));
    }
    let trimmed = |mut v: Vec<(f64, f64)>, key: fn(&(f64, f64)) -> f64| {
        v.sort_by(|a, b| key(a).total_cmp(&key(b)));
        let cut = (trim * v.len() as f64).floor() as usize;
        v.truncate(v.len() - cut);
        v.drain(..cut);
        v
    };
    let mut kept = trimmed(trimmed(pairs.to_vec(), |p| p.0), |p| p.1);
    kept.sort_by(|a, b| a.0.total_cmp(&b.0));
    let kept = &kept[..];
    let n = kept.len();
    if n < 3 {
        return Err(Error::InvalidParams("fewer than 3 peaks after trimming".into()));
    }
    let mx = kept.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let my = kept.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let sxx: f64 = kept.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = kept.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = kept.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Ok(PeakTrend {
        heights: kept.iter().map(|p| p.0).collect(),
        widths: kept.iter().map(|p| p.1).collect(),
        slope,
        slope_err: (rss / (n as f64 - 2.0) / sxx).sqrt(),
        intercept,
        n_failed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakWidthConfig {
    pub alpha2: f64,
    pub length: f64,
    pub spacing: f64,
    pub window: f64,
    pub trim: f64,
    pub n_samples: u64,
}

impl Default for PeakWidthConfig {
    fn default() -> Self {
        Self {
            alpha2: 10.0,
            length: 155.0,
            spacing: 10f64.sqrt() / 10.0,
            window: 40.0,
            trim: 0.01,
            n_samples: 10_000,
        }
    }
}

/// `(height, width)` of the highest peak of each sampled GP curve.
pub fn peak_width_pairs(cfg: &PeakWidthConfig, stream: &RandomStream) -> Result<(Vec<(f64, f64)>, usize)> {
    let axis = uniform_axis(cfg.length, cfg.spacing);
    let f = squared_exponential_factor(cfg.alpha2, &axis)?;
    let n = axis.len();
    let block = 256u64;
    let n_blocks = cfg.n_samples.div_ceil(block) as usize;
    let mut pairs = Vec::with_capacity(cfg.n_samples as usize);
    let mut failed = 0;
    crate::par::for_each_ordered(
        n_blocks,
        2 * crate::par::workers(),
        |b| {
            let start = b as u64 * block;
            let count = block.min(cfg.n_samples - start) as usize;
            let rows = f.sample_block(stream, start, count);
            Ok(rows
                .chunks_exact(n)
                .map(|z| peak_width(&axis, z, cfg.window).map(|(h, p)| (h, p.c)))
                .collect::<Vec<_>>())
        },
        |v| {
            for p in v {
                match p {
                    Some(p) => pairs.push(p),
                    None => failed += 1,
                }
            }
        },
    )?;
    Ok((pairs, failed))
}

pub fn peak_width_study(cfg: &PeakWidthConfig, stream: &RandomStream) -> Result<PeakTrend> {
    let (pairs, failed) = peak_width_pairs(cfg, stream)?;
    width_trend(&pairs, cfg.trim, failed)
}

/// Region for studies on an abstract interval.
pub fn study_region(length: f64, spacing: f64) -> Result<Arc<SearchRegion>> {
    Ok(Arc::new(SearchRegion::one_d(uniform_axis(length, spacing))?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upcrossing_basics() {
        assert_eq!(count_upcrossings(&[1.0; 10], 0.5), 0);
        assert_eq!(count_upcrossings(&[0.0, 1.0, 0.0, 1.0], 0.5), 2);
        assert_eq!(count_upcrossings(&[1.0, 0.0, 1.0], 0.5), 1);
        // ties at u count as "not above"
        assert_eq!(count_upcrossings(&[0.5, 0.5, 0.6], 0.5), 1);
    }

    fn grid(nm: usize, nw: usize, on: &[(usize, usize)]) -> Vec<f64> {
        let mut z = vec![0.0; nm * nw];
        for &(i, j) in on {
            z[i * nw + j] = 2.0;
        }
        z
    }

    fn block(i0: usize, i1: usize, j0: usize, j1: usize) -> Vec<(usize, usize)> {
        (i0..=i1).flat_map(|i| (j0..=j1).map(move |j| (i, j))).collect()
    }

    #[test]
    fn abs_crossings_count_both_signs() {
        let z = [0.0, 2.0, 0.0, -2.0, 0.0, -0.5, 3.0];
        assert_eq!(count_upcrossings(&z, 1.0), 2);
        assert_eq!(count_abs_upcrossings(&z, 1.0), 3);
        assert_eq!(count_crossings(&z, 1.0), 3);
        assert_eq!(count_crossings(&[2.0, 0.0, 2.0], 1.0), 2);
        // a jump straight from below −u to above u is not an entry of |z|
        assert_eq!(count_abs_upcrossings(&[-2.0, 2.0], 1.0), 0);
    }

    #[test]
    fn euler_cases() {
        assert_eq!(euler_characteristic(&vec![0.0; 64], 8, 8, 1.0), 0);
        let one = grid(8, 8, &block(2, 4, 2, 4));
        assert_eq!(euler_characteristic(&one, 8, 8, 1.0), 1);
        let mut ring = block(1, 6, 1, 6);
        ring.retain(|&(i, j)| !(3..=4).contains(&i) || !(3..=4).contains(&j));
        assert_eq!(euler_characteristic(&grid(8, 8, &ring), 8, 8, 1.0), 0);
        let mut two = block(0, 1, 0, 1);
        two.extend(block(5, 7, 4, 7));
        assert_eq!(euler_characteristic(&grid(8, 8, &two), 8, 8, 1.0), 2);
        // isolated nodes and one-node-wide lines are components too
        assert_eq!(euler_characteristic(&grid(8, 8, &[(3, 3), (6, 0)]), 8, 8, 1.0), 2);
        let line: Vec<_> = (0..8).map(|j| (4, j)).collect();
        assert_eq!(euler_characteristic(&grid(8, 8, &line), 8, 8, 1.0), 1);
        // diagonal neighbours are not joined
        assert_eq!(euler_characteristic(&grid(8, 8, &[(2, 2), (3, 3)]), 8, 8, 1.0), 2);
    }

    #[test]
    fn gv_1d() {
        let u0 = 0.5f64.sqrt();
        let b = gv_bound_1d(4.3071, u0, u0).unwrap();
        assert!((b.expected - 4.3071).abs() < 1e-15);
        assert!((b.p_global_bound - (std_normal_sf(u0) + 4.3071)).abs() < 1e-15);
        let b = gv_bound_1d(4.3071, u0, 3.0).unwrap();
        assert!((b.expected - 0.061_437_481_869_450_692).abs() < 1e-15);
        assert!((b.tf_bound - 46.512_683_498_960_819).abs() < 1e-9, "{}", b.tf_bound);
        assert!((gv_bound_1d(0.0, u0, 2.0).unwrap().tf_bound - 1.0).abs() < 1e-15);
        assert!(gv_bound_1d(1.0, 1.0, 0.5).is_err());
    }

    fn ec(u: f64, mean: f64) -> ExcursionSummary {
        ExcursionSummary {
            u,
            mean_count: mean,
            std_error: 0.0,
            n_samples: 1,
            kind: ExcursionKind::Euler2d,
        }
    }

    #[test]
    fn gv_2d() {
        let (u1, u2) = (0.5f64.sqrt(), 1.0);
        let n1 = 7.0;
        let a = ec(u1, n1 * (-u1 * u1 / 2.0).exp());
        let b = ec(u2, n1 * (-u2 * u2 / 2.0).exp());
        let f = gv_fit_2d(&a, &b).unwrap();
        assert!(f.n2.abs() < 1e-12 && (f.n1 - n1).abs() < 1e-12);
        let one_d = gv_bound_1d(n1 * (-u1 * u1 / 2.0).exp(), u1, 3.0).unwrap();
        assert!((f.bound(3.0).tf_bound - one_d.tf_bound).abs() < 1e-9);
        let (c, d) = (ec(u1, 5.0), ec(u2, 4.0));
        let g1 = gv_fit_2d(&c, &d).unwrap();
        let g2 = gv_fit_2d(&d, &c).unwrap();
        assert!((g1.n1 - g2.n1).abs() < 1e-12 && (g1.n2 - g2.n2).abs() < 1e-12);
        assert!(gv_fit_2d(&c, &c).is_err());
    }

    #[test]
    fn exact_peak_recovery() {
        let x: Vec<f64> = (0..401).map(|i| -20.0 + i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|v| (-v * v / 9.0).exp()).collect();
        let (h, fit) = peak_width(&x, &y, 40.0).unwrap();
        assert_eq!(h, 1.0);
        assert!((fit.c - 3.0).abs() < 1e-6, "{fit:?}");
        assert!(fit.b.abs() < 1e-6 && fit.d.abs() < 1e-6 && (fit.a - 1.0).abs() < 1e-6);
        // offset, shifted, and started away from the answer
        let y2: Vec<f64> = x.iter().map(|v| 2.25 * (-(v - 1.3f64).powi(2) / 4.0).exp() - 0.4).collect();
        let f = fit_peak(&x, &y2, [1.0, 0.0, 3.0, 0.0]);
        assert!((f.c - 2.0).abs() < 1e-6 && (f.a - 1.5).abs() < 1e-6 && (f.d + 0.4).abs() < 1e-6);
    }

    #[test]
    fn trend_of_exact_line() {
        let pairs: Vec<(f64, f64)> = (0..200u32)
            .map(|i| {
                let h = i as f64 * 0.01;
                (h, 3.0 - 0.5 * h + 0.01 * ((i * 7919 % 13) as f64 - 6.0))
            })
            .collect();
        let t = width_trend(&pairs, 0.01, 0).unwrap();
        // 2 + 2 by height, then 1 + 1 by width
        assert_eq!(t.heights.len(), 194);
        assert!((t.slope + 0.5).abs() < 0.01);
        assert!(t.slope_err > 0.0);
        // a runaway fit in the middle of the height range is dropped by width
        let mut bad = pairs.clone();
        bad[100].1 = 1e5;
        let tb = width_trend(&bad, 0.01, 0).unwrap();
        assert!(!tb.widths.contains(&1e5));
        assert!((tb.slope + 0.5).abs() < 0.01);
    }

    #[test]
    fn se_factor_samples_unit_variance() {
        let axis = uniform_axis(20.0, 0.5);
        let f = squared_exponential_factor(10.0, &axis).unwrap();
        let rows = f.sample_block(&RandomStream::new(3, 3), 0, 20_000);
        let n = axis.len();
        let var = rows.chunks_exact(n).map(|r| r[10] * r[10]).sum::<f64>() / 20_000.0;
        assert!((var - 1.0).abs() < 0.05);
    }

    #[test]
    fn bin_scan_small() {
        let cfg = BinScanConfig {
            n_samples: 2000,
            length: 40.0,
            ..BinScanConfig::default()
        };
        let rows = bin_scan_study(&cfg, &RandomStream::new(1, 0)).unwrap();
        assert_eq!(rows.len(), 5);
        assert!(rows.windows(2).all(|w| w[1].mean <= w[0].mean));
        assert!((rows[0].mean / rows[0].analytic - 1.0).abs() < 0.1);
    }
}
