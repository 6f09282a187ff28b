//! Profile-likelihood fits and significance scans.
//!
//! For every search point the background-only and signal+background
//! likelihoods are maximized and combined into the signed significance
//! `Z(M) = sign(μ̂) √t(M)` with `t(M) = 2 (nll_bkg − nll_sig(M))`.
//!
//! Poisson models are fitted by damped Newton iterations with the analytic
//! gradient and Hessian. Gaussian models use the linearity of the expectation
//! in (μ, β): the inner problem is a closed-form 2×2 least-squares solve and
//! only α_b is found iteratively, by a bracketed secant search on the
//! analytic derivative of the profiled residual sum of squares.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{BackgroundParams, BackgroundShape, BinnedDataSet, ErrorModel, ModelSpec};
use crate::region::SearchRegion;

/// Absolute tolerance on the nll at the optimum.
pub const NLL_TOL: f64 = 1e-9;
/// Tolerance on the gradient norm at the optimum.
pub const GRAD_TOL: f64 = 1e-7;
pub const MAX_ITERATIONS: usize = 10_000;
/// Negative `t` down to this value is rounding noise and is clamped to 0.
pub const T_CLAMP: f64 = 1e-6;

/// Signal ratios `s_i / c_i` below this are dropped from the per-point window.
const WINDOW_RATIO: f64 = 1e-17;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub mu_hat: f64,
    pub theta_hat: BackgroundParams,
    /// Negative log-likelihood, up to an additive constant that depends only
    /// on the data (identical for the background and signal fits).
    pub nll: f64,
    pub converged: bool,
    pub n_iterations: usize,
}

/// Signed significance over the flattened search region.
#[derive(Debug, Clone, PartialEq)]
pub struct SignificanceCurve {
    pub region: Arc<SearchRegion>,
    pub z: Vec<f64>,
}

/// Full output of one scan.
#[derive(Debug, Clone)]
pub struct ScanResult {
    pub curve: SignificanceCurve,
    pub t: Vec<f64>,
    pub mu_hat: Vec<f64>,
    pub background: FitResult,
    pub max_iterations: usize,
}

struct PoissonPoint {
    bins: Vec<u32>,
    ratio: Vec<f64>,
    signal_total: f64,
}

struct PoissonEngine {
    /// Background expectation at β = 1.
    template_total: f64,
    points: Vec<PoissonPoint>,
}

struct GaussianEngine {
    b0: f64,
    sigma: f64,
    /// `m_i − origin`.
    x: Vec<f64>,
    alpha_nominal: f64,
    /// Signal templates, row-major `n_points × n_bins`.
    s: Vec<f64>,
    ss: Vec<f64>,
}

enum Engine {
    Poisson(PoissonEngine),
    Gaussian(GaussianEngine),
}

/// Precomputed templates for repeated scans of one model.
pub struct Scanner {
    spec: ModelSpec,
    region: Arc<SearchRegion>,
    engine: Engine,
}

impl Scanner {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let n_points = spec.region.len();
        let engine = match (spec.errors, spec.background) {
            (ErrorModel::Poisson, _) => {
                let c = spec.nominal_background();
                let mut points = Vec::with_capacity(n_points);
                for k in 0..n_points {
                    let s = spec.signal_template(k)?;
                    let mut bins = Vec::new();
                    let mut ratio = Vec::new();
                    let mut total = 0.0;
                    for (i, (&si, &ci)) in s.iter().zip(&c).enumerate() {
                        let r = si / ci;
                        if r > WINDOW_RATIO {
                            bins.push(i as u32);
                            ratio.push(r);
                            total += si;
                        }
                    }
                    points.push(PoissonPoint {
                        bins,
                        ratio,
                        signal_total: total,
                    });
                }
                Engine::Poisson(PoissonEngine {
                    template_total: c.iter().sum(),
                    points,
                })
            }
            (ErrorModel::Gaussian { sigma }, BackgroundShape::Exponential { alpha_b, origin }) => {
                let nb = spec.n_bins();
                let mut s = Vec::with_capacity(n_points * nb);
                let mut ss = Vec::with_capacity(n_points);
                for k in 0..n_points {
                    let t = spec.signal_template(k)?;
                    ss.push(t.iter().map(|v| v * v).sum());
                    s.extend(t);
                }
                Engine::Gaussian(GaussianEngine {
                    b0: spec.b0,
                    sigma,
                    x: spec.bin_centers.iter().map(|m| m - origin).collect(),
                    alpha_nominal: alpha_b,
                    s,
                    ss,
                })
            }
            (ErrorModel::Gaussian { .. }, BackgroundShape::Rayleigh { .. }) => {
                return Err(Error::InvalidParams(
                    "Gaussian errors are implemented for the exponential background only".into(),
                ))
            }
        };
        Ok(Self {
            spec: spec.clone(),
            region: Arc::new(spec.region.clone()),
            engine,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn region(&self) -> &Arc<SearchRegion> {
        &self.region
    }

    fn check_data(&self, data: &BinnedDataSet) -> Result<()> {
        if data.len() != self.spec.n_bins() {
            return Err(Error::ShapeMismatch(format!(
                "data has {} bins, model has {}",
                data.len(),
                self.spec.n_bins()
            )));
        }
        let same_law = matches!(
            (data.error_model, self.spec.errors),
            (ErrorModel::Poisson, ErrorModel::Poisson) | (ErrorModel::Gaussian { .. }, ErrorModel::Gaussian { .. })
        );
        if !same_law {
            return Err(Error::InvalidParams("data error model differs from the model's".into()));
        }
        Ok(())
    }

    pub fn fit_background(&self, data: &BinnedDataSet) -> Result<FitResult> {
        self.check_data(data)?;
        match &self.engine {
            Engine::Poisson(e) => e.fit_background(&data.counts),
            Engine::Gaussian(g) => g.fit_background(&data.counts, g.alpha_nominal),
        }
    }

    /// Signal+background fit at flattened point `k`, warm-started from the
    /// background-only optimum.
    pub fn fit_signal(&self, data: &BinnedDataSet, k: usize) -> Result<FitResult> {
        let bkg = self.fit_background(data)?;
        self.fit_signal_from(data, k, &bkg)
    }

    /// Signal+background fit at `k` started from `start` (μ̂ and θ̂ are used).
    pub fn fit_signal_from(&self, data: &BinnedDataSet, k: usize, start: &FitResult) -> Result<FitResult> {
        self.check_data(data)?;
        if k >= self.region.len() {
            return Err(Error::OutOfRegion(format!("index {k}")));
        }
        match &self.engine {
            Engine::Poisson(e) => e.fit_signal(&data.counts, k, start.mu_hat, start.theta_hat.beta),
            Engine::Gaussian(g) => g.fit_signal(
                &data.counts,
                k,
                start.theta_hat.alpha_b.unwrap_or(g.alpha_nominal),
            ),
        }
    }

    /// Gaussian models only: the closed-form (μ̂, β̂) fit at a fixed α_b.
    pub fn fit_signal_fixed_alpha(&self, data: &BinnedDataSet, k: usize, alpha_b: f64) -> Result<FitResult> {
        self.check_data(data)?;
        match &self.engine {
            Engine::Gaussian(g) => {
                let p = g.profile_signal(&data.counts, k, alpha_b);
                Ok(FitResult {
                    mu_hat: p.mu,
                    theta_hat: BackgroundParams {
                        beta: p.beta,
                        alpha_b: Some(alpha_b),
                    },
                    nll: g.rss_signal(&data.counts, k, alpha_b, p.mu, p.beta) / (2.0 * g.sigma * g.sigma),
                    converged: true,
                    n_iterations: 1,
                })
            }
            Engine::Poisson(_) => Err(Error::InvalidParams("fixed-α fit needs a Gaussian model".into())),
        }
    }

    /// The full scan with per-point diagnostics.
    pub fn scan(&self, data: &BinnedDataSet) -> Result<ScanResult> {
        let bkg = self.fit_background(data)?;
        let n = self.region.len();
        let mut z = vec![0.0; n];
        let mut t = vec![0.0; n];
        let mut mu = vec![0.0; n];
        let mut max_it = bkg.n_iterations;
        for k in 0..n {
            let fit = self.fit_signal_from(data, k, &bkg).map_err(|e| self.wrap(k, e))?;
            let tk = test_statistic(&bkg, &fit, k).map_err(|e| self.wrap(k, e))?;
            max_it = max_it.max(fit.n_iterations);
            t[k] = tk;
            mu[k] = fit.mu_hat;
            z[k] = signed_significance(tk, fit.mu_hat);
        }
        Ok(ScanResult {
            curve: SignificanceCurve {
                region: self.region.clone(),
                z,
            },
            t,
            mu_hat: mu,
            background: bkg,
            max_iterations: max_it,
        })
    }

    /// Writes `Z` for every search point into `out`, with no diagnostics.
    pub fn scan_into(&self, data: &BinnedDataSet, out: &mut [f64]) -> Result<()> {
        let bkg = self.fit_background(data)?;
        for (k, slot) in out.iter_mut().enumerate().take(self.region.len()) {
            let fit = self.fit_signal_from(data, k, &bkg).map_err(|e| self.wrap(k, e))?;
            let tk = test_statistic(&bkg, &fit, k).map_err(|e| self.wrap(k, e))?;
            *slot = signed_significance(tk, fit.mu_hat);
        }
        Ok(())
    }

    fn wrap(&self, k: usize, e: Error) -> Error {
        Error::ScanFailed {
            index: k,
            point: self.region.point(k).label(),
            source: Box::new(e),
        }
    }
}

fn test_statistic(bkg: &FitResult, sig: &FitResult, k: usize) -> Result<f64> {
    let t = 2.0 * (bkg.nll - sig.nll);
    if t < -T_CLAMP {
        return Err(Error::NegativeTestStatistic { index: k, t });
    }
    Ok(t.max(0.0))
}

fn signed_significance(t: f64, mu: f64) -> f64 {
    if mu == 0.0 {
        0.0
    } else {
        t.sqrt().copysign(mu)
    }
}

pub fn fit_background(spec: &ModelSpec, data: &BinnedDataSet) -> Result<FitResult> {
    Scanner::new(spec)?.fit_background(data)
}

pub fn fit_signal(spec: &ModelSpec, data: &BinnedDataSet, k: usize) -> Result<FitResult> {
    Scanner::new(spec)?.fit_signal(data, k)
}

pub fn significance_scan(spec: &ModelSpec, data: &BinnedDataSet) -> Result<SignificanceCurve> {
    Ok(Scanner::new(spec)?.scan(data)?.curve)
}

// ---------------------------------------------------------------------------
// Poisson likelihood
//
// With N_i = β c_i + μ s_i = c_i (β + μ r_i), and dropping data-only terms,
//   nll(μ, β) = β C + μ S − D_out ln β − Σ_{i∈W} D_i ln(β + μ r_i)
// where W is the window of bins the signal reaches, S = Σ_W s_i, C = Σ c_i
// and D_out the counts outside W.

struct PoissonState {
    grad: [f64; 2],
    hess: [f64; 3],
}

impl PoissonEngine {
    fn fit_background(&self, d: &[f64]) -> Result<FitResult> {
        let total: f64 = d.iter().sum();
        if !(total > 0.0) {
            return Err(Error::NonFiniteLikelihood("no events in data".into()));
        }
        let beta = total / self.template_total;
        Ok(FitResult {
            mu_hat: 0.0,
            theta_hat: BackgroundParams { beta, alpha_b: None },
            nll: beta * self.template_total - total * beta.ln(),
            converged: true,
            n_iterations: 0,
        })
    }

    fn nll(&self, p: &PoissonPoint, d: &[f64], d_out: f64, mu: f64, beta: f64) -> Option<f64> {
        if !(beta > 0.0) {
            return None;
        }
        let mut f = beta * self.template_total + mu * p.signal_total - d_out * beta.ln();
        for (&i, &r) in p.bins.iter().zip(&p.ratio) {
            let di = d[i as usize];
            if di > 0.0 {
                let q = beta + mu * r;
                if !(q > 0.0) {
                    return None;
                }
                f -= di * q.ln();
            }
        }
        Some(f)
    }

    fn state(&self, p: &PoissonPoint, d: &[f64], d_out: f64, mu: f64, beta: f64) -> PoissonState {
        let mut gm = p.signal_total;
        let mut gb = self.template_total - d_out / beta;
        let mut hmm = 0.0;
        let mut hmb = 0.0;
        let mut hbb = d_out / (beta * beta);
        for (&i, &r) in p.bins.iter().zip(&p.ratio) {
            let di = d[i as usize];
            if di > 0.0 {
                let inv = 1.0 / (beta + mu * r);
                let w = di * inv;
                let w2 = w * inv;
                gm -= w * r;
                gb -= w;
                hmm += w2 * r * r;
                hmb += w2 * r;
                hbb += w2;
            }
        }
        PoissonState {
            grad: [gm, gb],
            hess: [hmm, hmb, hbb],
        }
    }

    fn feasible(&self, p: &PoissonPoint, d: &[f64], mu: f64, beta: f64) -> bool {
        beta > 0.0
            && p.bins
                .iter()
                .zip(&p.ratio)
                .all(|(&i, &r)| d[i as usize] <= 0.0 || beta + mu * r > 0.0)
    }

    fn fit_signal(&self, d: &[f64], k: usize, mu0: f64, beta0: f64) -> Result<FitResult> {
        let p = &self.points[k];
        let d_in: f64 = p.bins.iter().map(|&i| d[i as usize]).sum();
        let d_out = d.iter().sum::<f64>() - d_in;
        // Integer counts make the nll self-concordant and the damped step
        // below is then safe without a line search.
        let self_concordant = p
            .bins
            .iter()
            .all(|&i| d[i as usize] == 0.0 || d[i as usize] >= 1.0)
            && (d_out == 0.0 || d_out >= 1.0);

        let (mut mu, mut beta) = (mu0, beta0);
        if !self.feasible(p, d, mu, beta) {
            mu = 0.0;
            beta = d.iter().sum::<f64>() / self.template_total;
        }
        let mut iterations = 0;
        let mut converged = false;
        while iterations < MAX_ITERATIONS {
            iterations += 1;
            let st = self.state(p, d, d_out, mu, beta);
            let [gm, gb] = st.grad;
            let [hmm, hmb, hbb] = st.hess;
            let det = hmm * hbb - hmb * hmb;
            if !(det > 0.0) || !(hmm > 0.0) {
                return Err(Error::NoConvergence {
                    iterations,
                    last_nll: self.nll(p, d, d_out, mu, beta).unwrap_or(f64::NAN),
                });
            }
            let dm = -(hbb * gm - hmb * gb) / det;
            let db = -(hmm * gb - hmb * gm) / det;
            let decrement = -(gm * dm + gb * db);
            let gnorm = (gm * gm + gb * gb).sqrt();
            if decrement * 0.5 <= NLL_TOL && (gnorm <= GRAD_TOL || decrement <= 1e-24) {
                converged = true;
                break;
            }
            let lambda = decrement.max(0.0).sqrt();
            let mut step = if lambda > 0.25 { 1.0 / (1.0 + lambda) } else { 1.0 };
            let need_descent = !self_concordant || lambda > 0.25;
            let f0 = if need_descent {
                self.nll(p, d, d_out, mu, beta)
            } else {
                None
            };
            let mut accepted = false;
            for _ in 0..80 {
                let (tm, tb) = (mu + step * dm, beta + step * db);
                if self.feasible(p, d, tm, tb) {
                    match f0 {
                        None => {
                            accepted = true;
                        }
                        Some(f0) => {
                            if let Some(f1) = self.nll(p, d, d_out, tm, tb) {
                                if f1 <= f0 - 1e-4 * step * decrement || f0 - f1 >= -1e-13 * f0.abs() {
                                    accepted = true;
                                }
                            }
                        }
                    }
                }
                if accepted {
                    mu = tm;
                    beta = tb;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                if decrement * 0.5 <= NLL_TOL {
                    converged = true;
                    break;
                }
                return Err(Error::NonFiniteLikelihood(format!(
                    "no admissible step from mu = {mu}, beta = {beta}"
                )));
            }
        }
        let nll = self
            .nll(p, d, d_out, mu, beta)
            .ok_or_else(|| Error::NonFiniteLikelihood(format!("mu = {mu}, beta = {beta}")))?;
        if !converged {
            return Err(Error::NoConvergence {
                iterations,
                last_nll: nll,
            });
        }
        Ok(FitResult {
            mu_hat: mu,
            theta_hat: BackgroundParams { beta, alpha_b: None },
            nll,
            converged,
            n_iterations: iterations,
        })
    }
}

// ---------------------------------------------------------------------------
// Gaussian likelihood: nll = Σ (N_i − D_i)² / 2σ², N_i = μ s_i + β b0 e^{−α x_i}

struct Profile {
    mu: f64,
    beta: f64,
    /// d RSS / dα at the profiled (μ, β).
    slope: f64,
}

impl GaussianEngine {
    fn background_col(&self, alpha: f64) -> impl Iterator<Item = f64> + '_ {
        self.x.iter().map(move |&x| self.b0 * (-alpha * x).exp())
    }

    fn profile_background(&self, d: &[f64], alpha: f64) -> Profile {
        let (mut cc, mut cd, mut xcc, mut xcd) = (0.0, 0.0, 0.0, 0.0);
        for ((c, &x), &di) in self.background_col(alpha).zip(&self.x).zip(d) {
            cc += c * c;
            cd += c * di;
            xcc += x * c * c;
            xcd += x * c * di;
        }
        let beta = cd / cc;
        Profile {
            mu: 0.0,
            beta,
            slope: -2.0 * beta * (beta * xcc - xcd),
        }
    }

    fn profile_signal(&self, d: &[f64], k: usize, alpha: f64) -> Profile {
        let nb = self.x.len();
        let s = &self.s[k * nb..(k + 1) * nb];
        let ss = self.ss[k];
        let (mut cc, mut cd, mut sc, mut sd) = (0.0, 0.0, 0.0, 0.0);
        let (mut xsc, mut xcc, mut xcd) = (0.0, 0.0, 0.0);
        for (((c, &x), &di), &si) in self.background_col(alpha).zip(&self.x).zip(d).zip(s) {
            cc += c * c;
            cd += c * di;
            sc += s_times(si, c);
            sd += si * di;
            xsc += x * si * c;
            xcc += x * c * c;
            xcd += x * c * di;
        }
        let det = ss * cc - sc * sc;
        let mu = (cc * sd - sc * cd) / det;
        let beta = (ss * cd - sc * sd) / det;
        Profile {
            mu,
            beta,
            slope: -2.0 * beta * (mu * xsc + beta * xcc - xcd),
        }
    }

    fn rss_background(&self, d: &[f64], alpha: f64, beta: f64) -> f64 {
        self.background_col(alpha)
            .zip(d)
            .map(|(c, &di)| {
                let r = beta * c - di;
                r * r
            })
            .sum()
    }

    fn rss_signal(&self, d: &[f64], k: usize, alpha: f64, mu: f64, beta: f64) -> f64 {
        let nb = self.x.len();
        let s = &self.s[k * nb..(k + 1) * nb];
        self.background_col(alpha)
            .zip(d)
            .zip(s)
            .map(|((c, &di), &si)| {
                let r = mu * si + beta * c - di;
                r * r
            })
            .sum()
    }

    /// Root of the profiled slope near `alpha0`: bracket by expanding steps
    /// downhill, then Brent's inverse-quadratic/secant/bisection iteration.
    fn minimize_alpha(&self, alpha0: f64, slope: impl Fn(f64) -> f64) -> Result<(f64, usize)> {
        let mut evals = 1;
        let g0 = slope(alpha0);
        if g0 == 0.0 {
            return Ok((alpha0, evals));
        }
        let dir = -g0.signum();
        let mut h = 1e-3 * alpha0.abs().max(1e-3);
        let (mut a, mut fa) = (alpha0, g0);
        let (mut b, mut fb);
        loop {
            b = a + dir * h;
            fb = slope(b);
            evals += 1;
            if fb.signum() != fa.signum() || fb == 0.0 {
                break;
            }
            a = b;
            fa = fb;
            h *= 2.0;
            if evals > 80 || !fb.is_finite() {
                return Err(Error::NoConvergence {
                    iterations: evals,
                    last_nll: f64::NAN,
                });
            }
        }
        // Brent root finding on [a, b]
        let mut c = a;
        let mut fc = fa;
        let mut e = b - a;
        let mut dstep = e;
        for _ in 0..200 {
            if fb.signum() == fc.signum() && fb != 0.0 {
                c = a;
                fc = fa;
                e = b - a;
                dstep = e;
            }
            if fc.abs() < fb.abs() {
                a = b;
                b = c;
                c = a;
                fa = fb;
                fb = fc;
                fc = fa;
            }
            let tol = 2.0 * f64::EPSILON * b.abs() + 1e-15;
            let m = 0.5 * (c - b);
            if m.abs() <= tol || fb == 0.0 {
                return Ok((b, evals));
            }
            if e.abs() >= tol && fa.abs() > fb.abs() {
                let s = fb / fa;
                let (mut p, mut q);
                if a == c {
                    p = 2.0 * m * s;
                    q = 1.0 - s;
                } else {
                    let qq = fa / fc;
                    let r = fb / fc;
                    p = s * (2.0 * m * qq * (qq - r) - (b - a) * (r - 1.0));
                    q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
                }
                if p > 0.0 {
                    q = -q;
                } else {
                    p = -p;
                }
                if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                    e = dstep;
                    dstep = p / q;
                } else {
                    dstep = m;
                    e = m;
                }
            } else {
                dstep = m;
                e = m;
            }
            a = b;
            fa = fb;
            b += if dstep.abs() > tol { dstep } else { tol.copysign(m) };
            fb = slope(b);
            evals += 1;
        }
        Err(Error::NoConvergence {
            iterations: evals,
            last_nll: f64::NAN,
        })
    }

    fn fit_background(&self, d: &[f64], alpha0: f64) -> Result<FitResult> {
        let (alpha, evals) = self.minimize_alpha(alpha0, |a| self.profile_background(d, a).slope)?;
        let p = self.profile_background(d, alpha);
        let nll = self.rss_background(d, alpha, p.beta) / (2.0 * self.sigma * self.sigma);
        Ok(FitResult {
            mu_hat: 0.0,
            theta_hat: BackgroundParams {
                beta: p.beta,
                alpha_b: Some(alpha),
            },
            nll,
            converged: true,
            n_iterations: evals,
        })
    }

    fn fit_signal(&self, d: &[f64], k: usize, alpha0: f64) -> Result<FitResult> {
        let (alpha, evals) = self.minimize_alpha(alpha0, |a| self.profile_signal(d, k, a).slope)?;
        let p = self.profile_signal(d, k, alpha);
        let nll = self.rss_signal(d, k, alpha, p.mu, p.beta) / (2.0 * self.sigma * self.sigma);
        Ok(FitResult {
            mu_hat: p.mu,
            theta_hat: BackgroundParams {
                beta: p.beta,
                alpha_b: Some(alpha),
            },
            nll,
            converged: true,
            n_iterations: evals,
        })
    }
}

#[inline]
fn s_times(s: f64, c: f64) -> f64 {
    s * c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region::GridPoint;
    use crate::stats::{chi2_1_cdf, ks_test, std_normal_cdf, RandomStream};

    fn asimov(spec: &ModelSpec) -> BinnedDataSet {
        spec.make_asimov_set().swap_remove(0)
    }

    #[test]
    fn asimov_recovers_truth() {
        for spec in [ModelSpec::background_template(), ModelSpec::hgg_1d()] {
            let sc = Scanner::new(&spec).unwrap();
            let d = asimov(&spec);
            let b = sc.fit_background(&d).unwrap();
            assert!((b.theta_hat.beta - 1.0).abs() < 1e-6);
            if let Some(a) = b.theta_hat.alpha_b {
                assert!((a - 0.033).abs() < 1e-6);
            }
            for k in (0..spec.region.len()).step_by(7) {
                let f = sc.fit_signal(&d, k).unwrap();
                assert!(f.mu_hat.abs() < 1e-6, "mu {}", f.mu_hat);
                assert!((2.0 * (b.nll - f.nll)).abs() < 1e-9);
            }
            let z = sc.scan(&d).unwrap().curve.z;
            assert!(z.iter().all(|v| v.abs() < 1e-6));
        }
    }

    #[test]
    fn exponential_slope_recovery_matches_grid_search() {
        let spec = ModelSpec::hgg_1d();
        let counts: Vec<f64> = spec.bin_centers.iter().map(|m| 10.0 * (-0.05 * (m - 100.0)).exp()).collect();
        let d = BinnedDataSet::new(spec.bin_centers.clone(), counts.clone(), spec.errors).unwrap();
        let f = fit_background(&spec, &d).unwrap();
        // dense grid search with the closed-form β at each α
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=20_000 {
            let a = 0.04 + i as f64 * 1e-6;
            let c: Vec<f64> = spec.bin_centers.iter().map(|m| 10.0 * (-a * (m - 100.0)).exp()).collect();
            let beta = c.iter().zip(&counts).map(|(x, y)| x * y).sum::<f64>() / c.iter().map(|x| x * x).sum::<f64>();
            let rss: f64 = c.iter().zip(&counts).map(|(x, y)| (beta * x - y).powi(2)).sum();
            if rss < best.0 {
                best = (rss, a);
            }
        }
        assert!((best.1 - 0.05).abs() < 1e-6);
        let a = f.theta_hat.alpha_b.unwrap();
        assert!((a - 0.05).abs() < 1e-6, "{a}");
        assert!((f.theta_hat.beta - 1.0).abs() < 1e-6);
    }

    #[test]
    fn injected_signal_closed_form() {
        let spec = ModelSpec::hgg_1d();
        let k = spec.region.find(GridPoint { mass: 130.0, width: None }).unwrap();
        let s = spec.signal_template(k).unwrap();
        let bkg = spec.nominal_background();
        let counts: Vec<f64> = bkg.iter().zip(&s).map(|(b, s)| b + 3.0 * s).collect();
        let d = BinnedDataSet::new(spec.bin_centers.clone(), counts, spec.errors).unwrap();
        let sc = Scanner::new(&spec).unwrap();

        // Fixed α: exact quadratic form, σ_μ² = [(AᵀA/σ²)⁻¹]_μμ.
        let sig2 = 0.09;
        let (ss, sc_, cc) = s.iter().zip(&bkg).fold((0.0, 0.0, 0.0), |a, (x, y)| (a.0 + x * x, a.1 + x * y, a.2 + y * y));
        let var_mu = sig2 * cc / (ss * cc - sc_ * sc_);
        let fixed = sc.fit_signal_fixed_alpha(&d, k, 0.033).unwrap();
        assert!((fixed.mu_hat - 3.0).abs() < 1e-9);
        let rss_b = {
            let beta = bkg.iter().zip(&d.counts).map(|(x, y)| x * y).sum::<f64>() / cc;
            bkg.iter().zip(&d.counts).map(|(x, y)| (beta * x - y).powi(2)).sum::<f64>()
        };
        let t_fixed = rss_b / sig2 - 2.0 * fixed.nll;
        assert!((t_fixed - 9.0 / var_mu).abs() < 1e-8 * t_fixed, "{t_fixed} vs {}", 9.0 / var_mu);

        // Free α: linearized Fisher information at the truth, 3×3.
        let x: Vec<f64> = spec.bin_centers.iter().map(|m| m - 100.0).collect();
        let cols = [s.clone(), bkg.clone(), bkg.iter().zip(&x).map(|(b, x)| -x * b).collect::<Vec<_>>()];
        let mut fm = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                fm[i][j] = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum::<f64>() / sig2;
            }
        }
        let minor = fm[1][1] * fm[2][2] - fm[1][2] * fm[2][1];
        let det = fm[0][0] * minor - fm[0][1] * (fm[1][0] * fm[2][2] - fm[1][2] * fm[2][0])
            + fm[0][2] * (fm[1][0] * fm[2][1] - fm[1][1] * fm[2][0]);
        let var_free = minor / det;
        let res = sc.scan(&d).unwrap();
        assert!((res.mu_hat[k] - 3.0).abs() < 1e-6);
        let expect = 9.0 / var_free;
        assert!((res.t[k] - expect).abs() < 0.02 * expect, "{} vs {expect}", res.t[k]);
        assert!(res.curve.z[k] > 0.0);
    }

    #[test]
    fn deficit_gives_negative_significance() {
        for spec in [ModelSpec::background_template(), ModelSpec::hgg_1d()] {
            let k = spec.region.len() / 2;
            let s = spec.signal_template(k).unwrap();
            let mut counts = spec.nominal_background();
            for (c, si) in counts.iter_mut().zip(&s) {
                *c = (*c - 20.0 * si).max(0.0);
            }
            let d = BinnedDataSet::new(spec.bin_centers.clone(), counts, spec.errors).unwrap();
            let r = Scanner::new(&spec).unwrap().scan(&d).unwrap();
            assert!(r.mu_hat[k] < 0.0);
            assert!(r.curve.z[k] < 0.0);
        }
    }

    #[test]
    fn injected_signal_increases_likelihood_ratio() {
        let spec = ModelSpec::background_template();
        let sc = Scanner::new(&spec).unwrap();
        let k = spec.region.find(GridPoint { mass: 60.0, width: None }).unwrap();
        let toy = spec.sample_toy(&RandomStream::new(3, 0));
        let s = spec.signal_template(k).unwrap();
        let mut last = -1.0;
        for inj in [0.0, 40.0, 80.0, 160.0] {
            let counts: Vec<f64> = toy.counts.iter().zip(&s).map(|(c, s)| (c + inj * s).round()).collect();
            let d = BinnedDataSet::new(spec.bin_centers.clone(), counts, spec.errors).unwrap();
            let b = sc.fit_background(&d).unwrap();
            let f = sc.fit_signal(&d, k).unwrap();
            let t = 2.0 * (b.nll - f.nll);
            if inj > 0.0 {
                assert!(t > last, "t {t} after {last}");
            }
            last = t;
        }
    }

    #[test]
    fn nesting_and_warm_start_invariance() {
        for spec in [ModelSpec::background_template(), ModelSpec::hgg_1d()] {
            let sc = Scanner::new(&spec).unwrap();
            let n = spec.region.len();
            for j in 0..100u64 {
                let d = spec.sample_toy(&RandomStream::new(77, j));
                let b = sc.fit_background(&d).unwrap();
                let k = (j as usize * 37) % n;
                let warm = sc.fit_signal_from(&d, k, &b).unwrap();
                assert!(warm.nll <= b.nll + 1e-9);
                let cold_start = FitResult {
                    mu_hat: 5.0,
                    theta_hat: BackgroundParams {
                        beta: 0.9,
                        alpha_b: b.theta_hat.alpha_b.map(|a| a * 1.3),
                    },
                    ..b
                };
                let cold = sc.fit_signal_from(&d, k, &cold_start).unwrap();
                assert!((warm.nll - cold.nll).abs() < 1e-8, "{} vs {}", warm.nll, cold.nll);
            }
        }
    }

    #[test]
    fn gaussian_optimizer_matches_normal_equations() {
        let spec = ModelSpec::hgg_1d();
        let sc = Scanner::new(&spec).unwrap();
        let d = spec.sample_toy(&RandomStream::new(8, 1));
        for k in [3usize, 30, 57] {
            let f = sc.fit_signal(&d, k).unwrap();
            let a = f.theta_hat.alpha_b.unwrap();
            let s = spec.signal_template(k).unwrap();
            let c: Vec<f64> = spec.bin_centers.iter().map(|m| 10.0 * (-a * (m - 100.0)).exp()).collect();
            let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| x * y).sum::<f64>();
            let (ss, scc, cc, sd, cd) = (dot(&s, &s), dot(&s, &c), dot(&c, &c), dot(&s, &d.counts), dot(&c, &d.counts));
            let det = ss * cc - scc * scc;
            let mu = (cc * sd - scc * cd) / det;
            let beta = (ss * cd - scc * sd) / det;
            assert!((f.mu_hat - mu).abs() < 1e-8);
            assert!((f.theta_hat.beta - beta).abs() < 1e-8);
        }
    }

    #[test]
    fn exact_background_gives_zero_curve() {
        for spec in [ModelSpec::hgg_1d(), ModelSpec::hgg_2d()] {
            let d = asimov(&spec);
            let z = significance_scan(&spec, &d).unwrap().z;
            assert_eq!(z.len(), spec.region.len());
            assert!(z.iter().all(|v| v.abs() < 1e-6));
        }
    }

    #[test]
    fn null_distribution_at_fixed_point() {
        let spec = ModelSpec::hgg_1d();
        let sc = Scanner::new(&spec).unwrap();
        let k = 30;
        let n = 2000;
        let mut z = Vec::with_capacity(n);
        let mut t = Vec::with_capacity(n);
        for j in 0..n as u64 {
            let d = spec.sample_toy(&RandomStream::new(21, j));
            let b = sc.fit_background(&d).unwrap();
            let f = sc.fit_signal_from(&d, k, &b).unwrap();
            let tk = test_statistic(&b, &f, k).unwrap();
            t.push(tk);
            z.push(signed_significance(tk, f.mu_hat));
        }
        assert!(ks_test(&z, std_normal_cdf).p_value > 1e-3);
        assert!(ks_test(&t, chi2_1_cdf).p_value > 1e-3);
    }

    #[test]
    fn rejects_mismatched_data() {
        let spec = ModelSpec::hgg_1d();
        let sc = Scanner::new(&spec).unwrap();
        let d = BinnedDataSet::new(vec![1.0, 2.0], vec![1.0, 2.0], spec.errors).unwrap();
        assert!(matches!(sc.fit_background(&d), Err(Error::ShapeMismatch(_))));
        let p = BinnedDataSet::new(spec.bin_centers.clone(), vec![1.0; 61], ErrorModel::Poisson).unwrap();
        assert!(sc.fit_background(&p).is_err());
    }
}
