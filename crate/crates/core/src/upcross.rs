//! Expected up-crossings of a Gaussian process from its covariance kernel.
//!
//! The kernel is interpolated by a natural bicubic spline so that the
//! derivatives entering the crossing density come out exactly from the
//! spline polynomials. The density
//!
//! ```text
//! ν⁺(u, t) = φ(u/σ)/σ · (μ* Φ(μ*/σ*) + σ* φ(μ*/σ*))
//! ```
//!
//! with `σ² = K(t,t)`, `σ̇² = ∂ₓ∂ᵧK(t,t)`, `ρ = ∂ᵧK(t,t)/(σσ̇)`,
//! `μ* = uρσ̇/σ` and `σ* = σ̇√(1−ρ²)`, is integrated with adaptive Simpson
//! quadrature over the interior of the grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{std_normal_cdf, CovMatrix};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Second derivatives of the natural cubic spline through `(x, y)`.
fn natural_second_derivatives(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on the interior equations.
    let mut c_prime = vec![0.0; n];
    let mut d_prime = vec![0.0; n];
    for i in 1..n - 1 {
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        let a = h0 / 6.0;
        let b = (h0 + h1) / 3.0;
        let c = h1 / 6.0;
        let d = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
        let denom = b - a * c_prime[i - 1];
        c_prime[i] = c / denom;
        d_prime[i] = (d - a * d_prime[i - 1]) / denom;
    }
    for i in (1..n - 1).rev() {
        m[i] = d_prime[i] - c_prime[i] * m[i + 1];
    }
    m
}

/// Value and first derivative weights of the cubic on one cell.
#[derive(Clone, Copy)]
struct Basis {
    w: [f64; 4],
    dw: [f64; 4],
}

fn basis(x0: f64, x1: f64, x: f64) -> Basis {
    let h = x1 - x0;
    let a = (x1 - x) / h;
    let b = 1.0 - a;
    Basis {
        w: [a, b, (a * a * a - a) * h * h / 6.0, (b * b * b - b) * h * h / 6.0],
        dw: [-1.0 / h, 1.0 / h, -(3.0 * a * a - 1.0) * h / 6.0, (3.0 * b * b - 1.0) * h / 6.0],
    }
}

/// Bicubic interpolant of a symmetric kernel on a square grid.
#[derive(Debug, Clone)]
pub struct KernelSurface {
    axis: Vec<f64>,
    f: Vec<f64>,
    fxx: Vec<f64>,
    fyy: Vec<f64>,
    fxxyy: Vec<f64>,
}

/// `K`, `∂ₓK`, `∂ᵧK`, `∂ₓ∂ᵧK` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelJet {
    pub k: f64,
    pub kx: f64,
    pub ky: f64,
    pub kxy: f64,
}

impl KernelSurface {
    /// `values` is row-major over `axis × axis`.
    pub fn new(axis: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let n = axis.len();
        if n < 4 {
            return Err(Error::InvalidParams("kernel grid needs at least 4 points".into()));
        }
        if axis.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParams("kernel grid must be strictly increasing".into()));
        }
        if values.len() != n * n {
            return Err(Error::ShapeMismatch(format!("{} values for a {n}x{n} grid", values.len())));
        }
        let col = |data: &[f64], j: usize| -> Vec<f64> { (0..n).map(|i| data[i * n + j]).collect() };
        // along x (first index) for each column
        let mut fxx = vec![0.0; n * n];
        for j in 0..n {
            let m = natural_second_derivatives(&axis, &col(&values, j));
            for i in 0..n {
                fxx[i * n + j] = m[i];
            }
        }
        let along_y = |data: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; n * n];
            for i in 0..n {
                let m = natural_second_derivatives(&axis, &data[i * n..(i + 1) * n]);
                out[i * n..(i + 1) * n].copy_from_slice(&m);
            }
            out
        };
        let fyy = along_y(&values);
        let fxxyy = along_y(&fxx);
        Ok(Self {
            axis,
            f: values,
            fxx,
            fyy,
            fxxyy,
        })
    }

    pub fn from_cov(cov: &CovMatrix) -> Result<Self> {
        if cov.region().dims() != 1 {
            return Err(Error::InvalidParams("analytic crossings need a 1D region".into()));
        }
        Self::new(cov.region().mass_axis().to_vec(), cov.values().to_vec())
    }

    /// Tabulates `kernel` on `axis × axis`.
    pub fn from_kernel(axis: Vec<f64>, kernel: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let values = axis.iter().flat_map(|&x| axis.iter().map(move |&y| (x, y))).map(|(x, y)| kernel(x, y)).collect();
        Self::new(axis, values)
    }

    pub fn axis(&self) -> &[f64] {
        &self.axis
    }

    /// Domain over which crossing densities are evaluated: one grid step in
    /// from each edge.
    pub fn interior(&self) -> (f64, f64) {
        let n = self.axis.len();
        (self.axis[1], self.axis[n - 2])
    }

    fn cell(&self, x: f64) -> usize {
        let n = self.axis.len();
        match self.axis.partition_point(|&a| a <= x) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        }
    }

    /// Spline value and exact derivatives at `(x, y)`.
    pub fn jet(&self, x: f64, y: f64) -> KernelJet {
        let n = self.axis.len();
        let (i, j) = (self.cell(x), self.cell(y));
        let bx = basis(self.axis[i], self.axis[i + 1], x);
        let by = basis(self.axis[j], self.axis[j + 1], y);
        let mut jet = KernelJet {
            k: 0.0,
            kx: 0.0,
            ky: 0.0,
            kxy: 0.0,
        };
        for (p, di) in [i, i + 1].into_iter().enumerate() {
            for (q, dj) in [j, j + 1].into_iter().enumerate() {
                let idx = di * n + dj;
                // which (x-type, y-type) weight pairs multiply which node array
                let terms = [
                    (p, q, self.f[idx]),
                    (p + 2, q, self.fxx[idx]),
                    (p, q + 2, self.fyy[idx]),
                    (p + 2, q + 2, self.fxxyy[idx]),
                ];
                for (a, b, v) in terms {
                    jet.k += bx.w[a] * by.w[b] * v;
                    jet.kx += bx.dw[a] * by.w[b] * v;
                    jet.ky += bx.w[a] * by.dw[b] * v;
                    jet.kxy += bx.dw[a] * by.dw[b] * v;
                }
            }
        }
        jet
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        self.jet(x, y).k
    }
}

/// Local quantities entering the crossing density at one position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingStats {
    pub t: f64,
    pub sigma: f64,
    pub sigma_dot: f64,
    pub rho_dot: f64,
    pub sigma_star: f64,
}

impl CrossingStats {
    /// Conditional mean of the derivative given `Z(t) = u`.
    pub fn mu_star(&self, u: f64) -> f64 {
        u * self.rho_dot * self.sigma_dot / self.sigma
    }

    /// Up-crossing density of level `u` at `t`.
    pub fn density(&self, u: f64) -> f64 {
        let env = (-0.5 * (u / self.sigma).powi(2)).exp() * INV_SQRT_2PI / self.sigma;
        let mu = self.mu_star(u);
        let s = self.sigma_star;
        if s <= 0.0 {
            return mu.max(0.0) * env;
        }
        let r = mu / s;
        env * (mu * std_normal_cdf(r) + s * INV_SQRT_2PI * (-0.5 * r * r).exp())
    }
}

pub fn kernel_derivatives(surface: &KernelSurface, t: f64) -> Result<CrossingStats> {
    let (lo, hi) = surface.interior();
    if !(t >= lo - 1e-12 && t <= hi + 1e-12) {
        return Err(Error::DomainBoundary { t, lo, hi });
    }
    Ok(crossing_stats_unchecked(surface, t))
}

fn crossing_stats_unchecked(surface: &KernelSurface, t: f64) -> CrossingStats {
    let j = surface.jet(t, t);
    let sigma = j.k.max(f64::MIN_POSITIVE).sqrt();
    let sigma_dot = j.kxy.max(0.0).sqrt();
    let rho = if sigma_dot > 0.0 {
        (j.ky / (sigma * sigma_dot)).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    CrossingStats {
        t,
        sigma,
        sigma_dot,
        rho_dot: rho,
        sigma_star: sigma_dot * (1.0 - rho * rho).max(0.0).sqrt(),
    }
}

pub fn upcrossing_density(surface: &KernelSurface, u: f64, t: f64) -> Result<f64> {
    Ok(kernel_derivatives(surface, t)?.density(u))
}

/// Result of the crossing-count quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingCount {
    pub u: f64,
    /// Integral of the density over the interior.
    pub expected: f64,
    /// Last doubling change, as an estimate of the quadrature error.
    pub error_estimate: f64,
    pub panels: usize,
    /// Length excluded at the two edges.
    pub excluded_length: f64,
    /// Edge segments filled in with the density at the adjacent interior end.
    pub edge_estimate: f64,
}

impl CrossingCount {
    /// Count over the full grid range, interior plus edge estimate.
    pub fn total(&self) -> f64 {
        self.expected + self.edge_estimate
    }
}

const MIN_PANELS: usize = 64;
const MAX_PANELS: usize = 1 << 16;
const QUAD_RTOL: f64 = 1e-4;
const QUAD_FAIL: f64 = 1e-3;

pub fn expected_upcrossings(surface: &KernelSurface, u: f64) -> Result<CrossingCount> {
    let (lo, hi) = surface.interior();
    let dens = |t: f64| crossing_stats_unchecked(surface, t).density(u);
    let simpson = |panels: usize| -> f64 {
        let h = (hi - lo) / panels as f64;
        let mut s = dens(lo) + dens(hi);
        for k in 1..panels {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * dens(lo + k as f64 * h);
        }
        s * h / 3.0
    };
    let mut panels = MIN_PANELS;
    let mut prev = simpson(panels);
    let mut change;
    loop {
        panels *= 2;
        let next = simpson(panels);
        change = (next - prev).abs() / next.abs().max(f64::MIN_POSITIVE);
        prev = next;
        if next == 0.0 {
            change = 0.0;
        }
        if change <= QUAD_RTOL || panels >= MAX_PANELS {
            break;
        }
    }
    if change > QUAD_FAIL {
        return Err(Error::QuadratureNotConverged {
            panels,
            rel_change: change,
        });
    }
    let a = surface.axis();
    let n = a.len();
    let (left, right) = (a[1] - a[0], a[n - 1] - a[n - 2]);
    Ok(CrossingCount {
        u,
        expected: prev,
        error_estimate: change * prev.abs(),
        panels,
        excluded_length: left + right,
        edge_estimate: left * dens(lo) + right * dens(hi),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn se_surface(alpha2: f64, lo: f64, hi: f64, step: f64) -> KernelSurface {
        let n = ((hi - lo) / step).round() as usize + 1;
        let axis: Vec<f64> = (0..n).map(|i| lo + i as f64 * step).collect();
        KernelSurface::from_kernel(axis, |x, y| (-(x - y).powi(2) / alpha2).exp()).unwrap()
    }

    #[test]
    fn natural_spline_reproduces_cubic_interior() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!(natural_second_derivatives(&x, &y).iter().all(|m| m.abs() < 1e-12));
    }

    #[test]
    fn interpolates_nodes() {
        let s = se_surface(10.0, 0.0, 20.0, 0.5);
        for &x in &s.axis()[..] {
            for &y in s.axis().iter().step_by(3) {
                let v = (-(x - y) * (x - y) / 10.0f64).exp();
                assert!((s.value(x, y) - v).abs() < 1e-10);
                assert!((s.value(x, y) - s.value(y, x)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn stationary_kernel_derivatives() {
        let s = se_surface(10.0, 0.0, 40.0, 0.1);
        for t in [5.0, 13.37, 27.1] {
            let c = kernel_derivatives(&s, t).unwrap();
            assert!((c.sigma - 1.0).abs() < 1e-7);
            assert!(c.rho_dot.abs() < 1e-5);
            assert!((c.sigma_dot - 0.2f64.sqrt()).abs() < 1e-6, "{}", c.sigma_dot);
            assert!((c.sigma_star - c.sigma_dot).abs() < 1e-9);
            assert!(c.mu_star(2.0).abs() < 1e-5);
        }
    }

    #[test]
    fn rice_density() {
        let s = se_surface(10.0, 0.0, 40.0, 0.25);
        let d0 = upcrossing_density(&s, 0.0, 20.0).unwrap();
        assert!((d0 - 0.071_176_254_341_717_71).abs() < 1e-4 * 0.0712, "{d0}");
        for u in [0.5, 1.0, 2.0, 3.0] {
            let d = upcrossing_density(&s, u, 20.0).unwrap();
            assert!((d / d0 - (-0.5 * u * u as f64).exp()).abs() < 1e-9);
        }
        let mut last = f64::INFINITY;
        for k in 0..40 {
            let d = upcrossing_density(&s, 1.0 + 0.25 * k as f64, 20.0).unwrap();
            assert!(d < last);
            last = d;
        }
    }

    #[test]
    fn boundary_is_rejected() {
        let s = se_surface(10.0, 0.0, 10.0, 0.5);
        assert!(matches!(kernel_derivatives(&s, 0.2), Err(Error::DomainBoundary { .. })));
        assert!(kernel_derivatives(&s, 0.5).is_ok());
    }

    #[test]
    fn coordinate_change_kernel_matches_finite_differences() {
        // stretch of the coordinate: unit variance, so ∂ᵧK(t,t) = 0
        let c = |x: f64| 0.2 + 0.01 * x;
        let k = |x: f64, y: f64| (-(x - y).powi(2) * c(x) * c(y)).exp();
        let axis: Vec<f64> = (0..=400).map(|i| i as f64 * 0.1).collect();
        let s = KernelSurface::from_kernel(axis, k).unwrap();
        let h = 1e-4;
        for t in [6.0, 20.05, 33.3] {
            let jet = s.jet(t, t);
            let fd_xy = (k(t + h, t + h) - k(t + h, t - h) - k(t - h, t + h) + k(t - h, t - h)) / (4.0 * h * h);
            let fd_y = (k(t, t + h) - k(t, t - h)) / (2.0 * h);
            assert!(fd_y.abs() < 1e-9 && jet.ky.abs() < 1e-6);
            assert!((jet.kxy - fd_xy).abs() < 1e-5 * fd_xy, "{} vs {fd_xy}", jet.kxy);
        }
        // modulated variance: ∂ᵧK(t,t) = v(t) v'(t) ≠ 0
        let v = |x: f64| 1.0 + 0.3 * (x / 7.0).sin();
        let k = |x: f64, y: f64| v(x) * v(y) * (-(x - y).powi(2) / 10.0).exp();
        let axis: Vec<f64> = (0..=400).map(|i| i as f64 * 0.1).collect();
        let s = KernelSurface::from_kernel(axis, k).unwrap();
        for t in [6.0, 20.05, 33.3] {
            let fd_y = (k(t, t + h) - k(t, t - h)) / (2.0 * h);
            let jet = s.jet(t, t);
            assert!(fd_y.abs() > 1e-3);
            assert!((jet.ky - fd_y).abs() < 1e-6, "{} vs {fd_y}", jet.ky);
            let c = kernel_derivatives(&s, t).unwrap();
            assert!(c.rho_dot.abs() <= 1.0 + 1e-9 && c.sigma_star >= 0.0);
        }
    }

    #[test]
    fn stationary_count_closed_form() {
        let s = se_surface(10.0, 0.0, 155.0, 10f64.sqrt() / 10.0);
        let (lo, hi) = s.interior();
        for u in [0.0, 1.0, 2.0] {
            let c = expected_upcrossings(&s, u).unwrap();
            let exact = (hi - lo) * 0.2f64.sqrt() / (2.0 * std::f64::consts::PI) * (-0.5 * u * u).exp();
            assert!((c.expected / exact - 1.0).abs() < 5e-3, "u={u}: {} vs {exact}", c.expected);
        }
    }

    #[test]
    fn count_is_additive_in_range() {
        let full = se_surface(10.0, 0.0, 80.0, 0.25);
        let half = se_surface(10.0, 0.0, 40.25, 0.25);
        let a = expected_upcrossings(&full, 1.0).unwrap();
        let b = expected_upcrossings(&half, 1.0).unwrap();
        let ratio = b.expected / a.expected;
        let (l1, h1) = full.interior();
        let (l2, h2) = half.interior();
        assert!((ratio - (h2 - l2) / (h1 - l1)).abs() < 1e-3, "{ratio}");
    }

    #[test]
    fn degenerate_sigma_star() {
        let c = CrossingStats {
            t: 0.0,
            sigma: 1.0,
            sigma_dot: 0.5,
            rho_dot: 1.0,
            sigma_star: 0.0,
        };
        let u = 1.5;
        let expect = c.mu_star(u) * (-0.5 * u * u).exp() * INV_SQRT_2PI;
        assert!((c.density(u) - expect).abs() < 1e-15);
        assert_eq!(c.density(-1.0), 0.0);
    }
}
