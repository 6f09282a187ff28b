//! Jittered Cholesky factorization and multivariate-normal sampling.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::cov::CovMatrix;
use super::rng::RandomStream;
use crate::error::{Error, Result};

/// Default first rung of the jitter ladder.
pub const DEFAULT_JITTER: f64 = 1e-10;
/// Largest jitter tried before giving up.
pub const MAX_JITTER: f64 = 1e-4;

/// Lower-triangular `L` with `L Lᵀ = S + εI`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CholeskyFactor {
    n: usize,
    /// Row-major, full `n × n` storage; the strict upper triangle is zero.
    lower: Vec<f64>,
    jitter: f64,
}

/// In-place attempt at `A + εI = L Lᵀ`; `None` on a non-positive pivot.
fn try_factor(a: &[f64], n: usize, eps: f64) -> Option<Vec<f64>> {
    let floor = (n.max(16) as f64) * f64::EPSILON;
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let (ri, rj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
            let dot: f64 = ri.iter().zip(rj).map(|(x, y)| x * y).sum();
            let s = a[i * n + j] - dot;
            if i == j {
                let d = s + eps;
                if !(d > floor * (a[i * n + i] + eps)) || !d.is_finite() {
                    return None;
                }
                l[i * n + i] = d.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Factorizes a symmetric matrix given as a row-major slice, climbing the
/// jitter ladder `0, j, 10j, 100j, …` until the factorization succeeds.
pub fn cholesky_psd_raw(values: &[f64], n: usize, jitter_start: f64) -> Result<CholeskyFactor> {
    if values.len() != n * n {
        return Err(Error::ShapeMismatch(format!("{} values for {n}x{n}", values.len())));
    }
    if !(jitter_start >= 0.0) {
        return Err(Error::InvalidParams(format!("jitter_start = {jitter_start}")));
    }
    let mut eps = 0.0;
    loop {
        if let Some(lower) = try_factor(values, n, eps) {
            return Ok(CholeskyFactor { n, lower, jitter: eps });
        }
        let next = if eps == 0.0 { jitter_start } else { eps * 10.0 };
        if next == 0.0 || next > MAX_JITTER * (1.0 + 1e-12) {
            return Err(Error::FactorizationFailed {
                last_jitter: eps,
                max_jitter: MAX_JITTER,
            });
        }
        eps = next;
    }
}

pub fn cholesky_psd(s: &CovMatrix, jitter_start: f64) -> Result<CholeskyFactor> {
    cholesky_psd_raw(s.values(), s.n(), jitter_start)
}

impl CholeskyFactor {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    /// `L Lᵀ`, for checks.
    pub fn reconstruct(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        unsafe {
            matrixmultiply::dgemm(
                n, n, n, 1.0,
                self.lower.as_ptr(), n as isize, 1,
                self.lower.as_ptr(), 1, n as isize,
                0.0,
                out.as_mut_ptr(), n as isize, 1,
            );
        }
        out
    }

    /// Curves `start .. start + count` of the family rooted at `stream`,
    /// row-major `count × n`. Curve `j` is `L g_j` with `g_j` drawn from
    /// `stream.substream(j)`, so any partition of the index range gives the
    /// same curves.
    pub fn sample_block(&self, stream: &RandomStream, start: u64, count: usize) -> Vec<f64> {
        let n = self.n;
        let mut g = vec![0.0; count * n];
        for (j, row) in g.chunks_exact_mut(n).enumerate() {
            let mut rng = stream.substream(start + j as u64).rng();
            for v in row.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
        }
        let mut z = vec![0.0; count * n];
        // Z = G Lᵀ
        unsafe {
            matrixmultiply::dgemm(
                count, n, n, 1.0,
                g.as_ptr(), n as isize, 1,
                self.lower.as_ptr(), 1, n as isize,
                0.0,
                z.as_mut_ptr(), n as isize, 1,
            );
        }
        z
    }
}

/// `n` draws from `N(0, L Lᵀ)`.
pub fn sample_mvn(factor: &CholeskyFactor, n: usize, stream: &RandomStream) -> Vec<Vec<f64>> {
    let block = factor.sample_block(stream, 0, n);
    block.chunks_exact(factor.n()).map(<[f64]>::to_vec).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frob_rel(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        let den: f64 = b.iter().map(|x| x * x).sum();
        (num / den).sqrt()
    }

    #[test]
    fn identity_needs_no_jitter() {
        let id = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let f = cholesky_psd_raw(&id, 3, 0.0).unwrap();
        assert_eq!(f.jitter(), 0.0);
        assert_eq!(f.lower(), &id[..]);
    }

    #[test]
    fn rank_one_succeeds_with_small_jitter() {
        let s = vec![1.0, 1.0, 1.0, 1.0];
        let f = cholesky_psd_raw(&s, 2, DEFAULT_JITTER).unwrap();
        assert!(f.jitter() > 0.0 && f.jitter() <= 1e-8);
        let mut target = s.clone();
        target[0] += f.jitter();
        target[3] += f.jitter();
        assert!(frob_rel(&f.reconstruct(), &target) < 1e-10);
        for (x, y) in f.reconstruct().iter().zip(&s) {
            assert!((x - y).abs() <= f.jitter() * 1.0001);
        }
    }

    #[test]
    fn non_correlation_matrix_fails() {
        let s = vec![1.0, 1.5, 1.5, 1.0];
        assert!(matches!(
            cholesky_psd_raw(&s, 2, DEFAULT_JITTER),
            Err(Error::FactorizationFailed { .. })
        ));
    }

    #[test]
    fn standard_normal_moments() {
        let f = cholesky_psd_raw(&[1.0], 1, 0.0).unwrap();
        let n = 100_000;
        let xs = f.sample_block(&RandomStream::new(1, 0), 0, n);
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.02, "{mean}");
        assert!((var - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn correlated_pair() {
        let f = cholesky_psd_raw(&[1.0, 0.9, 0.9, 1.0], 2, 0.0).unwrap();
        let n = 100_000;
        let xs = f.sample_block(&RandomStream::new(2, 0), 0, n);
        let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
        for p in xs.chunks_exact(2) {
            sxx += p[0] * p[0];
            syy += p[1] * p[1];
            sxy += p[0] * p[1];
        }
        let r = sxy / (sxx * syy).sqrt();
        assert!((r - 0.9).abs() < 0.01, "{r}");
    }

    #[test]
    fn blocks_are_partition_independent() {
        let f = cholesky_psd_raw(&[1.0, 0.3, 0.3, 1.0], 2, 0.0).unwrap();
        let s = RandomStream::new(9, 4);
        let whole = f.sample_block(&s, 0, 10);
        let mut parts = f.sample_block(&s, 0, 4);
        parts.extend(f.sample_block(&s, 4, 6));
        assert_eq!(whole, parts);
        let again = sample_mvn(&f, 10, &s);
        assert_eq!(again.concat(), whole);
    }
}
