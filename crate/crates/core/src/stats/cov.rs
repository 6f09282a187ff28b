//! Unit-diagonal covariance (correlation) matrices over a search region.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::region::{GridPoint, SearchRegion};

/// Where a covariance matrix came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Asimov,
    BruteForce,
    Amplified,
    AnalyticKernel,
}

const SYMMETRY_TOL: f64 = 1e-12;
const DIAG_TOL: f64 = 1e-12;
const RANGE_TOL: f64 = 1e-9;

/// Symmetric, unit-diagonal matrix Σ̂ over the flattened points of a region.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    region: SearchRegion,
    values: Vec<f64>,
    provenance: Provenance,
}

impl CovMatrix {
    /// Wraps an already normalized matrix, checking every invariant.
    pub fn from_parts(region: SearchRegion, values: Vec<f64>, provenance: Provenance) -> Result<Self> {
        let n = region.len();
        if values.len() != n * n {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {n}x{n} matrix",
                values.len()
            )));
        }
        for i in 0..n {
            let d = values[i * n + i];
            if (d - 1.0).abs() > DIAG_TOL {
                return Err(Error::InvalidParams(format!("diagonal entry {i} is {d}, expected 1")));
            }
            for j in 0..i {
                let a = values[i * n + j];
                let b = values[j * n + i];
                if !a.is_finite() || (a - b).abs() > SYMMETRY_TOL * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::InvalidParams(format!("matrix not symmetric at ({i},{j})")));
                }
                if a.abs() > 1.0 + RANGE_TOL {
                    return Err(Error::InvalidParams(format!("entry ({i},{j}) = {a} outside [-1, 1]")));
                }
            }
        }
        Ok(Self {
            region,
            values,
            provenance,
        })
    }

    /// Normalizes a raw covariance to unit diagonal, `Σ_ij / √(Σ_ii Σ_jj)`,
    /// averaging the two triangles and clipping rounding overshoot past ±1.
    pub fn normalize(region: SearchRegion, mut raw: Vec<f64>, provenance: Provenance) -> Result<Self> {
        let n = region.len();
        if raw.len() != n * n {
            return Err(Error::ShapeMismatch(format!("{} values for a {n}x{n} matrix", raw.len())));
        }
        let mut scale = Vec::with_capacity(n);
        for i in 0..n {
            let d = raw[i * n + i];
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::DegenerateDiagonal { index: i });
            }
            scale.push(1.0 / d.sqrt());
        }
        for i in 0..n {
            raw[i * n + i] = 1.0;
            for j in 0..i {
                let v = 0.5 * (raw[i * n + j] + raw[j * n + i]) * scale[i] * scale[j];
                let v = v.clamp(-1.0, 1.0);
                raw[i * n + j] = v;
                raw[j * n + i] = v;
            }
        }
        Ok(Self {
            region,
            values: raw,
            provenance,
        })
    }

    pub fn n(&self) -> usize {
        self.region.len()
    }

    pub fn region(&self) -> &SearchRegion {
        &self.region
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n();
        &self.values[i * n..(i + 1) * n]
    }

    pub(crate) fn with_provenance(mut self, p: Provenance) -> Self {
        self.provenance = p;
        self
    }

    /// CSV form: one header line of flattened point labels, then N rows of N
    /// values in shortest round-trip formatting.
    pub fn to_csv_string(&self) -> String {
        let n = self.n();
        let mut out = String::with_capacity(n * n * 20);
        out.push_str(&self.region.labels().join(","));
        out.push('\n');
        for i in 0..n {
            for (j, v) in self.row(i).iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    /// Parses the CSV form. The region is rebuilt from the header labels.
    pub fn from_csv_str(s: &str, provenance: Provenance) -> Result<Self> {
        let (region, values) = parse_matrix_csv(s)?;
        Self::from_parts(region, values, provenance)
    }

    /// Writes `path` (CSV) and its JSON sidecar next to it.
    pub fn save(&self, path: &Path, jitter: Option<f64>, seed: Option<u64>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        let side = CovSidecar {
            provenance: self.provenance,
            grid: self.region.clone(),
            jitter,
            seed,
        };
        std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&side)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, CovSidecar)> {
        let side: CovSidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
        let text = std::fs::read_to_string(path)?;
        let (region, values) = parse_matrix_csv(&text)?;
        if region != side.grid {
            return Err(Error::ShapeMismatch("CSV header disagrees with sidecar grid".into()));
        }
        Ok((Self::from_parts(region, values, side.provenance)?, side))
    }
}

/// JSON sidecar stored next to a covariance CSV.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CovSidecar {
    pub provenance: Provenance,
    pub grid: SearchRegion,
    pub jitter: Option<f64>,
    pub seed: Option<u64>,
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    path.with_extension("json")
}

/// Parses a labelled square matrix CSV, as written by [`CovMatrix::to_csv_string`].
pub fn parse_matrix_csv(s: &str) -> Result<(SearchRegion, Vec<f64>)> {
    let mut lines = s.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty matrix CSV".into()))?;
    let points = header
        .split(',')
        .map(GridPoint::parse_label)
        .collect::<Result<Vec<_>>>()?;
    let region = region_from_points(&points)?;
    let n = points.len();
    let mut values = Vec::with_capacity(n * n);
    for (r, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let before = values.len();
        for tok in line.split(',') {
            values.push(
                tok.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {r}: {e}")))?,
            );
        }
        if values.len() - before != n {
            return Err(Error::Parse(format!("row {r} has {} columns, expected {n}", values.len() - before)));
        }
    }
    if values.len() != n * n {
        return Err(Error::Parse(format!("expected {n} rows, got {}", values.len() / n.max(1))));
    }
    Ok((region, values))
}

/// Rebuilds a region from its flattened (mass-major) point list.
pub fn region_from_points(points: &[GridPoint]) -> Result<SearchRegion> {
    let first = points.first().ok_or_else(|| Error::Parse("no grid points".into()))?;
    match first.width {
        None => SearchRegion::one_d(points.iter().map(|p| p.mass).collect()),
        Some(_) => {
            let widths: Vec<f64> = points
                .iter()
                .take_while(|p| p.mass == first.mass)
                .map(|p| p.width.unwrap_or(f64::NAN))
                .collect();
            let k = widths.len();
            if k == 0 || points.len() % k != 0 {
                return Err(Error::Parse("2D labels are not a full mass-major grid".into()));
            }
            let masses: Vec<f64> = points.iter().step_by(k).map(|p| p.mass).collect();
            let region = SearchRegion::two_d(masses, widths)?;
            if region.points().zip(points).any(|(a, b)| a != *b) {
                return Err(Error::Parse("2D labels are not a full mass-major grid".into()));
            }
            Ok(region)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn region(n: usize) -> SearchRegion {
        SearchRegion::one_d((0..n).map(|i| i as f64 * 0.5).collect()).unwrap()
    }

    #[test]
    fn normalize_gives_unit_diagonal() {
        let raw = vec![4.0, 2.0, 2.0, 9.0];
        let c = CovMatrix::normalize(region(2), raw, Provenance::Asimov).unwrap();
        assert_eq!(c.get(0, 0), 1.0);
        assert_eq!(c.get(1, 1), 1.0);
        assert!((c.get(0, 1) - 2.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn zero_diagonal_is_degenerate() {
        let raw = vec![1.0, 0.0, 0.0, 0.0];
        assert!(matches!(
            CovMatrix::normalize(region(2), raw, Provenance::Asimov),
            Err(Error::DegenerateDiagonal { index: 1 })
        ));
    }

    #[test]
    fn from_parts_checks_invariants() {
        assert!(CovMatrix::from_parts(region(2), vec![1.0, 0.5, 0.4, 1.0], Provenance::Asimov).is_err());
        assert!(CovMatrix::from_parts(region(2), vec![1.0, 1.5, 1.5, 1.0], Provenance::Asimov).is_err());
        assert!(CovMatrix::from_parts(region(2), vec![1.0, 0.5, 0.5, 1.0], Provenance::Asimov).is_ok());
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let v = 1.0 / 3.0;
        let c = CovMatrix::from_parts(region(2), vec![1.0, v, v, 1.0], Provenance::BruteForce).unwrap();
        let back = CovMatrix::from_csv_str(&c.to_csv_string(), Provenance::BruteForce).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn csv_round_trip_2d() {
        let r = SearchRegion::two_d(vec![100.0, 101.0], vec![1.0, 1.15, 1.3]).unwrap();
        let n = r.len();
        let mut vals = vec![0.25; n * n];
        for i in 0..n {
            vals[i * n + i] = 1.0;
        }
        let c = CovMatrix::from_parts(r, vals, Provenance::Asimov).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cov.csv");
        c.save(&p, Some(1e-10), Some(3)).unwrap();
        let (back, side) = CovMatrix::load(&p).unwrap();
        assert_eq!(back, c);
        assert_eq!(side.jitter, Some(1e-10));
    }
}
