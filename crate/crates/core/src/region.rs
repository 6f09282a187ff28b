//! Search regions: the grid of signal hypotheses a scan visits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One signal hypothesis: a mass and, for 2D regions, a width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub mass: f64,
    pub width: Option<f64>,
}

impl GridPoint {
    pub fn label(&self) -> String {
        match self.width {
            None => format!("{}", self.mass),
            Some(w) => format!("{}:{}", self.mass, w),
        }
    }

    pub fn parse_label(s: &str) -> Result<Self> {
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("grid label `{s}`: {e}")))
        };
        match s.split_once(':') {
            None => Ok(GridPoint { mass: num(s)?, width: None }),
            Some((m, w)) => Ok(GridPoint {
                mass: num(m)?,
                width: Some(num(w)?),
            }),
        }
    }
}

/// A 1D mass grid, or a 2D mass × width grid flattened mass-major:
/// `(m_1, w_1), …, (m_1, w_k), (m_2, w_1), …`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRegion {
    mass: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    width: Option<Vec<f64>>,
}

fn check_axis(name: &str, axis: &[f64]) -> Result<()> {
    if axis.len() < 2 {
        return Err(Error::config(name, "axis needs at least 2 points"));
    }
    if axis.iter().any(|v| !v.is_finite()) {
        return Err(Error::config(name, "axis values must be finite"));
    }
    if axis.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config(name, "axis must be strictly increasing"));
    }
    Ok(())
}

/// `start, start + step, …` up to and including `stop` (to rounding).
pub fn axis_from_range(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(stop > start) {
        return Err(Error::config("grid", format!("bad range {start}..{stop} step {step}")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|k| start + k as f64 * step).collect())
}

/// `n` evenly spaced points from `start` to `stop` inclusive.
pub fn axis_linspace(start: f64, stop: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 || !(stop > start) {
        return Err(Error::config("grid", format!("bad linspace {start}..{stop} n={n}")));
    }
    let step = (stop - start) / (n - 1) as f64;
    Ok((0..n)
        .map(|k| if k == n - 1 { stop } else { start + k as f64 * step })
        .collect())
}

impl SearchRegion {
    pub fn one_d(mass: Vec<f64>) -> Result<Self> {
        check_axis("search_grid.mass", &mass)?;
        Ok(Self { mass, width: None })
    }

    pub fn two_d(mass: Vec<f64>, width: Vec<f64>) -> Result<Self> {
        check_axis("search_grid.mass", &mass)?;
        check_axis("search_grid.width", &width)?;
        Ok(Self {
            mass,
            width: Some(width),
        })
    }

    pub fn validate(&self) -> Result<()> {
        check_axis("search_grid.mass", &self.mass)?;
        if let Some(w) = &self.width {
            check_axis("search_grid.width", w)?;
        }
        Ok(())
    }

    pub fn mass_axis(&self) -> &[f64] {
        &self.mass
    }

    pub fn width_axis(&self) -> Option<&[f64]> {
        self.width.as_deref()
    }

    pub fn dims(&self) -> usize {
        if self.width.is_some() {
            2
        } else {
            1
        }
    }

    pub fn n_width(&self) -> usize {
        self.width.as_ref().map_or(1, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.mass.len() * self.n_width()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flattened index of mass node `i`, width node `j`.
    pub fn flattened_index(&self, i: usize, j: usize) -> usize {
        i * self.n_width() + j
    }

    /// Inverse of [`flattened_index`](Self::flattened_index).
    pub fn unflatten(&self, k: usize) -> (usize, usize) {
        (k / self.n_width(), k % self.n_width())
    }

    pub fn point(&self, k: usize) -> GridPoint {
        let (i, j) = self.unflatten(k);
        GridPoint {
            mass: self.mass[i],
            width: self.width.as_ref().map(|w| w[j]),
        }
    }

    pub fn points(&self) -> impl Iterator<Item = GridPoint> + '_ {
        (0..self.len()).map(|k| self.point(k))
    }

    /// Flattened index of a grid node, matching coordinates to 1e-9.
    pub fn find(&self, p: GridPoint) -> Option<usize> {
        let near = |axis: &[f64], v: f64| axis.iter().position(|&a| (a - v).abs() <= 1e-9 * a.abs().max(1.0));
        let i = near(&self.mass, p.mass)?;
        match (&self.width, p.width) {
            (None, None) => Some(i),
            (Some(w), Some(pw)) => Some(self.flattened_index(i, near(w, pw)?)),
            _ => None,
        }
    }

    /// Mass extent of the region, used by the rule-of-thumb estimate.
    pub fn mass_range(&self) -> f64 {
        self.mass[self.mass.len() - 1] - self.mass[0]
    }

    pub fn labels(&self) -> Vec<String> {
        self.points().map(|p| p.label()).collect()
    }
}
