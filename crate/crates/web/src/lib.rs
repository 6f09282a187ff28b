//! Browser bindings: three small interactive computations on top of `leegp`.
//!
//! The `*_json` functions are plain Rust so they can be tested natively; the
//! `#[wasm_bindgen]` wrappers only convert errors.

use std::sync::Arc;

use serde::Serialize;
use wasm_bindgen::prelude::*;

use leegp::asimov::asimov_covariance;
use leegp::excursion::{gv_bound_1d, squared_exponential_factor, study_region};
use leegp::models::SignalWidth;
use leegp::stats::{cholesky_psd, DEFAULT_JITTER};
use leegp::toys::{default_levels, gp_farm, FarmConfig, TfSource};
use leegp::upcross::{expected_upcrossings, KernelSurface};
use leegp::{ModelSpec, RandomStream};

const U0: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Serialize)]
struct CrossingPoint {
    u: f64,
    analytic: f64,
    empirical: f64,
    std_error: f64,
}

/// Up-crossings of a squared-exponential GP on `[0, length]`: Rice formula
/// against sampled curves, at several levels.
pub fn se_crossings_json(alpha2: f64, length: f64, spacing: f64, n_samples: u32, seed: u32) -> leegp::Result<String> {
    let region = study_region(length, spacing)?;
    let axis = region.mass_axis().to_vec();
    if axis.len() > 1500 {
        return Err(leegp::Error::InvalidParams(format!("{} grid points; use a coarser spacing", axis.len())));
    }
    let factor = squared_exponential_factor(alpha2, &axis)?;
    let surface = KernelSurface::from_kernel(axis, |x, y| (-(x - y).powi(2) / alpha2).exp())?;
    let levels: Vec<f64> = (0..=12).map(|k| 0.25 * k as f64).collect();
    let cfg = FarmConfig { crossing_levels: levels.clone(), ..FarmConfig::default() };
    let s = gp_farm(&factor, region, n_samples.max(1) as u64, &RandomStream::new(seed as u64, 0), &cfg)?;
    let rows = s
        .crossing_summaries()
        .iter()
        .map(|c| {
            Ok(CrossingPoint {
                u: c.u,
                analytic: expected_upcrossings(&surface, c.u)?.total(),
                empirical: c.mean_count,
                std_error: c.std_error,
            })
        })
        .collect::<leegp::Result<Vec<_>>>()?;
    Ok(serde_json::to_string(&rows)?)
}

fn hgg_with_width(sigma_s: f64) -> leegp::Result<ModelSpec> {
    let mut spec = ModelSpec::hgg_1d();
    spec.signal = SignalWidth::Fixed { sigma_s };
    spec.validate()?;
    Ok(spec)
}

#[derive(Serialize)]
struct Heatmap {
    n: usize,
    mass: Vec<f64>,
    values: Vec<f64>,
}

/// Asimov correlation matrix of the diphoton-like model for a signal width.
pub fn hgg_covariance_json(sigma_s: f64) -> leegp::Result<String> {
    let spec = hgg_with_width(sigma_s)?;
    let cov = asimov_covariance(&spec)?;
    Ok(serde_json::to_string(&Heatmap {
        n: cov.n(),
        mass: spec.region.mass_axis().to_vec(),
        values: cov.values().to_vec(),
    })?)
}

#[derive(Serialize)]
struct TfTable {
    levels: Vec<f64>,
    tf: Vec<f64>,
    tf_err: Vec<f64>,
    gv_bound: Vec<Option<f64>>,
    anchor_count: f64,
    n_samples: u64,
}

/// GP trials-factor curve of the diphoton-like model with its extrapolated
/// up-crossing bound.
pub fn hgg_tf_json(sigma_s: f64, n_samples: u32, seed: u32) -> leegp::Result<String> {
    let spec = hgg_with_width(sigma_s)?;
    let cov = asimov_covariance(&spec)?;
    let factor = cholesky_psd(&cov, DEFAULT_JITTER)?;
    let cfg = FarmConfig { crossing_levels: vec![U0], ..FarmConfig::default() };
    let s = gp_farm(&factor, Arc::new(spec.region.clone()), n_samples.max(1) as u64, &RandomStream::new(seed as u64, 0), &cfg)?;
    let tf = s.tf_curve(TfSource::Gp);
    let n0 = s.crossing_summaries()[0].mean_count;
    let gv_bound = default_levels()
        .iter()
        .map(|&u| (u >= U0).then(|| gv_bound_1d(n0, U0, u).map(|b| b.tf_bound)).transpose())
        .collect::<leegp::Result<Vec<_>>>()?;
    Ok(serde_json::to_string(&TfTable {
        levels: tf.levels,
        tf: tf.tf,
        tf_err: tf.tf_err,
        gv_bound,
        anchor_count: n0,
        n_samples: tf.n_samples,
    })?)
}

fn js(r: leegp::Result<String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn se_crossings(alpha2: f64, length: f64, spacing: f64, n_samples: u32, seed: u32) -> Result<String, JsError> {
    js(se_crossings_json(alpha2, length, spacing, n_samples, seed))
}

#[wasm_bindgen]
pub fn hgg_covariance(sigma_s: f64) -> Result<String, JsError> {
    js(hgg_covariance_json(sigma_s))
}

#[wasm_bindgen]
pub fn hgg_tf(sigma_s: f64, n_samples: u32, seed: u32) -> Result<String, JsError> {
    js(hgg_tf_json(sigma_s, n_samples, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn crossings_track_the_rice_formula() {
        let v: Value = serde_json::from_str(&se_crossings_json(10.0, 60.0, 0.5, 4000, 1).unwrap()).unwrap();
        let rows = v.as_array().unwrap();
        assert_eq!(rows.len(), 13);
        let r0 = &rows[0];
        let (a, e, se) = (r0["analytic"].as_f64().unwrap(), r0["empirical"].as_f64().unwrap(), r0["std_error"].as_f64().unwrap());
        assert!((a - e).abs() < 5.0 * se + 0.02 * a, "{a} {e} {se}");
        assert!(se_crossings_json(10.0, 155.0, 0.01, 10, 1).is_err());
    }

    #[test]
    fn heatmap_has_unit_diagonal() {
        let v: Value = serde_json::from_str(&hgg_covariance_json(5.0).unwrap()).unwrap();
        let n = v["n"].as_u64().unwrap() as usize;
        assert_eq!(n, 61);
        let vals = v["values"].as_array().unwrap();
        assert!((0..n).all(|i| (vals[i * n + i].as_f64().unwrap() - 1.0).abs() < 1e-12));
        assert!(hgg_covariance_json(-1.0).is_err());
    }

    #[test]
    fn tf_table_has_bound_above_anchor() {
        let v: Value = serde_json::from_str(&hgg_tf_json(5.0, 2000, 3).unwrap()).unwrap();
        let gv = v["gv_bound"].as_array().unwrap();
        assert_eq!(gv.len(), v["levels"].as_array().unwrap().len());
        assert!(gv[0].is_null());
        assert!(gv.last().unwrap().as_f64().unwrap() > 1.0);
    }
}
