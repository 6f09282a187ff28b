//! Run configuration, manifests and the plain CSV tables shared by the CLI
//! stages.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::excursion::{gv_bound_1d, gv_fit_2d, BinScanRow, ExcursionKind, ExcursionSummary};
use crate::models::{ModelConfig, ModelSpec};
use crate::stats::std_normal_sf;
use crate::upcross::CrossingCount;

/// Options that are not part of the model itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunOptions {
    #[serde(default)]
    pub seed: u64,
    /// Number of toys or GP samples.
    #[serde(default)]
    pub n: Option<u64>,
    /// Exceedance levels; the default grid when absent.
    #[serde(default)]
    pub levels: Option<Vec<f64>>,
    #[serde(default)]
    pub jitter: Option<f64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            n: None,
            levels: None,
            jitter: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunDocument {
    model: ModelConfig,
    #[serde(default)]
    run: RunOptions,
}

/// Parses a JSON run document `{"model": {...}, "run": {...}}`.
pub fn parse_config(text: &str) -> Result<(ModelSpec, RunOptions)> {
    let doc: RunDocument = serde_json::from_str(text).map_err(config_error)?;
    if let Some(levels) = &doc.run.levels {
        if levels.is_empty() || levels.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("run.levels", "must be non-empty and strictly increasing"));
        }
    }
    if let Some(j) = doc.run.jitter {
        if !(j >= 0.0) {
            return Err(Error::config("run.jitter", "must be non-negative"));
        }
    }
    Ok((ModelSpec::from_config(&doc.model)?, doc.run))
}

pub fn load_config(path: &Path) -> Result<(ModelSpec, RunOptions)> {
    parse_config(&std::fs::read_to_string(path)?)
}

fn config_error(e: serde_json::Error) -> Error {
    let msg = e.to_string();
    let field = msg
        .strip_prefix("unknown field `")
        .or_else(|| msg.strip_prefix("missing field `"))
        .and_then(|r| r.split('`').next())
        .map(str::to_owned)
        .unwrap_or_else(|| format!("line {} column {}", e.line(), e.column()));
    Error::ConfigInvalid { field, message: msg }
}

/// SHA-256 (hex) of the canonical JSON of the resolved model and options.
pub fn config_hash(spec: &ModelSpec, run: &RunOptions) -> String {
    let doc = RunDocument {
        model: spec.to_config(),
        run: run.clone(),
    };
    let bytes = serde_json::to_vec(&doc).expect("config serializes");
    hex(&Sha256::digest(bytes))
}

/// SHA-256 (hex) of a file's bytes.
pub fn file_hash(path: &Path) -> Result<String> {
    Ok(hex(&Sha256::digest(std::fs::read(path)?)))
}

fn hex(b: &[u8]) -> String {
    b.iter().fold(String::with_capacity(2 * b.len()), |mut s, x| {
        let _ = write!(s, "{x:02x}");
        s
    })
}

/// Parses sample counts such as `100000`, `1e6` or `10_000`.
pub fn parse_count(s: &str) -> Result<u64> {
    let t = s.trim().replace('_', "");
    if let Ok(n) = t.parse::<u64>() {
        return Ok(n);
    }
    let x: f64 = t.parse().map_err(|_| Error::Parse(format!("not a count: `{s}`")))?;
    if !(x >= 0.0) || x.fract() != 0.0 || x > 2f64.powi(53) {
        return Err(Error::Parse(format!("not a count: `{s}`")));
    }
    Ok(x as u64)
}

/// Record of one CLI stage: what ran, on what, and what it wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub config_hash: Option<String>,
    pub master_seed: Option<u64>,
    pub versions: BTreeMap<String, String>,
    /// Input path → SHA-256 of its contents.
    pub inputs: BTreeMap<String, String>,
    /// Output path → SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
    pub wall_clock_seconds: f64,
    pub sample_counts: BTreeMap<String, u64>,
}

impl RunManifest {
    pub fn new(command_line: Vec<String>) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert(env!("CARGO_PKG_NAME").to_owned(), env!("CARGO_PKG_VERSION").to_owned());
        Self {
            command_line,
            config_hash: None,
            master_seed: None,
            versions,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            wall_clock_seconds: 0.0,
            sample_counts: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), file_hash(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.insert(path.display().to_string(), file_hash(path)?);
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// `out.csv` → `out.manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

fn parse_rows(text: &str, ncol: usize) -> Result<Vec<Vec<String>>> {
    let mut rows = Vec::new();
    for (r, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<String> = line.split(',').map(|c| c.trim().to_owned()).collect();
        if cells.len() != ncol {
            return Err(Error::Parse(format!("line {}: expected {ncol} columns, found {}", r + 1, cells.len())));
        }
        rows.push(cells);
    }
    Ok(rows)
}

fn num<T: std::str::FromStr>(cell: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    cell.parse().map_err(|e| Error::Parse(format!("`{cell}`: {e}")))
}

fn kind_name(k: ExcursionKind) -> &'static str {
    match k {
        ExcursionKind::Upcrossings1d => "upcrossings_1d",
        ExcursionKind::Crossings1d => "crossings_1d",
        ExcursionKind::AbsUpcrossings1d => "abs_upcrossings_1d",
        ExcursionKind::Euler2d => "euler_2d",
    }
}

fn parse_kind(s: &str) -> Result<ExcursionKind> {
    match s {
        "upcrossings_1d" => Ok(ExcursionKind::Upcrossings1d),
        "crossings_1d" => Ok(ExcursionKind::Crossings1d),
        "abs_upcrossings_1d" => Ok(ExcursionKind::AbsUpcrossings1d),
        "euler_2d" => Ok(ExcursionKind::Euler2d),
        _ => Err(Error::Parse(format!("unknown excursion kind `{s}`"))),
    }
}

pub fn excursion_csv(rows: &[ExcursionSummary]) -> String {
    let mut s = String::from("u,mean_count,std_error,n_samples,kind\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{}", r.u, r.mean_count, r.std_error, r.n_samples, kind_name(r.kind));
    }
    s
}

pub fn parse_excursion_csv(text: &str) -> Result<Vec<ExcursionSummary>> {
    parse_rows(text, 5)?
        .iter()
        .map(|c| {
            Ok(ExcursionSummary {
                u: num(&c[0])?,
                mean_count: num(&c[1])?,
                std_error: num(&c[2])?,
                n_samples: num(&c[3])?,
                kind: parse_kind(&c[4])?,
            })
        })
        .collect()
}

pub fn upcross_csv(rows: &[CrossingCount]) -> String {
    let mut s = String::from("u,expected_upcrossings,quadrature_error_estimate,edge_estimate,total\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{}", r.u, r.expected, r.error_estimate, r.edge_estimate, r.total());
    }
    s
}

/// One row of a bound table; errors propagate the anchor standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub u: f64,
    pub expected: f64,
    pub expected_err: f64,
    pub p_global_bound: f64,
    pub p_global_bound_err: f64,
    pub tf_bound: f64,
    pub tf_bound_err: f64,
}

fn bound_row(u: f64, expected: f64, expected_err: f64) -> BoundRow {
    let p_local = std_normal_sf(u);
    BoundRow {
        u,
        expected,
        expected_err,
        p_global_bound: p_local + expected,
        p_global_bound_err: expected_err,
        tf_bound: (p_local + expected) / p_local,
        tf_bound_err: expected_err / p_local,
    }
}

/// 1D extrapolation from the count at `anchor.u` to every level `≥ anchor.u`.
pub fn bound_table_1d(anchor: &ExcursionSummary, levels: &[f64]) -> Result<Vec<BoundRow>> {
    if anchor.kind == ExcursionKind::Euler2d {
        return Err(Error::InvalidParams("1D bound needs an up-crossing count".into()));
    }
    levels
        .iter()
        .filter(|&&u| u >= anchor.u - 1e-12)
        .map(|&u| {
            let b = gv_bound_1d(anchor.mean_count, anchor.u, u)?;
            let scale = b.expected / anchor.mean_count.max(f64::MIN_POSITIVE);
            Ok(bound_row(u, b.expected, anchor.std_error * scale))
        })
        .collect()
}

/// 2D two-anchor extrapolation to every level `≥ min(u₁, u₂)`. The error
/// treats the two anchor means as independent.
pub fn bound_table_2d(ec1: &ExcursionSummary, ec2: &ExcursionSummary, levels: &[f64]) -> Result<Vec<BoundRow>> {
    let fit = gv_fit_2d(ec1, ec2)?;
    let lo = ec1.u.min(ec2.u);
    Ok(levels
        .iter()
        .filter(|&&u| u >= lo - 1e-12)
        .map(|&u| {
            // E(u) e^{u²/2} is linear in u through the two rescaled anchors
            let w2 = (u - ec1.u) / (ec2.u - ec1.u);
            let w1 = 1.0 - w2;
            let g = (-u * u / 2.0).exp();
            let s1 = w1 * ec1.std_error * (ec1.u * ec1.u / 2.0).exp();
            let s2 = w2 * ec2.std_error * (ec2.u * ec2.u / 2.0).exp();
            bound_row(u, fit.expected(u), g * s1.hypot(s2))
        })
        .collect())
}

pub fn bound_csv(rows: &[BoundRow]) -> String {
    let mut s = String::from("u,expected,expected_err,p_global_bound,p_global_bound_err,tf_bound,tf_bound_err\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.u, r.expected, r.expected_err, r.p_global_bound, r.p_global_bound_err, r.tf_bound, r.tf_bound_err
        );
    }
    s
}

pub fn parse_bound_csv(text: &str) -> Result<Vec<BoundRow>> {
    parse_rows(text, 7)?
        .iter()
        .map(|c| {
            Ok(BoundRow {
                u: num(&c[0])?,
                expected: num(&c[1])?,
                expected_err: num(&c[2])?,
                p_global_bound: num(&c[3])?,
                p_global_bound_err: num(&c[4])?,
                tf_bound: num(&c[5])?,
                tf_bound_err: num(&c[6])?,
            })
        })
        .collect()
}

pub fn bin_scan_csv(rows: &[BinScanRow]) -> String {
    let mut s = String::from("bin_size,n_points,mean,err,analytic,deficit\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{},{}", r.bin_size, r.n_points, r.mean, r.std_error, r.analytic, r.deficit());
    }
    s
}

pub fn parse_bin_scan_csv(text: &str) -> Result<Vec<BinScanRow>> {
    parse_rows(text, 6)?
        .iter()
        .map(|c| {
            Ok(BinScanRow {
                bin_size: num(&c[0])?,
                n_points: num(&c[1])?,
                mean: num(&c[2])?,
                std_error: num(&c[3])?,
                analytic: num(&c[4])?,
            })
        })
        .collect()
}

pub fn pairs_csv(heights: &[f64], widths: &[f64]) -> String {
    let mut s = String::from("height,width\n");
    for (h, w) in heights.iter().zip(widths) {
        let _ = writeln!(s, "{h},{w}");
    }
    s
}
