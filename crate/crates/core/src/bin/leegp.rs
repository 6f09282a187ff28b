use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use leegp::asimov::{asimov_covariance, covdiff};
use leegp::excursion::{
    bin_scan_study, peak_width_pairs, width_trend, BinScanConfig, ExcursionKind, PeakWidthConfig,
};
use leegp::io::{self, RunManifest, RunOptions};
use leegp::stats::{cholesky_psd, CovMatrix, DEFAULT_JITTER};
use leegp::toys::{brute_force_farm, default_levels, gp_farm, FarmConfig, TfSource};
use leegp::upcross::{expected_upcrossings, KernelSurface};
use leegp::{Error, ModelKind, ModelSpec, Provenance, RandomStream, Result, Scanner};

#[derive(Parser)]
#[command(name = "leegp", version, about = "Look-elsewhere trials factors for bump hunts")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Correlation matrix of the significance curve from the Asimov data sets.
    AsimovCov {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Brute-force toys: sample, scan, and tabulate the trials factor.
    BruteForce {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        sampling: SamplingArgs,
        /// Trials-factor table.
        #[arg(long)]
        out: PathBuf,
        /// Up-crossing (1D) or Euler-characteristic (2D) counts.
        #[arg(long)]
        counts_out: Option<PathBuf>,
        /// Empirical correlation matrix of the toy curves.
        #[arg(long)]
        cov_out: Option<PathBuf>,
    },
    /// GP toys from a stored correlation matrix.
    SampleTf {
        #[arg(long)]
        cov: PathBuf,
        #[command(flatten)]
        sampling: SamplingArgs,
        #[arg(long)]
        jitter: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        counts_out: Option<PathBuf>,
    },
    /// Expected up-crossings from a stored 1D correlation matrix.
    UpcrossAnalytic {
        #[arg(long)]
        cov: PathBuf,
        /// Comma-separated levels (default: the standard grid).
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extrapolated upper bound on the global p-value from a counts table.
    GvBound {
        #[arg(long)]
        counts: PathBuf,
        #[arg(long)]
        u0: f64,
        /// Second anchor for Euler-characteristic counts.
        #[arg(long)]
        u1: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Up-crossing counts of a squared-exponential GP versus grid spacing.
    BinScan {
        #[arg(long, default_value_t = 10.0)]
        alpha2: f64,
        /// Comma-separated spacings (default: α/20 · {1,2,4,8,16}).
        #[arg(long, value_delimiter = ',')]
        bin_sizes: Option<Vec<f64>>,
        #[arg(long, default_value_t = 155.0)]
        length: f64,
        #[arg(long, default_value_t = std::f64::consts::FRAC_1_SQRT_2)]
        level: f64,
        #[command(flatten)]
        sampling: SamplingArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Width of the highest peak versus its height for GP curves.
    PeakWidths {
        #[arg(long, default_value_t = 10.0)]
        alpha2: f64,
        #[arg(long, default_value_t = 155.0)]
        length: f64,
        #[arg(long)]
        spacing: Option<f64>,
        #[arg(long, default_value_t = 40.0)]
        window: f64,
        #[arg(long, default_value_t = 0.01)]
        trim: f64,
        #[command(flatten)]
        sampling: SamplingArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summary of the elementwise difference of two correlation matrices.
    Covdiff {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// background_template, hgg_1d or hgg_2d
    #[arg(long, conflicts_with = "config")]
    model: Option<ModelKind>,
    /// JSON run document `{"model": {...}, "run": {...}}`.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SamplingArgs {
    /// Number of samples, e.g. 1e5.
    #[arg(long, value_parser = parse_count)]
    n: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_count(s: &str) -> std::result::Result<u64, String> {
    io::parse_count(s).map_err(|e| e.to_string())
}

impl ModelArgs {
    fn resolve(&self, manifest: &mut RunManifest) -> Result<(ModelSpec, RunOptions)> {
        match (&self.model, &self.config) {
            (_, Some(path)) => {
                manifest.input(path)?;
                io::load_config(path)
            }
            (Some(kind), None) => Ok((ModelSpec::default_for(*kind), RunOptions::default())),
            (None, None) => Err(Error::config("model", "give --model or --config")),
        }
    }
}

impl SamplingArgs {
    fn apply(&self, run: &mut RunOptions, default_n: u64) -> u64 {
        if let Some(s) = self.seed {
            run.seed = s;
        }
        if let Some(n) = self.n {
            run.n = Some(n);
        }
        *run.n.get_or_insert(default_n)
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(w) = cli.workers {
        set_workers(w);
    }
    let start = Instant::now();
    match run(cli.command, RunManifest::new(argv), start) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 1 } else { 2 })
        }
    }
}

#[cfg(feature = "parallel")]
fn set_workers(n: usize) {
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
}

#[cfg(not(feature = "parallel"))]
fn set_workers(_: usize) {}

fn write(manifest: &mut RunManifest, path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    manifest.output(path)
}

fn finish(mut manifest: RunManifest, out: &Path, start: Instant) -> Result<()> {
    manifest.wall_clock_seconds = start.elapsed().as_secs_f64();
    manifest.save(&io::manifest_path(out))
}

fn load_cov(manifest: &mut RunManifest, path: &Path) -> Result<CovMatrix> {
    manifest.input(path)?;
    manifest.input(&leegp::stats::cov::sidecar_path(path))?;
    Ok(CovMatrix::load(path)?.0)
}

fn counts_config(dims: usize, levels: Vec<f64>) -> FarmConfig {
    let anchors = vec![std::f64::consts::FRAC_1_SQRT_2, 1.0];
    let mut cfg = FarmConfig { levels, ..FarmConfig::default() };
    if dims == 1 {
        cfg.crossing_levels = anchors.clone();
        cfg.two_way_crossing_levels = anchors.clone();
        cfg.abs_crossing_levels = anchors;
    } else {
        cfg.euler_levels = anchors;
    }
    cfg
}

fn run(cmd: Command, mut manifest: RunManifest, start: Instant) -> Result<()> {
    let out = match cmd {
        Command::AsimovCov { model, out } => {
            let (spec, run) = model.resolve(&mut manifest)?;
            manifest.config_hash = Some(io::config_hash(&spec, &run));
            let cov = asimov_covariance(&spec)?;
            cov.save(&out, None, None)?;
            manifest.output(&out)?;
            manifest.output(&leegp::stats::cov::sidecar_path(&out))?;
            manifest.sample_counts.insert("asimov_sets".into(), spec.n_bins() as u64);
            manifest.sample_counts.insert("matrix_rows".into(), cov.n() as u64);
            out
        }
        Command::BruteForce { model, sampling, out, counts_out, cov_out } => {
            let (spec, mut run) = model.resolve(&mut manifest)?;
            let n = sampling.apply(&mut run, 10_000);
            manifest.config_hash = Some(io::config_hash(&spec, &run));
            manifest.master_seed = Some(run.seed);
            let levels = run.levels.clone().unwrap_or_else(default_levels);
            let mut cfg = counts_config(spec.region.dims(), levels);
            cfg.covariance = cov_out.is_some();
            let scanner = Scanner::new(&spec)?;
            let s = brute_force_farm(&scanner, n, &RandomStream::new(run.seed, 0), &cfg)?;
            write(&mut manifest, &out, &s.tf_curve(TfSource::BruteForce).to_csv_string())?;
            if let Some(p) = counts_out {
                let rows = [s.crossing_summaries(), s.two_way_crossing_summaries(), s.abs_crossing_summaries(), s.euler_summaries()].concat();
                write(&mut manifest, &p, &io::excursion_csv(&rows))?;
            }
            if let Some(p) = cov_out {
                s.covariance(Provenance::BruteForce)?.save(&p, None, Some(run.seed))?;
                manifest.output(&p)?;
                manifest.output(&leegp::stats::cov::sidecar_path(&p))?;
            }
            manifest.sample_counts.insert("toys".into(), n);
            out
        }
        Command::SampleTf { cov, sampling, jitter, out, counts_out } => {
            let c = load_cov(&mut manifest, &cov)?;
            let mut run = RunOptions { jitter, ..RunOptions::default() };
            let n = sampling.apply(&mut run, 1_000_000);
            manifest.master_seed = Some(run.seed);
            let factor = cholesky_psd(&c, jitter.unwrap_or(DEFAULT_JITTER))?;
            let region = Arc::new(c.region().clone());
            let cfg = counts_config(region.dims(), default_levels());
            let s = gp_farm(&factor, region, n, &RandomStream::new(run.seed, 0), &cfg)?;
            write(&mut manifest, &out, &s.tf_curve(TfSource::Gp).to_csv_string())?;
            if let Some(p) = counts_out {
                let rows = [s.crossing_summaries(), s.two_way_crossing_summaries(), s.abs_crossing_summaries(), s.euler_summaries()].concat();
                write(&mut manifest, &p, &io::excursion_csv(&rows))?;
            }
            manifest.sample_counts.insert("gp_samples".into(), n);
            out
        }
        Command::UpcrossAnalytic { cov, levels, out } => {
            let c = load_cov(&mut manifest, &cov)?;
            let surface = KernelSurface::from_cov(&c)?;
            let rows = levels
                .unwrap_or_else(default_levels)
                .iter()
                .map(|&u| expected_upcrossings(&surface, u))
                .collect::<Result<Vec<_>>>()?;
            write(&mut manifest, &out, &io::upcross_csv(&rows))?;
            out
        }
        Command::GvBound { counts, u0, u1, levels, out } => {
            manifest.input(&counts)?;
            let rows = io::parse_excursion_csv(&std::fs::read_to_string(&counts)?)?;
            let levels = levels.unwrap_or_else(default_levels);
            let find = |u: f64, want: &[ExcursionKind]| {
                rows.iter()
                    .find(|r| (r.u - u).abs() < 1e-3 && want.contains(&r.kind))
                    .copied()
                    .ok_or_else(|| Error::config("counts", format!("no matching count at u = {u}")))
            };
            let table = match u1 {
                None => io::bound_table_1d(&find(u0, &[ExcursionKind::Upcrossings1d])?, &levels)?,
                Some(u1) => {
                    let k = [ExcursionKind::Euler2d];
                    io::bound_table_2d(&find(u0, &k)?, &find(u1, &k)?, &levels)?
                }
            };
            write(&mut manifest, &out, &io::bound_csv(&table))?;
            out
        }
        Command::BinScan { alpha2, bin_sizes, length, level, sampling, out } => {
            let mut run = RunOptions::default();
            let n = sampling.apply(&mut run, 10_000);
            manifest.master_seed = Some(run.seed);
            let mut cfg = BinScanConfig { alpha2, n_samples: n, length, level, ..BinScanConfig::default() };
            if let Some(b) = bin_sizes {
                cfg.bin_sizes = b;
            } else {
                cfg.bin_sizes = [1.0, 2.0, 4.0, 8.0, 16.0].iter().map(|k| k * alpha2.sqrt() / 20.0).collect();
            }
            let rows = bin_scan_study(&cfg, &RandomStream::new(run.seed, 0))?;
            write(&mut manifest, &out, &io::bin_scan_csv(&rows))?;
            manifest.sample_counts.insert("gp_samples".into(), n);
            out
        }
        Command::PeakWidths { alpha2, length, spacing, window, trim, sampling, out } => {
            let mut run = RunOptions::default();
            let n = sampling.apply(&mut run, 10_000);
            manifest.master_seed = Some(run.seed);
            let cfg = PeakWidthConfig {
                alpha2,
                length,
                spacing: spacing.unwrap_or(alpha2.sqrt() / 10.0),
                window,
                trim,
                n_samples: n,
            };
            let (pairs, failed) = peak_width_pairs(&cfg, &RandomStream::new(run.seed, 0))?;
            let trend = width_trend(&pairs, trim, failed)?;
            write(&mut manifest, &out, &io::pairs_csv(&trend.heights, &trend.widths))?;
            let fit = serde_json::json!({
                "slope": trend.slope,
                "slope_err": trend.slope_err,
                "intercept": trend.intercept,
                "n_fitted": trend.heights.len(),
                "n_failed": trend.n_failed,
                "config": cfg,
            });
            let fit_path = out.with_extension("fit.json");
            write(&mut manifest, &fit_path, &(serde_json::to_string_pretty(&fit)? + "\n"))?;
            manifest.sample_counts.insert("gp_samples".into(), n);
            out
        }
        Command::Covdiff { a, b, out } => {
            let (ca, cb) = (load_cov(&mut manifest, &a)?, load_cov(&mut manifest, &b)?);
            let d = covdiff(&ca, &cb)?;
            write(&mut manifest, &out, &(serde_json::to_string_pretty(&d)? + "\n"))?;
            out
        }
    };
    finish(manifest, &out, start)
}
