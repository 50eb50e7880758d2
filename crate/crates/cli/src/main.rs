use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dirsq::lab::{self, Experiment, ExperimentConfig, Harness};
use std::path::PathBuf;
use std::process::ExitCode;

/// Directional square function experiments.
///
/// Exit status: 0 when every declared check passes, 1 when a check fails or
/// the time cap cut the sweep short, 2 on usage errors.
#[derive(Parser, Debug)]
#[command(name = "dirsq", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Besicovitch families and lower-bound harnesses.
    Kakeya(Common),
    /// Smooth cone square functions and cone reproduction.
    SqCone(Common),
    /// Rough rectangle square functions.
    SqRect(Common),
    /// Polygon decomposition residual and reproduction.
    Polygon(Common),
    /// Carleson embedding, decomposition, Journé and raster oracles.
    Carleson(Common),
    /// Weighted maximal-function checks.
    Maximal(Common),
    /// Bessel inequality for the tile constructions.
    Tiles(Common),
    /// FFT exactness and Córdoba overlap.
    Norms(Common),
}

#[derive(Args, Debug, Default)]
struct Common {
    /// JSON config; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated direction counts.
    #[arg(long, value_delimiter = ',', conflicts_with = "n")]
    sweep: Vec<usize>,
    /// A single direction count.
    #[arg(long)]
    n: Option<usize>,
    /// Samples per side.
    #[arg(long)]
    grid: Option<usize>,
    /// Side of the sampled square.
    #[arg(long)]
    domain: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Random inputs per sweep point.
    #[arg(long)]
    trials: Option<usize>,
    /// Kakeya harness: meyer, rdf, rdf-smooth, conical, conical-smooth, radial.
    #[arg(long)]
    harness: Option<String>,
    /// CSV output path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON run record path.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Tolerance override, `name=value`; repeatable.
    #[arg(long = "tol", value_parser = parse_tol)]
    tolerances: Vec<(String, f64)>,
    /// Wall-clock cap in seconds.
    #[arg(long)]
    max_seconds: Option<f64>,
}

fn parse_tol(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or("expected name=value")?;
    let v: f64 = v.parse().map_err(|e| format!("{e}"))?;
    Ok((k.to_string(), v))
}

impl Command {
    fn split(self) -> (Experiment, Common) {
        match self {
            Command::Kakeya(c) => (Experiment::Kakeya, c),
            Command::SqCone(c) => (Experiment::SqCone, c),
            Command::SqRect(c) => (Experiment::SqRect, c),
            Command::Polygon(c) => (Experiment::Polygon, c),
            Command::Carleson(c) => (Experiment::Carleson, c),
            Command::Maximal(c) => (Experiment::Maximal, c),
            Command::Tiles(c) => (Experiment::Tiles, c),
            Command::Norms(c) => (Experiment::Norms, c),
        }
    }
}

fn build_config(experiment: Experiment, args: Common) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let cfg = ExperimentConfig::from_json(&text)?;
            if cfg.experiment != experiment {
                bail!("config is for `{}`, not `{experiment}`", cfg.experiment);
            }
            cfg
        }
        None => ExperimentConfig::new(experiment),
    };
    if let Some(n) = args.n {
        cfg.sweep = vec![n];
    } else if !args.sweep.is_empty() {
        cfg.sweep = args.sweep;
    }
    cfg.grid = args.grid.or(cfg.grid);
    cfg.domain = args.domain.or(cfg.domain);
    cfg.p = args.p.or(cfg.p);
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    cfg.trials = args.trials.or(cfg.trials);
    if let Some(h) = args.harness {
        if experiment != Experiment::Kakeya {
            bail!("--harness applies to kakeya only");
        }
        cfg.harness = Some(h.parse::<Harness>()?);
    }
    cfg.out = args.out.or(cfg.out);
    cfg.json = args.json.or(cfg.json);
    cfg.tolerances.extend(args.tolerances);
    cfg.max_seconds = args.max_seconds.or(cfg.max_seconds);
    Ok(cfg.resolved()?)
}

fn execute(cfg: &ExperimentConfig) -> Result<bool> {
    let record = lab::run(cfg)?;
    let csv = record.csv()?;
    match &cfg.out {
        Some(path) => std::fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{csv}"),
    }
    if let Some(path) = &cfg.json {
        std::fs::write(path, record.to_json()).with_context(|| format!("writing {}", path.display()))?;
    }
    for f in &record.fits {
        eprintln!("fit {}: exponent {:.4} (95% CI {:.4}..{:.4}, {} points)", f.experiment, f.exponent, f.ci95.0, f.ci95.1, f.points);
    }
    for c in &record.checks {
        eprintln!("{c}");
    }
    if !record.complete {
        eprintln!("time cap reached: {} of {} points done", record.rows.iter().map(|r| r.n).collect::<std::collections::BTreeSet<_>>().len(), cfg.sweep.len());
    }
    Ok(record.success())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, args) = cli.command.split();
    let cfg = match build_config(experiment, args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    match execute(&cfg) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if e.downcast_ref::<dirsq::Error>().is_some_and(|e| matches!(e, dirsq::Error::Invalid(_))) { 2 } else { 1 })
        }
    }
}
