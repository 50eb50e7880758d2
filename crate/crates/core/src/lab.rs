//! Experiment configuration, dispatch, records and exponent fits.
//!
//! Every experiment tag maps to a function over an `N`-sweep. Rows go to CSV,
//! the full [`RunRecord`] (rows, extra measurements, fits and checks) to JSON.
//! Randomness is drawn from per-point generators seeded by hashing
//! `(seed, tag, N, trial)`, so a row can be re-run on its own, and all
//! floating-point reductions have a fixed order.

use crate::carleson::{self, CarlesonSequence, EmbeddingConfig, RasterMask};
use crate::error::{Error, Result};
use crate::geometry::{self, ParallelogramCollection, Slope};
use crate::kakeya::{self, Averaging, BesicovitchFamily, Sampler};
use crate::maximal::{self, DirectionSet};
use crate::spectral::{self, Grid, GridFunction, SymbolSpec};
use crate::tiles::{self, PacketParams, TileSet};
use crate::tolerances;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, StudentsT};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::{Duration, Instant};

pub const SCHEMA_VERSION: u32 = 1;
pub const LIBRARY_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const CSV_HEADER: [&str; 8] = ["experiment", "N", "p", "ratio", "exponentFit", "gridN", "L", "seed"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Kakeya,
    SqCone,
    SqRect,
    Polygon,
    Carleson,
    Maximal,
    Tiles,
    Norms,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::Kakeya,
        Experiment::SqCone,
        Experiment::SqRect,
        Experiment::Polygon,
        Experiment::Carleson,
        Experiment::Maximal,
        Experiment::Tiles,
        Experiment::Norms,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Experiment::Kakeya => "kakeya",
            Experiment::SqCone => "sq-cone",
            Experiment::SqRect => "sq-rect",
            Experiment::Polygon => "polygon",
            Experiment::Carleson => "carleson",
            Experiment::Maximal => "maximal",
            Experiment::Tiles => "tiles",
            Experiment::Norms => "norms",
        }
    }

    /// `(sweep, grid, domain, p, trials)`.
    fn defaults(self) -> (Vec<usize>, usize, f64, f64, usize) {
        match self {
            Experiment::Kakeya => (vec![8, 16, 32, 64, 128, 256], 2048, 8.0, 4.0, 1),
            Experiment::SqCone | Experiment::SqRect => (vec![4, 8, 16, 32, 64], 512, 64.0, 4.0, 4),
            Experiment::Polygon => (vec![64], 1024, 256.0, 2.0, 1),
            Experiment::Carleson => (vec![4, 16, 64, 256], 256, 8.0, 1.5, 200),
            Experiment::Maximal => (vec![4, 16, 64], 256, 8.0, 4.0, 4),
            Experiment::Tiles => (vec![4, 16, 64], 512, 32.0, 2.0, 100),
            Experiment::Norms => (vec![8, 16, 32, 64], 1024, 64.0, 2.0, 1),
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.tag() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown experiment tag `{s}`")))
    }
}

/// Lower-bound harness selected by the kakeya experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Harness {
    Meyer,
    Rdf,
    RdfSmooth,
    Conical,
    ConicalSmooth,
    Radial,
}

impl Harness {
    pub const ALL: [Harness; 6] = [Harness::Meyer, Harness::Rdf, Harness::RdfSmooth, Harness::Conical, Harness::ConicalSmooth, Harness::Radial];

    pub fn tag(self) -> &'static str {
        match self {
            Harness::Meyer => "meyer",
            Harness::Rdf => "rdf",
            Harness::RdfSmooth => "rdf-smooth",
            Harness::Conical => "conical",
            Harness::ConicalSmooth => "conical-smooth",
            Harness::Radial => "radial",
        }
    }
}

impl FromStr for Harness {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Harness::ALL
            .into_iter()
            .find(|h| h.tag() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown harness `{s}`")))
    }
}

/// Tolerance names accepted in [`ExperimentConfig::tolerances`].
pub const TOLERANCE_KEYS: [&str; 14] = [
    "spectral_exact",
    "reproduction",
    "cordoba_max",
    "shadow_raster",
    "mass_raster",
    "embedding_c",
    "stratum_decay_c",
    "journe_c",
    "bessel_c",
    "fefferman_stein_c",
    "a1_factor",
    "besicovitch_spread",
    "meyer_floor",
    "window",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// Direction counts; powers of two. Empty means the experiment default.
    #[serde(default)]
    pub sweep: Vec<usize>,
    #[serde(default)]
    pub grid: Option<usize>,
    /// Side `L` of the sampled square.
    #[serde(default)]
    pub domain: Option<f64>,
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Random inputs per sweep point.
    #[serde(default)]
    pub trials: Option<usize>,
    #[serde(default)]
    pub harness: Option<Harness>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub json: Option<PathBuf>,
    /// Overrides keyed by [`TOLERANCE_KEYS`]; `window` widens both ends of the exponent window.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    /// Wall-clock cap; points not started before it are skipped.
    #[serde(default)]
    pub max_seconds: Option<f64>,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        ExperimentConfig {
            experiment,
            sweep: Vec::new(),
            grid: None,
            domain: None,
            p: None,
            seed: 0,
            trials: None,
            harness: None,
            out: None,
            json: None,
            tolerances: BTreeMap::new(),
            max_seconds: None,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Invalid(format!("config: {e}")))
    }

    /// Fills defaults and validates.
    pub fn resolved(&self) -> Result<Self> {
        let (sweep, grid, domain, p, trials) = self.experiment.defaults();
        let mut c = self.clone();
        if c.sweep.is_empty() {
            c.sweep = sweep;
        }
        c.grid.get_or_insert(grid);
        c.domain.get_or_insert(domain);
        c.p.get_or_insert(p);
        c.trials.get_or_insert(trials);
        if c.experiment == Experiment::Kakeya {
            c.harness.get_or_insert(Harness::Meyer);
        }
        if let Some(n) = c.sweep.iter().find(|n| !n.is_power_of_two()) {
            return Err(Error::Invalid(format!("sweep value {n} is not a power of two")));
        }
        let g = c.grid.unwrap_or_default();
        if g < 8 || !g.is_power_of_two() {
            return Err(Error::invalid("grid must be a power of two, at least 8"));
        }
        if !(c.domain.unwrap_or_default() > 0.0) {
            return Err(Error::invalid("domain must be positive"));
        }
        if !(c.p.unwrap_or_default() >= 1.0) {
            return Err(Error::invalid("p must be at least 1"));
        }
        if c.trials == Some(0) {
            return Err(Error::invalid("trials must be positive"));
        }
        if let Some(k) = c.tolerances.keys().find(|k| !TOLERANCE_KEYS.contains(&k.as_str())) {
            return Err(Error::Invalid(format!("unknown tolerance `{k}`")));
        }
        if let Some(s) = c.max_seconds {
            if !(s > 0.0) {
                return Err(Error::invalid("max_seconds must be positive"));
            }
        }
        Ok(c)
    }

    fn tol(&self, key: &str, default: f64) -> f64 {
        self.tolerances.get(key).copied().unwrap_or(default)
    }

    fn grid_n(&self) -> usize {
        self.grid.expect("resolved")
    }

    fn length(&self) -> f64 {
        self.domain.expect("resolved")
    }

    fn exponent(&self) -> f64 {
        self.p.expect("resolved")
    }

    fn trial_count(&self) -> usize {
        self.trials.expect("resolved")
    }
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub experiment: String,
    pub n: usize,
    pub p: f64,
    pub ratio: f64,
    pub exponent_fit: Option<f64>,
    pub grid_n: usize,
    pub length: f64,
    pub seed: u64,
}

/// A named scalar that is recorded in JSON but not in the CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub name: String,
    pub n: usize,
    pub value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Le,
    Ge,
}

/// A declared acceptance check: `value ≤ bound` or `value ≥ bound`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub relation: Relation,
    pub bound: f64,
    pub pass: bool,
}

impl Check {
    pub fn le(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Check { name: name.into(), value, relation: Relation::Le, bound, pass: value <= bound }
    }

    pub fn ge(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Check { name: name.into(), value, relation: Relation::Ge, bound, pass: value >= bound }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.relation {
            Relation::Le => "<=",
            Relation::Ge => ">=",
        };
        let verdict = if self.pass { "pass" } else { "FAIL" };
        write!(f, "{verdict} {}: {:.6e} {op} {:.6e}", self.name, self.value, self.bound)
    }
}

/// Least-squares fit of `log ratio = a + b·log log₂N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub experiment: String,
    pub exponent: f64,
    pub intercept: f64,
    /// Two-sided 95% interval for the exponent (Student t, `k − 2` degrees of freedom).
    pub ci95: (f64, f64),
    pub points: usize,
}

/// Fits `ratio ∝ (log₂N)^b` over `(N, ratio)` points.
pub fn fit_exponent(points: &[(usize, f64)]) -> Result<Fit> {
    if points.len() < 3 {
        return Err(Error::invalid("an exponent fit needs at least 3 points"));
    }
    if points.iter().any(|&(n, r)| n < 2 || !(r > 0.0) || !r.is_finite()) {
        return Err(Error::invalid("fit needs N >= 2 and positive finite ratios"));
    }
    let xs: Vec<f64> = points.iter().map(|&(n, _)| (n as f64).log2().ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, r)| r.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("fit needs at least two distinct N"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - a - b * x).powi(2)).sum();
    let dof = k - 2.0;
    let se = (rss / dof / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof).map_err(|e| Error::Invalid(e.to_string()))?.inverse_cdf(0.975);
    Ok(Fit { experiment: String::new(), exponent: b, intercept: a, ci95: (b - t * se, b + t * se), points: points.len() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub library_version: String,
    pub config: ExperimentConfig,
    pub rows: Vec<Row>,
    pub measurements: Vec<Measurement>,
    pub fits: Vec<Fit>,
    pub checks: Vec<Check>,
    /// False when the time cap cut the sweep short.
    pub complete: bool,
    pub wall_time_seconds: f64,
}

impl RunRecord {
    /// True iff the sweep finished and every declared check passed.
    pub fn success(&self) -> bool {
        self.complete && self.checks.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serializes")
    }

    pub fn csv(&self) -> Result<String> {
        rows_to_csv(&self.rows)
    }
}

/// `{:.16e}` keeps 17 significant digits, enough to round-trip any `f64`.
fn float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn rows_to_csv(rows: &[Row]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Invalid(format!("csv: {e}"));
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in rows {
        w.write_record([
            r.experiment.clone(),
            r.n.to_string(),
            float(r.p),
            float(r.ratio),
            r.exponent_fit.map(float).unwrap_or_default(),
            r.grid_n.to_string(),
            float(r.length),
            r.seed.to_string(),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Invalid(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Seed for trial `trial` of point `n` of experiment `tag`.
pub fn sub_seed(seed: u64, tag: &str, n: usize, trial: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tag.as_bytes());
    h.update((n as u64).to_le_bytes());
    h.update((trial as u64).to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

pub fn rng_for(seed: u64, tag: &str, n: usize, trial: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sub_seed(seed, tag, n, trial))
}

#[derive(Default)]
struct Outcome {
    rows: Vec<Row>,
    measurements: Vec<Measurement>,
    fits: Vec<Fit>,
    checks: Vec<Check>,
    complete: bool,
}

impl Outcome {
    fn row(&mut self, cfg: &ExperimentConfig, experiment: &str, n: usize, ratio: f64, grid_n: usize) {
        self.rows.push(Row {
            experiment: experiment.into(),
            n,
            p: cfg.exponent(),
            ratio,
            exponent_fit: None,
            grid_n,
            length: cfg.length(),
            seed: cfg.seed,
        });
    }

    fn measure(&mut self, name: &str, n: usize, value: f64) {
        self.measurements.push(Measurement { name: name.into(), n, value });
    }

    /// Fits every row tag with at least three points and writes the exponent back.
    fn fit_rows(&mut self, tags: &[&str]) -> Result<()> {
        for tag in tags {
            let pts: Vec<(usize, f64)> = self.rows.iter().filter(|r| r.experiment == *tag).map(|r| (r.n, r.ratio)).collect();
            if pts.len() < 3 {
                continue;
            }
            let mut fit = fit_exponent(&pts)?;
            fit.experiment = tag.to_string();
            for r in self.rows.iter_mut().filter(|r| r.experiment == *tag) {
                r.exponent_fit = Some(fit.exponent);
            }
            self.fits.push(fit);
        }
        Ok(())
    }

    fn rows_of(&self, tag: &str) -> impl Iterator<Item = &Row> + '_ {
        let tag = tag.to_string();
        self.rows.iter().filter(move |r| r.experiment == tag)
    }

    fn measurements_of(&self, name: &str) -> impl Iterator<Item = &Measurement> + '_ {
        let name = name.to_string();
        self.measurements.iter().filter(move |m| m.name == name)
    }
}

struct Budget {
    deadline: Option<Instant>,
}

impl Budget {
    fn exhausted(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }
}

/// Runs one configured experiment.
pub fn run(config: &ExperimentConfig) -> Result<RunRecord> {
    let cfg = config.resolved()?;
    let start = Instant::now();
    let budget = Budget { deadline: cfg.max_seconds.map(|s| start + Duration::from_secs_f64(s)) };
    let mut out = Outcome { complete: true, ..Outcome::default() };
    for &n in &cfg.sweep {
        if budget.exhausted() {
            out.complete = false;
            break;
        }
        match cfg.experiment {
            Experiment::Kakeya => kakeya_rows(&cfg, n, &mut out)?,
            Experiment::SqCone => sq_cone_rows(&cfg, n, &mut out)?,
            Experiment::SqRect => sq_rect_rows(&cfg, n, &mut out)?,
            Experiment::Polygon => polygon_rows(&cfg, n, &mut out)?,
            Experiment::Carleson => carleson_rows(&cfg, n, &mut out)?,
            Experiment::Maximal => maximal_rows(&cfg, n, &mut out)?,
            Experiment::Tiles => tiles_rows(&cfg, n, &mut out)?,
            Experiment::Norms => norms_rows(&cfg, n, &mut out)?,
        }
    }
    declare_checks(&cfg, &mut out)?;
    Ok(RunRecord {
        schema_version: SCHEMA_VERSION,
        library_version: LIBRARY_VERSION.into(),
        config: cfg,
        rows: out.rows,
        measurements: out.measurements,
        fits: out.fits,
        checks: out.checks,
        complete: out.complete,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    })
}

fn max_of<'a>(it: impl Iterator<Item = &'a Row>) -> f64 {
    it.map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max)
}

fn declare_checks(cfg: &ExperimentConfig, out: &mut Outcome) -> Result<()> {
    let exact = cfg.tol("spectral_exact", tolerances::SPECTRAL_EXACT);
    let repro = cfg.tol("reproduction", tolerances::REPRODUCTION);
    match cfg.experiment {
        Experiment::Kakeya => {
            let h = cfg.harness.expect("resolved").tag();
            out.fit_rows(&[h])?;
            let ul: Vec<Measurement> = out.measurements_of("union-area").cloned().collect();
            let scaled: Vec<f64> = ul.iter().filter(|m| m.n >= 4).map(|m| m.value * (m.n as f64).log2()).collect();
            if !scaled.is_empty() {
                let hi = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lo = scaled.iter().copied().fold(f64::INFINITY, f64::min);
                out.checks.push(Check::le("union area·log₂N spread", hi / lo, cfg.tol("besicovitch_spread", tolerances::BESICOVITCH_SPREAD)));
            }
            let rises = ul.windows(2).map(|w| w[1].value - w[0].value).fold(f64::NEG_INFINITY, f64::max);
            if ul.len() >= 2 {
                out.checks.push(Check::le("union area increase along the sweep", rises, 0.0));
            }
            let gap = out.measurements_of("translate-gap").map(|m| m.value).fold(f64::INFINITY, f64::min);
            out.checks.push(Check::ge("smallest translate separation", gap, f64::MIN_POSITIVE));
            let id = out.measurements_of("conical-identity").map(|m| m.value).fold(0.0, f64::max);
            out.checks.push(Check::le("conical lattice identity residual", id, exact));
            let floor = out.measurements_of("meyer-floor").find(|m| m.n == 16).cloned();
            if let Some(m) = floor {
                out.checks.push(Check::ge("Meyer floor at N=16", m.value, cfg.tol("meyer_floor", tolerances::meyer_floor())));
            }
            if matches!(cfg.harness, Some(Harness::Meyer | Harness::Rdf | Harness::Conical)) {
                if let Some(f) = out.fits.iter().find(|f| f.experiment == h) {
                    let (lo, hi) = tolerances::EXPONENT_WINDOW;
                    let widen = cfg.tol("window", 0.0);
                    out.checks.push(Check::ge(format!("{h} exponent lower end"), f.exponent, lo - widen));
                    out.checks.push(Check::le(format!("{h} exponent upper end"), f.exponent, hi + widen));
                }
            }
        }
        Experiment::SqCone => {
            out.fit_rows(&["sq-cone"])?;
            out.checks.push(Check::le("smooth cone reproduction", max_of(out.rows_of("cone-reproduction")), repro));
        }
        Experiment::SqRect => {
            out.fit_rows(&["sq-rect"])?;
            out.checks.push(Check::le("rectangle pieces L² ratio", max_of(out.rows_of("sq-rect-l2")), 1.0 + exact));
        }
        Experiment::Polygon => {
            out.checks.push(Check::le("polygon decomposition residual", max_of(out.rows_of("polygon-residual")), repro));
            out.checks.push(Check::le("polygon reproduction", max_of(out.rows_of("polygon-reproduction")), repro));
        }
        Experiment::Carleson => {
            out.checks.push(Check::le("embedding constant", max_of(out.rows_of("embedding")), cfg.tol("embedding_c", tolerances::EMBEDDING_C)));
            out.checks.push(Check::le("halving ratio", max_of(out.rows_of("halving")).max(max_of(out.rows_of("halving-kakeya"))), 0.5));
            out.checks.push(Check::le(
                "stratum decay constant",
                max_of(out.rows_of("decay")).max(max_of(out.rows_of("decay-kakeya"))),
                cfg.tol("stratum_decay_c", tolerances::STRATUM_DECAY_C),
            ));
            out.checks.push(Check::le("Journé ratio", max_of(out.rows_of("journe")), cfg.tol("journe_c", tolerances::JOURNE_C)));
            if out.rows_of("shadow-oracle").next().is_some() {
                out.checks.push(Check::le("shadow raster agreement", max_of(out.rows_of("shadow-oracle")), cfg.tol("shadow_raster", tolerances::SHADOW_RASTER)));
                out.checks.push(Check::le("mass₂ raster agreement", max_of(out.rows_of("mass-oracle")), cfg.tol("mass_raster", tolerances::MASS_RASTER)));
            }
        }
        Experiment::Maximal => {
            let one = max_of(out.rows_of("unit-weight"));
            out.checks.push(Check::le("|[1,1]_S − 1|", (one - 1.0).abs(), exact));
            out.checks.push(Check::le("series weight [w,w]_S / B", max_of(out.rows_of("a1-series")), cfg.tol("a1_factor", 2.0) * (1.0 + SERIES_TOL)));
            out.checks.push(Check::le("Fefferman–Stein ratio", max_of(out.rows_of("fefferman-stein")), cfg.tol("fefferman_stein_c", tolerances::FEFFERMAN_STEIN_C)));
        }
        Experiment::Tiles => {
            let b = cfg.tol("bessel_c", tolerances::BESSEL_C);
            for tag in ["bessel-whitney", "bessel-smooth", "bessel-rect"] {
                out.checks.push(Check::le(tag, max_of(out.rows_of(tag)), b));
            }
        }
        Experiment::Norms => {
            for tag in ["parseval", "roundtrip", "composition"] {
                out.checks.push(Check::le(tag, max_of(out.rows_of(tag)), exact));
            }
            let ov: Vec<f64> = out.rows_of("cordoba").map(|r| r.ratio).collect();
            out.checks.push(Check::le("Córdoba overlap", ov.iter().copied().fold(0.0, f64::max), cfg.tol("cordoba_max", tolerances::CORDOBA_MAX as f64)));
            let rise = ov.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
            out.checks.push(Check::le("Córdoba overlap increase along the sweep", rise, 0.0));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- kakeya

/// Everything measured on one Besicovitch family.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KakeyaPoint {
    pub n: usize,
    pub union_area: f64,
    pub min_translate_gap: f64,
    pub reports: Vec<kakeya::LowerBoundReport>,
    /// Only for `4 | N`.
    pub identity_residual: Option<f64>,
}

/// Grid side for the lattice identity; the identity is exact on any lattice.
const IDENTITY_GRID: usize = 256;
/// Radial band half-width for the radial harness.
pub const RADIAL_BAND: f64 = 0.5;

pub fn kakeya_point(n: usize, p: f64, grid_n: usize, length: f64, seed: u64, harnesses: &[Harness]) -> Result<KakeyaPoint> {
    let fam: BesicovitchFamily = kakeya::perron_family(n)?;
    let s = Sampler::for_family(&fam, grid_n, length)?;
    let mut reports = Vec::new();
    for h in harnesses {
        let mut r = match h {
            Harness::Meyer => kakeya::meyer_lower_bound(&fam, p, &s)?,
            Harness::Rdf => kakeya::rdf_lower_bound(&fam, p, &s, Averaging::Rough)?,
            Harness::RdfSmooth => kakeya::rdf_lower_bound(&fam, p, &s, Averaging::Smooth)?,
            Harness::Conical => kakeya::conical_lower_bound(&fam, p, &s, None)?,
            Harness::ConicalSmooth => kakeya::conical_lower_bound(&fam, p, &s, Some(kakeya::CONICAL_DELTA))?,
            Harness::Radial => kakeya::radial_lower_bound(&fam, p, Grid::new(grid_n, length)?, RADIAL_BAND)?,
        };
        r.seed = seed;
        reports.push(r);
    }
    let identity_residual = if n >= 4 && n % 4 == 0 {
        let mut rng = rng_for(seed, "conical-identity", n, 0);
        Some(kakeya::conical_identity_residual(n, Grid::new(IDENTITY_GRID, length)?, &mut rng)?)
    } else {
        None
    };
    Ok(KakeyaPoint { n, union_area: fam.union_area, min_translate_gap: fam.min_translate_gap, reports, identity_residual })
}

fn kakeya_rows(cfg: &ExperimentConfig, n: usize, out: &mut Outcome) -> Result<()> {
    let h = cfg.harness.expect("resolved");
    let mut hs = vec![h];
    if h != Harness::Meyer && n == 16 {
        hs.push(Harness::Meyer);
    }
    let pt = kakeya_point(n, cfg.exponent(), cfg.grid_n(), cfg.length(), cfg.seed, &hs)?;
    out.row(cfg, h.tag(), n, pt.reports[0].ratio, cfg.grid_n());
    out.measure("union-area", n, pt.union_area);
    out.measure("translate-gap", n, pt.min_translate_gap);
    if let Some(r) = pt.identity_residual {
        out.measure("conical-identity", n, r);
    }
    for r in &pt.reports {
        if let Some(f) = r.floor {
            out.measure(&format!("{}-floor", r.experiment), n, f);
        }
        if let Some(d) = r.diagnostic {
            out.measure(&format!("{}-diagnostic", r.experiment), n, d);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- spectral

/// A random function with Gaussian Fourier coefficients on the lattice points
/// where `keep(ξ)` holds, scaled to `‖f‖₂ = 1`.
pub fn random_with_spectrum(grid: Grid, rng: &mut impl Rng, keep: impl Fn((f64, f64)) -> bool) -> GridFunction {
    let n = grid.n;
    let mut hat = GridFunction::zeros(grid);
    for r in 0..n {
        for c in 0..n {
            if keep((grid.freq(c), grid.freq(r))) {
                hat.data[r * n + c] = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
            }
        }
    }
    let f = spectral::inverse(&hat);
    let nrm = f.norm_l2();
    if nrm > 0.0 {
        f.scale(1.0 / nrm)
    } else {
        f
    }
}

fn nyquist(grid: Grid) -> f64 {
    PI * grid.n as f64 / grid.length
}

fn rel_diff(a: &GridFunction, b: &GridFunction) -> Result<f64> {
    Ok(a.sub(b)?.norm_l2() / b.norm_l2())
}

/// Relative errors `(Parseval, round trip, composition)` on a random input.
/// The composed symbols are the angular bump `β₁` for `N` directions and the
/// Littlewood–Paley piece at scale 0.
pub fn spectral_exactness(n: usize, grid: Grid, rng: &mut impl Rng) -> Result<[f64; 3]> {
    let data = (0..grid.n * grid.n).map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
    let f = GridFunction { grid, data };
    let fhat = spectral::forward(&f);
    // Unitary on samples: Σ|F|² = Σ|f|².
    let e = f.norm_l2();
    let parseval = (fhat.norm_l2() - e).abs() / e;
    let roundtrip = rel_diff(&spectral::inverse(&fhat), &f)?;
    let m1 = SymbolSpec::AngularBump { j: 1 % n, n };
    let m2 = SymbolSpec::LittlewoodPaley { k: 0 };
    let two = spectral::apply(&m1, &spectral::apply(&m2, &f)?)?;
    let one = spectral::apply(&SymbolSpec::product(vec![m1, m2]), &f)?;
    let composition = two.sub(&one)?.norm_l2() / e;
    Ok([parseval, roundtrip, composition])
}

fn norms_rows(cfg: &ExperimentConfig, n: usize, out: &mut Outcome) -> Result<()> {
    let grid = Grid::new(cfg.grid_n(), cfg.length())?;
    let mut rng = rng_for(cfg.seed, "norms", n, 0);
    let [a, b, c] = spectral_exactness(n, grid, &mut rng)?;
    out.row(cfg, "parseval", n, a, grid.n);
    out.row(cfg, "roundtrip", n, b, grid.n);
    out.row(cfg, "composition", n, c, grid.n);
    out.row(cfg, "cordoba", n, spectral::cordoba_overlap(n, 0)? as f64, grid.n);
    Ok(())
}

/// The smooth cone over the `j`-th of `N` equal arcs.
pub fn cone_piece(j: usize, n: usize) -> SymbolSpec {
    let w = 2.0 * PI / n as f64;
    SymbolSpec::ConeSmooth { start: j as f64 * w, end: (j + 1) as f64 * w }
}

/// `‖C f − f‖₂/‖f‖₂` for the first smooth cone piece and `f` band-limited to
/// the middle half of its arc and to half the Nyquist radius.
pub fn cone_reproduction(n: usize, grid: Grid, rng: &mut impl Rng) -> Result<f64> {
    let w = 2.0 * PI / n as f64;
    let (c, half) = (0.5 * w, 0.25 * w);
    let rmax = 0.5 * nyquist(grid);
    let f = random_with_spectrum(grid, rng, |xi| {
        let r = xi.0.hypot(xi.1);
        r > 0.0 && r < rmax && spectral::wrap_angle(xi.1.atan2(xi.0) - c).abs() < 0.99 * half
    });
    rel_diff(&spectral::apply(&cone_piece(0, n), &f)?, &f)
}

fn band_limited(grid: Grid, rng: &mut impl Rng) -> GridFunction {
    let rmax = 0.5 * nyquist(grid);
    random_with_spectrum(grid, rng, |xi| {
        let r = xi.0.hypot(xi.1);
        r > 0.0 && r < rmax
    })
}

fn sq_cone_rows(cfg: &ExperimentConfig, n: usize, out: &mut Outcome) -> Result<()> {
    let grid = Grid::new(cfg.grid_n(), cfg.length())?;
    let specs: Vec<SymbolSpec> = (0..n).map(|j| cone_piece(j, n)).collect();
    let ratios = (0..cfg.trial_count())
        .map(|t| {
            let f = band_limited(grid, &mut rng_for(cfg.seed, "sq-cone", n, t));
            Ok(spectral::square_function(&specs, &f, cfg.exponent())?.0 / f.norm_lp(cfg.exponent()))
        })
        .collect::<Result<Vec<f64>>>()?;
    out.row(cfg, "sq-cone", n, ratios.into_iter().fold(0.0, f64::max), grid.n);
    let r = cone_reproduction(n, grid, &mut rng_for(cfg.seed, "cone-reproduction", n, 0))?;
    out.row(cfg, "cone-reproduction", n, r, grid.n);
    Ok(())
}

/// `N` pairwise disjoint rough rectangles, one per direction `e^{2πij/N}`,
/// centred at radius `ρ` with radial half-width `ρ/4`, each inside its sector
/// of half-angle `π/N`.
pub fn sector_rectangles(n: usize, rho: f64) -> Vec<SymbolSpec> {
    let a = 0.25 * rho;
    let b = 0.9 * (rho - a) * (PI / n as f64).tan().min(1e6);
    (0..n)
        .map(|j| {
            let (s, c) = (2.0 * PI * j as f64 / n as f64).sin_cos();
            SymbolSpec::RectRough { rect: spectral::FreqRect { direction: [c, s], center: [rho * c, rho * s], halfwidths: [a, b] } }
        })
        .collect()
}

fn sq_rect_rows(cfg: &ExperimentConfig, n: usize, out: &mut Outcome) -> Result<()> {
    let grid = Grid::new(cfg.grid_n(), cfg.length())?;
    let specs = sector_rectangles(n.max(2), 0.4 * nyquist(grid));
    let (mut lp, mut l2) = (0.0f64, 0.0f64);
    for t in 0..cfg.trial_count() {
        let f = band_limited(grid, &mut rng_for(cfg.seed, "sq-rect", n, t));
        lp = lp.max(spectral::square_function(&specs, &f, cfg.exponent())?.0 / f.norm_lp(cfg.exponent()));
        l2 = l2.max(spectral::square_function(&specs, &f, 2.0)?.0 / f.norm_l2());
    }
    out.row(cfg, "sq-rect", n, lp, grid.n);
    out.row(cfg, "sq-rect-l2", n, l2, grid.n);
    Ok(())
}

/// `(‖T_P f − (T₀ + T_κ + O_P)f‖₂/‖f‖₂, ‖T_P g − g‖₂/‖g‖₂)` with `f` a random
/// grid function and `g` band-limited to `|ξ| < 0.99·cos(π/N)`.
pub fn polygon_check(n: usize, grid: Grid, rng: &mut impl Rng) -> Result<(f64, f64)> {
    let f = random_with_spectrum(grid, rng, |_| true);
    let pieces = spectral::polygon_decomposition(n, &f)?;
    let tp = spectral::apply(&SymbolSpec::Polygon { n }, &f)?;
    let sum = pieces.low.add(&pieces.annuli)?.add(&pieces.boundary)?;
    let residual = tp.sub(&sum)?.norm_l2() / f.norm_l2();
    let inr = 0.99 * (PI / n as f64).cos();
    let g = random_with_spectrum(grid, rng, |xi| xi.0.hypot(xi.1) < inr);
    if g.norm_l2() == 0.0 {
        return Err(Error::invalid("grid resolves no frequencies inside the polygon"));
    }
    let repro = rel_diff(&spectral::apply(&SymbolSpec::Polygon { n }, &g)?, &g)?;
    Ok((residual, repro))
}

fn polygon_rows(cfg: &ExperimentConfig, n: usize, out: &mut Outcome) -> Result<()> {
    let grid = Grid::new(cfg.grid_n(), cfg.length())?;
    let (res, rep) = polygon_check(n, grid, &mut rng_for(cfg.seed, "polygon", n, 0))?;
    out.row(cfg, "polygon-residual", n, res, grid.n);
    out.row(cfg, "polygon-reproduction", n, rep, grid.n);
    Ok(())
}

// ---------------------------------------------------------------- carleson

/// Raster resolution (cells per unit, log₂) for disjoint-set sequences.
const MASK_LOG2: i32 = 7;

/// A random collection with `N` available slopes and a Carleson sequence
/// built from a random subset of its shadow by first claim.
pub fn random_disjoint_sequence(n: usize, rng: &mut impl Rng) -> Result<(ParallelogramCollection, CarlesonSequence)> {
    let slopes = geometry::slope_set(n)?;
    let count = rng.gen_range(8..=64);
    let c = geometry::random_collection(rng, count, &slopes);
    let keep: f64 = rng.gen_range(0.5..=1.0);
    let mut e = RasterMask::covering(&c, MASK_LOG2)?.shadow(&c);
    for cell in e.cells.iter_mut() {
        *cell = *cell && rng.gen::<f64>() < keep;
    }
    let a = carleson::from_disjoint_sets(&c, &e);
    Ok((c, a))
}

/// The disjoint-set sequence of a bush, `E = sh(C)`.
pub fn kakeya_sequence(n: usize) -> Result<(ParallelogramCollection, CarlesonSequence)> {
    let c = geometry::kakeya_collection(&geometry::slope_set(n)?);
    let cell = (n.trailing_zeros() as i32 + 3).max(MASK_LOG2);
    let e = RasterMask::covering(&c, cell)?.shadow(&c);
    let a = carleson::from_disjoint_sets(&c, &e);
    Ok((c, a))
}

/// `mass₂ / (shape(N)·√mass₁)` with `N` the number of slopes present.
pub fn embedding_constant(c: &ParallelogramCollection, a: &CarlesonSequence) -> Result<f64> {
    let m1 = carleson::mass_p(c, a, 1.0)?;
    if m1 == 0.0 {
        return Ok(0.0);
    }
    let m2 = carleson::mass_p(c, a, 2.0)?;
    Ok(m2 / (carleson::embedding_shape(c.slopes().len(), 1.0) * m1.sqrt()))
}

/// Empirical `‖M_C‖_{p→p}` on the balayage of `a`, sampled on `grid`.
pub fn collection_norm_estimate(c: &ParallelogramCollection, a: &CarlesonSequence, p: f64, grid: Grid) -> Result<f64> {
    let items: Vec<_> = c.iter().filter(|r| a.get(r) > 0.0).copied().collect();
    let bal = GridFunction::from_real(grid, |x, y| items.iter().filter(|r| r.contains_f64(x, y)).map(|r| a.get(r) / r.area_f64()).sum());
    let nb = bal.norm_lp(p);
    if nb == 0.0 {
        return Ok(1.0);
    }
    Ok((maximal::collection_max(&bal, c)?.norm_lp(p) / nb).max(1.0))
}

/// Decomposition diagnostics under the default `λ` recipe.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecompositionTrial {
    pub lambda: f64,
    /// `max` over steps of `mass₁(L₁)/mass₁(L)`; 0 when nothing exceeds `λ`.
    pub halving: f64,
    pub decay_constant: f64,
    pub kappa: f64,
    pub exceeding: usize,
}

pub fn decomposition_trial(c: &ParallelogramCollection, a: &CarlesonSequence, p: f64, grid: Grid) -> Result<DecompositionTrial> {
    let m1 = carleson::mass_p(c, a, 1.0)?;
    let u2 = if m1 > 0.0 { carleson::mass_p(c, a, 2.0)? / m1.sqrt() } else { 0.0 };
    let ap = collection_norm_estimate(c, a, p, grid)?;
    let lambda = carleson::lambda_recipe(tolerances::EMBEDDING_C, ap, u2, p);
    let config = EmbeddingConfig::new(1.0, lambda, p, 64)?;
    let rep = carleson::embedding_experiment(c, a, &config)?;
    let halving = rep.iteration_masses.windows(2).map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 }).fold(0.0, f64::max);
    let (_, first) = carleson::iterate_decomposition(c, &c.to_vec(), a, &config)?;
    Ok(DecompositionTrial { lambda, halving, decay_constant: rep.decay_constant, kappa: first.kappa, exceeding: first.exceeding })
}

/// Relative errors of the exact shadow area and pairwise `mass₂` against rasters.
pub fn oracle_errors(c: &ParallelogramCollection, a: &CarlesonSequence) -> Result<(f64, f64)> {
    let exact = geometry::shadow_area(c);
    let raster = geometry::raster_shadow_area(c, tolerances::ORACLE_RES);
    let m2 = carleson::mass_p(c, a, 2.0)?;
    let r2 = carleson::raster_mass_p(c, a, 2.0, tolerances::ORACLE_RES);
    Ok(((exact - raster).abs() / exact, (m2 - r2).abs() / m2))
}

/// A random family of pairwise incomparable parallelograms with one slope.
pub fn random_incomparable_family(slope: Slope, rng: &mut impl Rng) -> ParallelogramCollection {
    let pool = geometry::random_collection(rng, 24, &[slope]);
    let mut kept: Vec<geometry::Parallelogram> = Vec::new();
    for r in pool.iter() {
        if kept.iter().all(|q| q != r && !geometry::leq(q, r) && !geometry::leq(r, q)) {
            kept.push(*r);
        }
    }
    ParallelogramCollection::from_iter(kept)
}

/// `max_u Σ_{u_R = u}|R| / (2^u·|sh(T)|)`.
pub fn journe_ratio(t: &ParallelogramCollection) -> Result<f64> {
    let u = geometry::journe_heights(t, tolerances::JOURNE_THRESHOLD)?;
    let mut by: BTreeMap<u32, f64> = BTreeMap::new();
    for (r, h) in &u {
        *by.entry(*h).or_default() += r.area_f64();
    }
    let sh = geometry::shadow_area(t);
    Ok(by.iter().map(|(h, s)| s / ((*h as f64).exp2() * sh)).fold(0.0, f64::max))
}

fn carleson_rows(cfg: &ExperimentConfig, n: usize, out: &mut Outcome) -> Result<()> {
    let grid = Grid::new(cfg.grid_n(), cfg.length())?;
    let trials = cfg.trial_count();
    let seqs = (0..trials)
        .into_par_iter()
        .map(|t| random_disjoint_sequence(n, &mut rng_for(cfg.seed, "carleson", n, t)))
        .collect::<Result<Vec<_>>>()?;
    let consts = seqs.par_iter().map(|(c, a)| embedding_constant(c, a)).collect::<Result<Vec<f64>>>()?;
    out.row(cfg, "embedding", n, consts.into_iter().fold(0.0, f64::max), grid.n);

    let dec_trials = trials.min(25);
    let decs = seqs[..dec_trials].iter().map(|(c, a)| decomposition_trial(c, a, cfg.exponent(), grid)).collect::<Result<Vec<_>>>()?;
    out.row(cfg, "halving", n, decs.iter().map(|d| d.halving).fold(0.0, f64::max), grid.n);
    out.row(cfg, "decay", n, decs.iter().map(|d| d.decay_constant).fold(0.0, f64::max), grid.n);
    out.measure("kappa", n, decs.iter().map(|d| d.kappa).fold(0.0, f64::max));
    out.measure("exceeding", n, decs.iter().map(|d| d.exceeding).sum::<usize>() as f64);

    let (kc, ka) = kakeya_sequence(n)?;
    let kd = decomposition_trial(&kc, &ka, cfg.exponent(), grid)?;
    out.row(cfg, "halving-kakeya", n, kd.halving, grid.n);
    out.row(cfg, "decay-kakeya", n, kd.decay_constant, grid.n);
    out.measure("exceeding-kakeya", n, kd.exceeding as f64);

    let slopes = geometry::slope_set(n)?;
    let journe = (0..trials.min(10))
        .map(|t| {
            let mut rng = rng_for(cfg.seed, "journe", n, t);
            let s = slopes[rng.gen_range(0..slopes.len())];
            journe_ratio(&random_incomparable_family(s, &mut rng))
        })
        .collect::<Result<Vec<f64>>>()?;
    out.row(cfg, "journe", n, journe.into_iter().fold(0.0, f64::max), grid.n);

    if n <= 16 {
        let errs = seqs[..trials.min(10)].iter().map(|(c, a)| oracle_errors(c, a)).collect::<Result<Vec<_>>>()?;
        out.row(cfg, "shadow-oracle", n, errs.iter().map(|e| e.0).fold(0.0, f64::max), tolerances::ORACLE_RES);
        out.row(cfg, "mass-oracle", n, errs.iter().map(|e| e.1).fold(0.0, f64::max), tolerances::ORACLE_RES);
    }
    Ok(())
}

// ---------------------------------------------------------------- maximal

/// A random nonnegative bump: the indicator of a disc of radius in
/// `[L/32, L/8]` inside the middle half of the square.
pub fn random_disc(grid: Grid, rng: &mut impl Rng) -> GridFunction {
    let l = grid.length;
    let (cx, cy) = (rng.gen_range(-0.25..0.25) * l, rng.gen_range(-0.25..0.25) * l);
    let r = rng.gen_range(l / 32.0..l / 8.0);
    GridFunction::from_real(grid, |x, y| f64::from((x - cx).hypot(y - cy) < r))
}

/// A random weight `(ε + |x − x₀|)^{−α}` with `α ∈ [0, 1)`, or `1` plus a few
/// positive bumps.
pub fn random_weight(grid: Grid, rng: &mut impl Rng) -> GridFunction {
    let l = grid.length;
    if rng.gen_bool(0.5) {
        let (cx, cy) = (rng.gen_range(-0.25..0.25) * l, rng.gen_range(-0.25..0.25) * l);
        let alpha: f64 = rng.gen_range(0.0..1.0);
        let eps = grid.cell();
        GridFunction::from_real(grid, |x, y| (eps + (x - cx).hypot(y - cy)).powf(-alpha))
    } else {
        let bumps: Vec<(f64, f64, f64, f64)> =
            (0..3).map(|_| (rng.gen_range(-0.4..0.4) * l, rng.gen_range(-0.4..0.4) * l, rng.gen_range(l / 64.0..l / 8.0), rng.gen_range(1.0..50.0))).collect();
        GridFunction::from_real(grid, |x, y| 1.0 + bumps.iter().filter(|b| (x - b.0).hypot(y - b.1) < b.2).map(|b| b.3).sum::<f64>())
    }
}

pub fn slope_directions(n: usize) -> Result<DirectionSet> {
    DirectionSet::from_slopes(&geometry::slope_set(n)?)
}

/// `[w, w]_S / B` for the series weight built from a random disc, where `B`
/// is the empirical `‖M_{S;2}‖_p` over the disc and its first iterates.
pub fn series_weight_ratio(dirs: &DirectionSet, grid: Grid, p: f64, terms: usize, rng: &mut impl Rng) -> f64 {
    let g = random_disc(grid, rng);
    let mut inputs = vec![g.clone()];
    for _ in 0..2 {
        let next = maximal::strong_composition(inputs.last().expect("nonempty"), dirs);
        inputs.push(next);
    }
    let b = maximal::strong_norm_estimate(&inputs, dirs, p);
    let w = maximal::series_weight(&g, dirs, b, SERIES_TOL, terms);
    maximal::two_weight_constant(&w, &w, dirs) / b
}

/// Truncation of the series weight: relative tail bound and term cap.
pub const SERIES_TOL: f64 = 1e-9;
pub const SERIES_TERMS: usize = 80;

fn maximal_rows(cfg: &ExperimentConfig, n: usize, out: &mut Outcome) -> Result<()> {
    let grid = Grid::new(cfg.grid_n(), cfg.length())?;
    let dirs = slope_directions(n)?;
    let one = GridFunction::from_real(grid, |_, _| 1.0);
    out.row(cfg, "unit-weight", n, maximal::two_weight_constant(&one, &one, &dirs), grid.n);
    let trials = cfg.trial_count();
    let a1 = (0..trials).map(|t| series_weight_ratio(&dirs, grid, cfg.exponent(), SERIES_TERMS, &mut rng_for(cfg.seed, "a1-series", n, t))).fold(0.0, f64::max);
    out.row(cfg, "a1-series", n, a1, grid.n);
    let fs = (0..trials)
        .map(|t| {
            let mut rng = rng_for(cfg.seed, "fefferman-stein", n, t);
            let f = random_disc(grid, &mut rng);
            let w = random_weight(grid, &mut rng);
            maximal::fefferman_stein_ratio(&f, &w, &dirs)
        })
        .fold(0.0, f64::max);
    out.row(cfg, "fefferman-stein", n, fs, grid.n);
    Ok(())
}

// ---------------------------------------------------------------- tiles

/// The three tile constructions for `N` arcs. Rectangles sit at `0.6` of the
/// Nyquist radius (in cycles per unit).
pub fn tile_constructions(n: usize, grid: Grid) -> Result<[(&'static str, TileSet); 3]> {
    let arcs = tiles::cone_arcs(n)?;
    let ny = grid.n as f64 / grid.length / 2.0;
    Ok([
        ("bessel-whitney", tiles::whitney_cone_tiles(&arcs, grid)?),
        ("bessel-smooth", tiles::smooth_cone_tiles(&arcs, grid)?),
        ("bessel-rect", tiles::rect_tiles(&tiles::inscribed_rectangles(&arcs, 0.6 * ny)?, grid)?),
    ])
}

/// `max Σ_t a_t / ‖f‖₂²` over random `f` spread over the tiles' spectral support.
pub fn bessel_ratio(ts: &TileSet, trials: usize, seed: u64, tag: &str) -> Result<f64> {
    let grid = ts.grid();
    let sup = tiles::spectral_support(ts);
    let params = PacketParams::default();
    let vals = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_for(seed, tag, ts.len(), t);
            let fhat = tiles::random_spectrum(grid, &sup, &mut rng);
            let a = tiles::coefficients_from_spectrum(&fhat, ts, &params)?;
            Ok(a.iter().sum::<f64>())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(vals.into_iter().fold(0.0, f64::max))
}

/// Grid side for `N` arcs: fine enough that each arc carries lattice points.
pub fn tiles_grid_n(n: usize, grid_n: usize) -> usize {
    grid_n.max(32 * n)
}

fn tiles_rows(cfg: &ExperimentConfig, n: usize, out: &mut Outcome) -> Result<()> {
    let g = tiles_grid_n(n, cfg.grid_n());
    let grid = Grid::new(g, cfg.length())?;
    for (tag, ts) in tile_constructions(n, grid)? {
        let r = bessel_ratio(&ts, cfg.trial_count(), sub_seed(cfg.seed, tag, n, 0), tag)?;
        out.row(cfg, tag, n, r, g);
        out.measure(&format!("{tag}-overlap"), n, tiles::frequency_overlap(&ts) as f64);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_power_law() {
        let pts: Vec<(usize, f64)> = [4usize, 8, 16, 64, 256].iter().map(|&n| (n, 3.0 * (n as f64).log2().powf(0.3))).collect();
        let f = fit_exponent(&pts).unwrap();
        assert!((f.exponent - 0.3).abs() < 1e-6);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-6);
        assert!(f.ci95.0 <= f.exponent && f.exponent <= f.ci95.1);
        let flat: Vec<(usize, f64)> = [4usize, 8, 16].iter().map(|&n| (n, 2.5)).collect();
        assert_eq!(fit_exponent(&flat).unwrap().exponent, 0.0);
        assert!(fit_exponent(&pts[..2]).is_err());
        assert!(fit_exponent(&[(4, 1.0), (8, 0.0), (16, 1.0)]).is_err());
    }

    #[test]
    fn ci_widens_with_noise() {
        let pts = [(4usize, 1.0), (8, 1.3), (16, 1.1), (32, 1.6)];
        let f = fit_exponent(&pts).unwrap();
        assert!(f.ci95.1 - f.ci95.0 > 0.0);
    }

    #[test]
    fn tags_parse() {
        for e in Experiment::ALL {
            assert_eq!(e.tag().parse::<Experiment>().unwrap(), e);
        }
        assert!("besicovitch".parse::<Experiment>().is_err());
        assert_eq!("rdf-smooth".parse::<Harness>().unwrap(), Harness::RdfSmooth);
    }

    #[test]
    fn config_validation() {
        let mut c = ExperimentConfig::new(Experiment::Norms);
        c.sweep = vec![8, 12];
        assert!(c.resolved().is_err());
        c.sweep = vec![8];
        c.tolerances.insert("bogus".into(), 1.0);
        assert!(c.resolved().is_err());
        c.tolerances.clear();
        let r = c.resolved().unwrap();
        assert_eq!(r.grid, Some(1024));
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(ExperimentConfig::from_json(&json).unwrap(), r);
        assert!(ExperimentConfig::from_json(r#"{"experiment":"kakeya","extra":1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"experiment":"nope"}"#).is_err());
    }

    #[test]
    fn sub_seeds_are_stable_and_distinct() {
        assert_eq!(sub_seed(7, "kakeya", 16, 0), sub_seed(7, "kakeya", 16, 0));
        assert_ne!(sub_seed(7, "kakeya", 16, 0), sub_seed(7, "kakeya", 16, 1));
        assert_ne!(sub_seed(7, "kakeya", 16, 0), sub_seed(8, "kakeya", 16, 0));
        assert_ne!(sub_seed(7, "kakeya", 16, 0), sub_seed(7, "tiles", 16, 0));
    }

    #[test]
    fn csv_has_header_and_round_trip_floats() {
        let r = Row { experiment: "meyer".into(), n: 8, p: 4.0, ratio: 0.1 + 0.2, exponent_fit: None, grid_n: 64, length: 8.0, seed: 7 };
        let s = rows_to_csv(&[r]).unwrap();
        let mut lines = s.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
        let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(fields[3].parse::<f64>().unwrap(), 0.1 + 0.2);
        assert_eq!(fields[4], "");
    }

    #[test]
    fn checks_compare() {
        assert!(Check::le("a", 1.0, 1.0).pass);
        assert!(!Check::le("a", f64::NAN, 1.0).pass);
        assert!(Check::ge("a", 2.0, 1.0).pass);
    }

    #[test]
    fn sector_rectangles_are_disjoint() {
        let specs = sector_rectangles(8, 10.0);
        for a in -60..60 {
            for b in -60..60 {
                let xi = (a as f64 * 0.25, b as f64 * 0.25);
                let hits = specs.iter().filter(|s| s.value(xi).re > 0.0).count();
                assert!(hits <= 1);
            }
        }
    }

    #[test]
    fn time_cap_gives_partial_record() {
        let mut c = ExperimentConfig::new(Experiment::Norms);
        c.sweep = vec![8, 16];
        c.grid = Some(16);
        c.max_seconds = Some(1e-9);
        let r = run(&c).unwrap();
        assert!(!r.complete && !r.success());
        assert!(r.rows.is_empty());
    }
}
