//! Carleson sequences on sheared grids.
//!
//! A sequence `a = {a_R}` is spread over its parallelograms by the balayage
//! `T(a) = Σ a_R 1_R/|R|`; its `L^p` norms are the masses `mass_p`. The
//! iterative decomposition follows the inside/outside splitting used to prove
//! exponential decay of strata, and reports its guarantees as measured
//! diagnostics rather than assuming them.

use crate::error::{Error, Result};
use crate::exact::Rational;
use crate::geometry::{box_intersection_area, shadow_area, KahanSum, Parallelogram, ParallelogramCollection, ShearBox, Slope};
use crate::maximal;
use crate::spectral::GridFunction;
use crate::tolerances;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Nonnegative weights on parallelograms.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CarlesonSequence {
    entries: BTreeMap<Parallelogram, f64>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    parallelogram: Parallelogram,
    value: f64,
}

impl CarlesonSequence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, r: Parallelogram, value: f64) -> Result<()> {
        if !(value >= 0.0 && value.is_finite()) {
            return Err(Error::invalid("Carleson weights must be finite and nonnegative"));
        }
        self.entries.insert(r, value);
        Ok(())
    }

    pub fn get(&self, r: &Parallelogram) -> f64 {
        self.entries.get(r).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        let mut s = KahanSum::default();
        for v in self.entries.values() {
            s.add(*v);
        }
        s.value()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Parallelogram, &f64)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Self {
        CarlesonSequence { entries: self.entries.iter().map(|(k, v)| (*k, v * c)).collect() }
    }

    /// `a_R = |R|` on every member.
    pub fn uniform(c: &ParallelogramCollection) -> Self {
        CarlesonSequence { entries: c.iter().map(|r| (*r, r.area_f64())).collect() }
    }

    pub fn to_json(&self) -> String {
        let v: Vec<Entry> = self.entries.iter().map(|(k, v)| Entry { parallelogram: *k, value: *v }).collect();
        serde_json::to_string_pretty(&v).expect("sequence serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let v: Vec<Entry> = serde_json::from_str(s).map_err(|e| Error::invalid(e.to_string()))?;
        let mut out = CarlesonSequence::new();
        for e in v {
            out.insert(e.parallelogram, e.value)?;
        }
        Ok(out)
    }
}

/// `Σ_R a_R 1_R(x)/|R|` with exact membership.
pub fn balayage_at(c: &ParallelogramCollection, a: &CarlesonSequence, x: (f64, f64)) -> f64 {
    let (px, py) = (Rational::from_f64(x.0), Rational::from_f64(x.1));
    c.iter().filter(|r| r.contains(px, py)).map(|r| a.get(r) / r.area_f64()).sum()
}

/// `Σ_{Q,R} a_Q a_R |Q∩R|/(|Q||R|)` with rows reduced in a fixed order.
fn pairwise_energy(items: &[(Parallelogram, f64)]) -> f64 {
    let rows: Vec<f64> = items
        .par_iter()
        .enumerate()
        .map(|(i, (q, aq))| {
            let bq = q.to_box();
            let mut s = KahanSum::default();
            s.add(aq * aq / q.area_f64());
            for (r, ar) in &items[i + 1..] {
                let area = box_intersection_area(&bq, &r.to_box());
                if !area.is_zero() {
                    s.add(2.0 * aq * ar * area.to_f64() / (q.area_f64() * r.area_f64()));
                }
            }
            s.value()
        })
        .collect();
    let mut s = KahanSum::default();
    for v in rows {
        s.add(v);
    }
    s.value()
}

fn weighted_items(c: &ParallelogramCollection, a: &CarlesonSequence) -> Vec<(Parallelogram, f64)> {
    c.iter().map(|r| (*r, a.get(r))).filter(|(_, v)| *v > 0.0).collect()
}

/// `‖T(a)‖_p`: exact for `p ∈ {1, 2}`, rasterized with refinement otherwise.
pub fn mass_p(c: &ParallelogramCollection, a: &CarlesonSequence, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::invalid("mass_p needs p >= 1"));
    }
    let items = weighted_items(c, a);
    if p == 1.0 {
        let mut s = KahanSum::default();
        for (_, v) in &items {
            s.add(*v);
        }
        return Ok(s.value());
    }
    if p == 2.0 {
        return Ok(pairwise_energy(&items).sqrt());
    }
    let mut prev = raster_mass_p(c, a, p, 1 << tolerances::RASTER_START_LOG2);
    for k in tolerances::RASTER_START_LOG2 + 1..=tolerances::RASTER_CAP_LOG2 {
        let cur = raster_mass_p(c, a, p, 1 << k);
        if (cur - prev).abs() <= tolerances::RASTER_AGREE * cur.abs().max(f64::MIN_POSITIVE) {
            return Ok(cur);
        }
        prev = cur;
    }
    Ok(prev)
}

/// Midpoint-rule `‖T(a)‖_p` with `res × res` samples over the bounding box.
pub fn raster_mass_p(c: &ParallelogramCollection, a: &CarlesonSequence, p: f64, res: usize) -> f64 {
    let Some((x0, x1, y0, y1)) = c.bbox() else { return 0.0 };
    let items: Vec<(f64, f64, f64, f64, f64, f64)> = c
        .iter()
        .filter(|r| a.get(r) > 0.0)
        .map(|r| (r.base.lo_f64(), r.base.hi_f64(), r.slope.to_f64(), r.vert.lo_f64(), r.vert.hi_f64(), a.get(r) / r.area_f64()))
        .collect();
    let hx = (x1 - x0) / res as f64;
    let hy = (y1 - y0) / res as f64;
    let cols: Vec<f64> = (0..res)
        .into_par_iter()
        .map(|i| {
            let x = x0 + (i as f64 + 0.5) * hx;
            let mut ev: Vec<(i64, f64)> = Vec::new();
            for t in items.iter().filter(|t| x >= t.0 && x < t.1) {
                let a = ((t.2 * x + t.3 - y0) / hy - 0.5).ceil() as i64;
                let b = ((t.2 * x + t.4 - y0) / hy - 0.5).ceil() as i64;
                if b > a {
                    ev.push((a, t.5));
                    ev.push((b, -t.5));
                }
            }
            ev.sort_by(|u, v| u.0.cmp(&v.0).then(u.1.total_cmp(&v.1)));
            let mut acc = 0.0;
            let mut val = 0.0;
            for w in 0..ev.len() {
                val += ev[w].1;
                if w + 1 < ev.len() {
                    let rows = (ev[w + 1].0 - ev[w].0) as f64;
                    if rows > 0.0 && val > 1e-300 {
                        acc += rows * val.powf(p);
                    }
                }
            }
            acc
        })
        .collect();
    let mut s = KahanSum::default();
    for v in cols {
        s.add(v);
    }
    (s.value() * hx * hy).powf(1.0 / p)
}

/// A boolean raster with square cells of side `h`; cell `(i, j)` has centre
/// `(x0 + (i + 1/2)h, y0 + (j + 1/2)h)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterMask {
    pub x0: f64,
    pub y0: f64,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    pub cells: Vec<bool>,
}

impl RasterMask {
    /// An empty mask covering the bounding box of `c` with `2^cell_log2` cells per unit.
    pub fn covering(c: &ParallelogramCollection, cell_log2: i32) -> Result<Self> {
        let (x0, x1, y0, y1) = c.bbox().ok_or_else(|| Error::invalid("empty collection"))?;
        let h = (-(cell_log2 as f64)).exp2();
        let x0 = (x0 / h).floor() * h;
        let y0 = (y0 / h).floor() * h;
        let nx = ((x1 - x0) / h).ceil() as usize;
        let ny = ((y1 - y0) / h).ceil() as usize;
        Ok(RasterMask { x0, y0, h, nx, ny, cells: vec![false; nx * ny] })
    }

    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        (self.x0 + (i as f64 + 0.5) * self.h, self.y0 + (j as f64 + 0.5) * self.h)
    }

    pub fn fill(mut self, f: impl Fn(f64, f64) -> bool) -> Self {
        for j in 0..self.ny {
            for i in 0..self.nx {
                let (x, y) = self.center(i, j);
                self.cells[j * self.nx + i] = f(x, y);
            }
        }
        self
    }

    /// The shadow `sh(C)` on this raster.
    pub fn shadow(mut self, c: &ParallelogramCollection) -> Self {
        let mut cells = std::mem::take(&mut self.cells);
        for r in c.iter() {
            self.visit(r, |k| cells[k] = true);
        }
        self.cells = cells;
        self
    }

    /// Calls `each` with the index of every cell whose centre lies in `r`.
    pub fn visit(&self, r: &Parallelogram, mut each: impl FnMut(usize)) {
        let first = |v: f64, o: f64, n: usize| ((v - o) / self.h - 0.5).ceil().clamp(0.0, n as f64) as usize;
        let s = r.slope.to_f64();
        let (i0, i1) = (first(r.base.lo_f64(), self.x0, self.nx), first(r.base.hi_f64(), self.x0, self.nx));
        for i in i0..i1 {
            let x = self.x0 + (i as f64 + 0.5) * self.h;
            let j0 = first(s * x + r.vert.lo_f64(), self.y0, self.ny);
            let j1 = first(s * x + r.vert.hi_f64(), self.y0, self.ny);
            for j in j0..j1 {
                each(j * self.nx + i);
            }
        }
    }

    pub fn measure(&self) -> f64 {
        self.cells.iter().filter(|&&b| b).count() as f64 * self.h * self.h
    }
}

/// Assigns each cell of `e` to the first parallelogram containing its centre,
/// in the order area descending, then the derived ordering.
pub fn from_disjoint_sets(c: &ParallelogramCollection, e: &RasterMask) -> CarlesonSequence {
    let mut order = c.to_vec();
    order.sort_by(|a, b| b.area().cmp(&a.area()).then(a.cmp(b)));
    order.dedup();
    let mut claimed = vec![false; e.cells.len()];
    let mut out = CarlesonSequence::new();
    let cell = e.h * e.h;
    for r in order {
        let mut n = 0usize;
        e.visit(&r, |k| {
            if e.cells[k] && !claimed[k] {
                claimed[k] = true;
                n += 1;
            }
        });
        out.insert(r, n as f64 * cell).expect("nonnegative");
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CarlesonReport {
    /// `Σ_{L} a / |sh(T)|` per cover.
    pub ratios: Vec<f64>,
    pub worst: f64,
}

/// Falsifier for the Carleson condition over supplied single-slope covers.
pub fn verify_carleson(
    c: &ParallelogramCollection,
    a: &CarlesonSequence,
    covers: &[(Slope, ParallelogramCollection)],
) -> Result<CarlesonReport> {
    let members = c.to_vec();
    let mut ratios = Vec::with_capacity(covers.len());
    for (s, t) in covers {
        if t.iter().any(|p| p.slope != *s) {
            return Err(Error::invalid("cover mixes slopes"));
        }
        let boxes: Vec<ShearBox> = t.iter().map(Parallelogram::to_box).collect();
        let sum: f64 = members
            .iter()
            .filter(|r| {
                let b = r.to_box();
                boxes.iter().any(|tb| b.is_within(tb))
            })
            .map(|r| a.get(r))
            .sum();
        let sh = shadow_area(t);
        ratios.push(if sum == 0.0 { 0.0 } else { sum / sh });
    }
    let worst = ratios.iter().copied().fold(0.0, f64::max);
    Ok(CarlesonReport { ratios, worst })
}

/// `B_R^L = (1/|R|) Σ_{Q∈L, Q≤R} a_Q |Q∩R|/|Q|`.
pub fn b_value(r: &Parallelogram, l: &[Parallelogram], a: &CarlesonSequence) -> f64 {
    let rb = r.to_box();
    let mut s = KahanSum::default();
    for q in l {
        if !q.base.is_within(&r.base) {
            continue;
        }
        let area = box_intersection_area(&q.to_box(), &rb);
        if area > Rational::ZERO {
            s.add(a.get(q) * area.to_f64() / q.area_f64());
        }
    }
    s.value() / r.area_f64()
}

/// `R_{s,k} = {R ∈ C_s : λk ≤ B_R^C < λ(k+1)}`.
pub fn stratify(c: &ParallelogramCollection, a: &CarlesonSequence, lambda: f64) -> Result<BTreeMap<(Slope, u64), Vec<Parallelogram>>> {
    if !(lambda >= 1.0) {
        return Err(Error::invalid("stratification needs lambda >= 1"));
    }
    let all = c.to_vec();
    let keyed: Vec<((Slope, u64), Parallelogram)> = all
        .par_iter()
        .map(|r| {
            let b = b_value(r, &all, a);
            ((r.slope, (b / lambda).floor() as u64), *r)
        })
        .collect();
    let mut out: BTreeMap<(Slope, u64), Vec<Parallelogram>> = BTreeMap::new();
    for (k, r) in keyed {
        out.entry(k).or_default().push(r);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub p: f64,
    pub max_iterations: usize,
}

impl EmbeddingConfig {
    pub fn new(gamma: f64, lambda: f64, p: f64, max_iterations: usize) -> Result<Self> {
        if !(lambda >= 1.0) {
            return Err(Error::invalid("lambda must be at least 1"));
        }
        if !(p > 1.0 && p <= 2.0) {
            return Err(Error::invalid("p must lie in (1, 2]"));
        }
        if !(gamma >= 0.0) {
            return Err(Error::invalid("gamma must be nonnegative"));
        }
        Ok(EmbeddingConfig { gamma, lambda, p, max_iterations })
    }
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig { gamma: 1.0, lambda: 8.0, p: 1.5, max_iterations: 64 }
    }
}

/// `λ = C·max(1, A_p·U₂^{2/p'})`.
pub fn lambda_recipe(c: f64, a_p: f64, u2: f64, p: f64) -> f64 {
    let pp = p / (p - 1.0);
    c * (a_p * u2.powf(2.0 / pp)).max(1.0)
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct IterationDiagnostics {
    pub mass_before: f64,
    pub mass_after: f64,
    pub halved: bool,
    /// `max_R (B_R^L − B_R^{L₁})/λ` over `R` with `B_R^L > λ`.
    pub kappa: f64,
    pub exceeding: usize,
    pub starred: usize,
    /// Largest `j` reached in the ladder `K = 3^j L_R`.
    pub max_ladder: usize,
}

/// Vertical extent of `Q` in the frame that unshears slope `s`.
fn frame_projection(q: &Parallelogram, s: Rational) -> (Rational, Rational) {
    let d = q.slope.value() - s;
    let (u, v) = (d * q.base.lo(), d * q.base.hi());
    (u.min(v) + q.vert.lo(), u.max(v) + q.vert.hi())
}

struct Split {
    inside: Vec<Parallelogram>,
    outside_b: f64,
    outside_empty: bool,
}

/// Splits `{Q ∈ L : Q ≤ I×K}` by whether the frame projection of `Q` lies in `3K`.
fn split(l: &[(Parallelogram, (Rational, Rational))], a: &CarlesonSequence, frame: &ShearBox, r: &Parallelogram) -> Split {
    let (k0, k1) = (frame.y0, frame.y1);
    let len = k1 - k0;
    let (t0, t1) = (k0 - len, k1 + len);
    let mut inside = Vec::new();
    let mut out = KahanSum::default();
    let mut outside_empty = true;
    for (q, (p0, p1)) in l {
        if !q.base.is_within(&r.base) {
            continue;
        }
        let area = box_intersection_area(&q.to_box(), frame);
        if area.is_zero() {
            continue;
        }
        if *p0 >= t0 && *p1 <= t1 {
            inside.push(*q);
        } else {
            outside_empty = false;
            out.add(a.get(q) * area.to_f64() / q.area_f64());
        }
    }
    Split { inside, outside_b: out.value() / frame.area().to_f64(), outside_empty }
}

/// One step of the inside/outside decomposition.
pub fn iterate_decomposition(
    c: &ParallelogramCollection,
    l: &[Parallelogram],
    a: &CarlesonSequence,
    config: &EmbeddingConfig,
) -> Result<(Vec<Parallelogram>, IterationDiagnostics)> {
    let lambda = config.lambda;
    let mass_before: f64 = l.iter().map(|q| a.get(q)).fold(0.0, |s, v| s + v);
    let mut diag = IterationDiagnostics { mass_before, ..Default::default() };
    let exceeding: Vec<(Parallelogram, f64)> = c
        .to_vec()
        .into_par_iter()
        .map(|r| (r, b_value(&r, l, a)))
        .filter(|(_, b)| *b > lambda)
        .collect();
    diag.exceeding = exceeding.len();

    let three = Rational::int(3);
    let half = Rational::new(1, 2);
    let results: Vec<Result<(Vec<Parallelogram>, bool, usize)>> = exceeding
        .par_iter()
        .map(|(r, _)| {
            let s = r.slope.value();
            let framed: Vec<(Parallelogram, (Rational, Rational))> = l.iter().map(|q| (*q, frame_projection(q, s))).collect();
            let max_extent = framed
                .iter()
                .filter(|(q, _)| q.base.is_within(&r.base))
                .map(|(_, (p0, p1))| *p1 - *p0)
                .max()
                .unwrap_or(Rational::ZERO);
            let mut frame = r.to_box();
            let first = split(&framed, a, &frame, r);
            if first.outside_b <= lambda {
                return Ok((first.inside, false, 0));
            }
            let mut best = first.inside;
            let mut j = 0usize;
            loop {
                j += 1;
                if j > config.max_iterations {
                    return Err(Error::NoConvergence {
                        iterations: config.max_iterations,
                        detail: format!("K ladder for {r:?} did not exhaust the outside collection"),
                    });
                }
                let mid = (frame.y0 + frame.y1) * half;
                let len = (frame.y1 - frame.y0) * three;
                frame.y0 = mid - len * half;
                frame.y1 = mid + len * half;
                let sp = split(&framed, a, &frame, r);
                if sp.outside_b > lambda {
                    best = sp.inside;
                }
                if sp.outside_empty && frame.y1 - frame.y0 >= max_extent {
                    return Ok((best, true, j));
                }
            }
        })
        .collect();

    let mut l1: BTreeSet<Parallelogram> = BTreeSet::new();
    for r in results {
        let (inside, starred, j) = r?;
        if starred {
            diag.starred += 1;
        }
        diag.max_ladder = diag.max_ladder.max(j);
        l1.extend(inside);
    }
    let l1: Vec<Parallelogram> = l1.into_iter().collect();
    diag.mass_after = l1.iter().map(|q| a.get(q)).fold(0.0, |s, v| s + v);
    diag.halved = diag.mass_after <= 0.5 * diag.mass_before + 1e-12 * diag.mass_before.abs();
    diag.kappa = exceeding
        .iter()
        .map(|(r, b)| (b - b_value(r, &l1, a)) / lambda)
        .fold(0.0, f64::max);
    Ok((l1, diag))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StratumRow {
    pub slope: Slope,
    pub k: u64,
    pub count: usize,
    pub shadow: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MassReport {
    pub directions: usize,
    pub mass1: f64,
    pub mass2: f64,
    pub p: f64,
    pub mass_p: f64,
    pub u2: f64,
    /// `√(log₂N·(γ·max(1, log₂log₂N))^γ)`.
    pub shape: f64,
    /// `mass₂ / (shape·√mass₁)`.
    pub constant: f64,
    pub lambda: f64,
    pub per_stratum: Vec<StratumRow>,
    /// `max_{s, k ≥ 1} |sh(R_{s,k})| / (2^{-k}·mass₁)`.
    pub decay_constant: f64,
    /// `mass₁` along repeated decomposition steps.
    pub iteration_masses: Vec<f64>,
}

impl MassReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub const CSV_HEADER: &'static str = "slope,k,count,shadow,mass1,mass2,u2";

    pub fn csv_rows(&self) -> Vec<String> {
        self.per_stratum
            .iter()
            .map(|r| format!("{},{},{},{:.17e},{:.17e},{:.17e},{:.17e}", r.slope, r.k, r.count, r.shadow, self.mass1, self.mass2, self.u2))
            .collect()
    }
}

/// The growth shape of the embedding bound for `N` directions.
pub fn embedding_shape(n: usize, gamma: f64) -> f64 {
    let l = (n.max(2) as f64).log2();
    let ll = l.log2().max(1.0);
    (l * (gamma * ll).max(1.0).powf(gamma)).sqrt()
}

/// Masses, strata and repeated decompositions for one sequence.
pub fn embedding_experiment(c: &ParallelogramCollection, a: &CarlesonSequence, config: &EmbeddingConfig) -> Result<MassReport> {
    let mass1 = mass_p(c, a, 1.0)?;
    let mass2 = mass_p(c, a, 2.0)?;
    let mp = if config.p == 2.0 { mass2 } else { mass_p(c, a, config.p)? };
    let u2 = if mass1 > 0.0 { mass2 / mass1.sqrt() } else { 0.0 };
    let directions = c.slopes().len();
    let shape = embedding_shape(directions, config.gamma);
    let constant = if mass1 > 0.0 { mass2 / (shape * mass1.sqrt()) } else { 0.0 };
    let strata = stratify(c, a, config.lambda)?;
    let per_stratum: Vec<StratumRow> = strata
        .iter()
        .map(|((s, k), rs)| StratumRow {
            slope: *s,
            k: *k,
            count: rs.len(),
            shadow: shadow_area(&ParallelogramCollection::from_iter(rs.iter().copied())),
        })
        .collect();
    let decay_constant = per_stratum
        .iter()
        .filter(|r| r.k >= 1 && mass1 > 0.0)
        .map(|r| r.shadow / ((-(r.k as f64)).exp2() * mass1))
        .fold(0.0, f64::max);
    let mut iteration_masses = vec![mass1];
    let mut l = c.to_vec();
    for _ in 0..config.max_iterations {
        if l.is_empty() {
            break;
        }
        let (next, d) = iterate_decomposition(c, &l, a, config)?;
        iteration_masses.push(d.mass_after);
        if next.len() == l.len() {
            break;
        }
        l = next;
    }
    Ok(MassReport {
        directions,
        mass1,
        mass2,
        p: config.p,
        mass_p: mp,
        u2,
        shape,
        constant,
        lambda: config.lambda,
        per_stratum,
        decay_constant,
        iteration_masses,
    })
}

/// A weight: either the constant 1 or nonnegative samples on a grid.
#[derive(Clone, Debug)]
pub enum Weight {
    One,
    Samples(GridFunction),
}

/// `(∫ |T_C(a)|² / M_C u)^{1/2}` on the samples of `grid`.
pub fn weighted_mass2(
    c: &ParallelogramCollection,
    a: &CarlesonSequence,
    u: &Weight,
    grid: crate::spectral::Grid,
) -> Result<f64> {
    let items: Vec<Parallelogram> = c.iter().filter(|r| a.get(r) > 0.0).copied().collect();
    let bal = GridFunction::from_real(grid, |x, y| {
        items.iter().filter(|r| r.contains_f64(x, y)).map(|r| a.get(r) / r.area_f64()).sum()
    });
    let mu = match u {
        Weight::One => None,
        Weight::Samples(w) => {
            if w.data.iter().any(|z| z.re < 0.0) {
                return Err(Error::invalid("weights must be nonnegative"));
            }
            Some(maximal::collection_max(w, c)?)
        }
    };
    let mut s = KahanSum::default();
    for (k, z) in bal.data.iter().enumerate() {
        let t = z.re;
        if t == 0.0 {
            continue;
        }
        let m = mu.as_ref().map_or(1.0, |m| m.data[k].re);
        if m <= 0.0 {
            return Err(Error::DegenerateWeight);
        }
        s.add(t * t / m);
    }
    Ok((s.value() * grid.cell_area()).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DyadicInterval;

    fn par(p: i64, q: u32, ki: i32, mi: i64, kj: i32, mj: i64) -> Parallelogram {
        Parallelogram::new(Slope::new(p, q).unwrap(), DyadicInterval::new(ki, mi), DyadicInterval::new(kj, mj)).unwrap()
    }

    #[test]
    fn balayage_examples() {
        let r = par(0, 0, 0, 0, 0, 0);
        let c = ParallelogramCollection::from_iter([r]);
        let a = CarlesonSequence::uniform(&c);
        assert_eq!(balayage_at(&c, &a, (0.5, 0.5)), 1.0);
        assert_eq!(balayage_at(&c, &a, (1.5, 0.5)), 0.0);
        let q = par(1, 1, 0, 0, 0, 0);
        let c = ParallelogramCollection::from_iter([r, q]);
        let a = CarlesonSequence::uniform(&c);
        assert_eq!(balayage_at(&c, &a, (0.25, 0.5)), 2.0);
    }

    #[test]
    fn mass_examples() {
        let r1 = par(0, 0, 0, 0, 0, 0);
        let r2 = par(0, 0, 1, 4, 1, 0);
        let c = ParallelogramCollection::from_iter([r1, r2]);
        let a = CarlesonSequence::uniform(&c);
        assert!((mass_p(&c, &a, 2.0).unwrap().powi(2) - 1.25).abs() < 1e-15);
        let single = ParallelogramCollection::from_iter([r2]);
        let a1 = CarlesonSequence::uniform(&single);
        let m3 = mass_p(&single, &a1, 3.0).unwrap();
        assert!((m3 - 0.25f64.powf(1.0 / 3.0)).abs() < 1e-2 * m3);
        assert!(mass_p(&c, &a, 0.5).is_err());
        let a2 = a.scaled(2.0);
        assert_eq!(mass_p(&c, &a2, 2.0).unwrap(), 2.0 * mass_p(&c, &a, 2.0).unwrap());
    }

    #[test]
    fn b_value_examples() {
        let r = par(0, 0, 0, 0, 0, 0);
        let a = CarlesonSequence::uniform(&ParallelogramCollection::from_iter([r]));
        assert_eq!(b_value(&r, &[r], &a), 1.0);
        assert_eq!(b_value(&r, &[], &a), 0.0);
        let q = par(0, 0, 1, 0, 1, 0);
        let a = CarlesonSequence::uniform(&ParallelogramCollection::from_iter([q]));
        assert_eq!(b_value(&r, &[q], &a), 0.25);
    }

    #[test]
    fn stratify_boundary_is_left_closed() {
        let r = par(0, 0, 0, 0, 0, 0);
        let c = ParallelogramCollection::from_iter([r]);
        let a = CarlesonSequence::uniform(&c);
        let s = stratify(&c, &a, 2.0).unwrap();
        assert!(s.contains_key(&(Slope::ZERO, 0)));
        let s = stratify(&c, &a.scaled(2.0), 2.0).unwrap();
        assert!(s.contains_key(&(Slope::ZERO, 1)));
    }

    #[test]
    fn disjoint_sets_examples() {
        let r = par(1, 2, 0, 0, 1, 1);
        let c = ParallelogramCollection::from_iter([r]);
        let e = RasterMask::covering(&c, 6).unwrap().shadow(&c);
        let a = from_disjoint_sets(&c, &e);
        assert!((a.get(&r) - 0.5).abs() < 1e-12);
        let empty = RasterMask::covering(&c, 6).unwrap();
        assert_eq!(from_disjoint_sets(&c, &empty).total(), 0.0);
    }

    #[test]
    fn verify_flags_violation() {
        let r = par(0, 0, 0, 0, 0, 0);
        let c = ParallelogramCollection::from_iter([r]);
        let mut a = CarlesonSequence::new();
        a.insert(r, 2.0).unwrap();
        let rep = verify_carleson(&c, &a, &[(Slope::ZERO, c.clone())]).unwrap();
        assert_eq!(rep.worst, 2.0);
        let other = ParallelogramCollection::from_iter([par(0, 0, 0, 5, 0, 0)]);
        let rep = verify_carleson(&c, &a, &[(Slope::ZERO, other)]).unwrap();
        assert_eq!(rep.worst, 0.0);
        let mixed = ParallelogramCollection::from_iter([r]);
        assert!(verify_carleson(&c, &a, &[(Slope::new(1, 1).unwrap(), mixed)]).is_err());
    }

    #[test]
    fn iterate_trivial_cases() {
        let r = par(0, 0, 0, 0, 0, 0);
        let c = ParallelogramCollection::from_iter([r]);
        let a = CarlesonSequence::uniform(&c);
        let cfg = EmbeddingConfig::default();
        let (l1, d) = iterate_decomposition(&c, &[], &a, &cfg).unwrap();
        assert!(l1.is_empty() && d.halved);
        let big = EmbeddingConfig { lambda: 1e6, ..cfg };
        let (l1, d) = iterate_decomposition(&c, &c.to_vec(), &a, &big).unwrap();
        assert!(l1.is_empty() && d.exceeding == 0);
    }

    #[test]
    fn single_direction_disjoint_ratio_is_one() {
        let c = ParallelogramCollection::from_iter([par(0, 0, 0, 0, 0, 0), par(0, 0, 0, 3, 0, 0)]);
        let a = CarlesonSequence::uniform(&c);
        let rep = embedding_experiment(&c, &a, &EmbeddingConfig::default()).unwrap();
        assert!((rep.u2 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn json_roundtrip() {
        let c = ParallelogramCollection::from_iter([par(0, 0, 0, 0, 0, 0), par(-1, 2, 1, 1, 2, 3)]);
        let a = CarlesonSequence::uniform(&c);
        assert_eq!(CarlesonSequence::from_json(&a.to_json()).unwrap(), a);
    }
}
