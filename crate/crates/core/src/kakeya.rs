//! Besicovitch families and lower-bound harnesses.
//!
//! The harnesses evaluate directional Hilbert transforms and averages of
//! rectangle indicators exactly along lines, then sample the resulting
//! fields on a grid anchored at the centre of the family. Only the radial
//! harness uses the FFT.

use crate::error::{Error, Result};
use crate::spectral::{self, beta, Grid, GridFunction, SymbolSpec};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub type Point = (f64, f64);

fn dot(a: Point, b: Point) -> f64 {
    a.0 * b.0 + a.1 * b.1
}

fn sub(a: Point, b: Point) -> Point {
    (a.0 - b.0, a.1 - b.1)
}

fn perp(v: Point) -> Point {
    (-v.1, v.0)
}

/// A closed rectangle `{c + a·v + b·v⊥ : |a| ≤ length/2, |b| ≤ width/2}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientedRect {
    pub center: Point,
    /// Unit vector along the long side.
    pub direction: Point,
    pub length: f64,
    pub width: f64,
}

impl OrientedRect {
    pub fn new(center: Point, angle: f64, length: f64, width: f64) -> Result<Self> {
        if !(length > 0.0 && width > 0.0 && length.is_finite() && width.is_finite()) {
            return Err(Error::invalid("rectangle sides must be positive"));
        }
        Ok(OrientedRect { center, direction: (angle.cos(), angle.sin()), length, width })
    }

    pub fn area(&self) -> f64 {
        self.length * self.width
    }

    /// `((x − c)·v, (x − c)·v⊥)`.
    pub fn local(&self, x: Point) -> Point {
        let d = sub(x, self.center);
        (dot(d, self.direction), dot(d, perp(self.direction)))
    }

    pub fn contains(&self, x: Point) -> bool {
        let (a, b) = self.local(x);
        a.abs() <= 0.5 * self.length && b.abs() <= 0.5 * self.width
    }

    pub fn translated(&self, d: Point) -> Self {
        OrientedRect { center: (self.center.0 + d.0, self.center.1 + d.1), ..*self }
    }

    pub fn vertices(&self) -> [Point; 4] {
        let (v, n) = (self.direction, perp(self.direction));
        let (a, b) = (0.5 * self.length, 0.5 * self.width);
        [(-a, -b), (a, -b), (a, b), (-a, b)].map(|(s, t)| (self.center.0 + s * v.0 + t * n.0, self.center.1 + s * v.1 + t * n.1))
    }

    /// Largest gap between the projections onto the four face normals; positive iff disjoint.
    pub fn separation(&self, other: &OrientedRect) -> f64 {
        let (p, q) = (self.vertices(), other.vertices());
        [self.direction, perp(self.direction), other.direction, perp(other.direction)]
            .into_iter()
            .map(|axis| {
                let span = |vs: &[Point; 4]| {
                    let d = vs.map(|v| dot(v, axis));
                    (d.iter().copied().fold(f64::INFINITY, f64::min), d.iter().copied().fold(f64::NEG_INFINITY, f64::max))
                };
                let ((a0, a1), (b0, b1)) = (span(&p), span(&q));
                (b0 - a1).max(a0 - b1)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `{t : x − t·u ∈ R}` as a closed interval.
    pub fn chord(&self, x: Point, u: Point) -> Option<(f64, f64)> {
        let (a, b) = self.local(x);
        let (ua, ub) = (dot(u, self.direction), dot(u, perp(self.direction)));
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for (p, q, half) in [(a, ua, 0.5 * self.length), (b, ub, 0.5 * self.width)] {
            // |p − t·q| ≤ half
            if q.abs() < 1e-300 {
                if p.abs() > half {
                    return None;
                }
                continue;
            }
            let (t0, t1) = ((p - half) / q, (p + half) / q);
            lo = lo.max(t0.min(t1));
            hi = hi.min(t0.max(t1));
        }
        (lo <= hi).then_some((lo, hi))
    }

    /// `H_u 1_R(x) = (1/π)·p.v.∫ 1_R(x − t·u) dt/t`.
    pub fn hilbert(&self, x: Point, u: Point) -> f64 {
        match self.chord(x, u) {
            None => 0.0,
            Some((lo, hi)) => (hi.abs().ln() - lo.abs().ln()) / PI,
        }
    }

    /// [`hilbert`](Self::hilbert) with chord endpoints kept at distance `≥ eps`
    /// from `x`, so that sample points on an edge stay finite.
    pub fn hilbert_sampled(&self, x: Point, u: Point, eps: f64) -> f64 {
        match self.chord(x, u) {
            None => 0.0,
            Some((lo, hi)) => (hi.abs().max(eps).ln() - lo.abs().max(eps).ln()) / PI,
        }
    }
}

/// `N` rectangles `1 × 1/N` along `v_j = e^{2πij/N}` and their 2-translates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BesicovitchFamily {
    pub n: usize,
    pub rects: Vec<OrientedRect>,
    pub translates: Vec<OrientedRect>,
    pub union_area: f64,
    /// Smallest pairwise separation of the translates; positive iff they are pairwise disjoint.
    pub min_translate_gap: f64,
}

/// Distance of the translates `R̃_j = R_j + τ·v_j`.
pub const TRANSLATE: f64 = 2.0;

pub fn direction(j: usize, n: usize) -> Point {
    let a = 2.0 * PI * j as f64 / n as f64;
    (a.cos(), a.sin())
}

/// Lines `y = a_i·x + b_i` of a bisection bush over sorted slopes: the two
/// halves of each node are sheared apart at pivot `x_k = k/(d+1)·reach`, so
/// leaves splitting at depth `k` cross near `x_k`. Since the slope jumps
/// halve while `reach − x_k` decreases, every pair crosses at `x ≤ reach`.
fn bush_lines(slopes: &[f64], reach: f64) -> Vec<(f64, f64)> {
    let m = slopes.len();
    let d = m.trailing_zeros() as usize;
    (0..m)
        .map(|i| {
            let node = |k: usize| slopes[(i >> (d - k)) << (d - k)];
            let b = -(1..=d).map(|k| (node(k) - node(k - 1)) * k as f64 / (d + 1) as f64 * reach).sum::<f64>();
            (slopes[i], b)
        })
        .collect()
}

/// Perron-tree family. Axes are split into the groups `φ ∈ (−π/4, π/4]` and
/// `φ ∈ (π/4, 3π/4]` (the latter handled in a frame rotated by `π/2`). Each
/// group gets two bushes: directions pointing past the pivots (`+x` in the
/// group frame) use the bush on `x ∈ [s, s + 1]`, the opposite directions use
/// its point reflection. Every 2-translate then lies beyond all crossings.
pub fn perron_family(n: usize) -> Result<BesicovitchFamily> {
    if !(2..=1 << 10).contains(&n) || !n.is_power_of_two() {
        return Err(Error::invalid("direction count must be a power of two in [2, 1024]"));
    }
    let w = 1.0 / n as f64;
    let (reach, shift) = (1.0, 0.25);
    // Axis angles φ ∈ (−π/4, 3π/4], one per antipodal pair.
    let axis = |j: usize| {
        let mut phi = (2.0 * PI * j as f64 / n as f64) % PI;
        if phi > 0.75 * PI + 1e-12 {
            phi -= PI;
        }
        phi
    };
    let group = |phi: f64| usize::from(phi > 0.25 * PI + 1e-12);
    let mut groups: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for j in 0..n {
        let phi = axis(j);
        let g = group(phi);
        let rel = phi - g as f64 * 0.5 * PI;
        if !groups[g].iter().any(|&x: &f64| (x - rel).abs() < 1e-12) {
            groups[g].push(rel);
        }
    }
    // (group, relative angle) -> bush midpoint in the group frame.
    let mut mids: Vec<(usize, f64, Point)> = Vec::new();
    for (g, rels) in groups.iter_mut().enumerate() {
        rels.sort_by(f64::total_cmp);
        let slopes: Vec<f64> = rels.iter().map(|r| r.tan()).collect();
        for ((a, b), rel) in bush_lines(&slopes, reach).into_iter().zip(rels.iter()) {
            let c = 1.0 / (1.0 + a * a).sqrt();
            mids.push((g, *rel, (shift + 0.5 * c, b + a * 0.5 * c)));
        }
    }
    let mut rects = Vec::with_capacity(n);
    for j in 0..n {
        let phi = axis(j);
        let g = group(phi);
        let rel = phi - g as f64 * 0.5 * PI;
        let &(_, _, m) = mids.iter().find(|(h, r, _)| *h == g && (r - rel).abs() < 1e-9).expect("axis placed");
        let v = direction(j, n);
        // Direction in the group frame decides which bush the rectangle joins.
        let forward = if g == 0 { v.0 > 0.0 } else { v.1 > 0.0 };
        let m = if forward { m } else { (-m.0, -m.1) };
        let center = if g == 0 { m } else { (-m.1, m.0) };
        rects.push(OrientedRect { center, direction: v, length: 1.0, width: w });
    }
    // Centre the union of rectangles and translates at the origin.
    let translates: Vec<OrientedRect> = rects.iter().map(|r| r.translated((TRANSLATE * r.direction.0, TRANSLATE * r.direction.1))).collect();
    let (x0, x1, y0, y1) = bbox(rects.iter().chain(&translates));
    let shift = (-0.5 * (x0 + x1), -0.5 * (y0 + y1));
    let rects: Vec<OrientedRect> = rects.iter().map(|r| r.translated(shift)).collect();
    let translates: Vec<OrientedRect> = translates.iter().map(|r| r.translated(shift)).collect();
    let union_area = union_area(&rects, (8 * n).max(4096));
    let min_translate_gap = min_gap(&translates);
    Ok(BesicovitchFamily { n, rects, translates, union_area, min_translate_gap })
}

fn bbox<'a>(rs: impl Iterator<Item = &'a OrientedRect>) -> (f64, f64, f64, f64) {
    let mut b = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for r in rs {
        for (x, y) in r.vertices() {
            b = (b.0.min(x), b.1.max(x), b.2.min(y), b.3.max(y));
        }
    }
    b
}

/// Vertical cross-section `{y : (x, y) ∈ R}`.
fn column_section(r: &OrientedRect, x: f64) -> Option<(f64, f64)> {
    r.chord((x, 0.0), (0.0, -1.0))
}

/// Area of a union of rectangles: exact interval unions on `columns` midpoint columns.
pub fn union_area(rects: &[OrientedRect], columns: usize) -> f64 {
    if rects.is_empty() {
        return 0.0;
    }
    let (x0, x1, _, _) = bbox(rects.iter());
    let h = (x1 - x0) / columns as f64;
    let total: f64 = (0..columns)
        .into_par_iter()
        .map(|i| {
            let x = x0 + (i as f64 + 0.5) * h;
            let mut iv: Vec<(f64, f64)> = rects.iter().filter_map(|r| column_section(r, x)).collect();
            iv.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut len = 0.0;
            let mut cur: Option<(f64, f64)> = None;
            for (a, b) in iv {
                cur = match cur {
                    Some((c0, c1)) if a <= c1 => Some((c0, c1.max(b))),
                    Some((c0, c1)) => {
                        len += c1 - c0;
                        Some((a, b))
                    }
                    None => Some((a, b)),
                };
            }
            if let Some((c0, c1)) = cur {
                len += c1 - c0;
            }
            len
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .sum();
    total * h
}

fn min_gap(rs: &[OrientedRect]) -> f64 {
    let reach: Vec<f64> = rs.iter().map(|r| 0.5 * r.length.hypot(r.width)).collect();
    (0..rs.len())
        .into_par_iter()
        .map(|i| {
            let mut g = f64::INFINITY;
            for j in i + 1..rs.len() {
                let d = sub(rs[i].center, rs[j].center);
                let far = d.0.hypot(d.1) - reach[i] - reach[j];
                g = g.min(if far > 0.0 { far } else { rs[i].separation(&rs[j]) });
            }
            g
        })
        .reduce(|| f64::INFINITY, f64::min)
}

/// Sampling grid for the harnesses: `n × n` cell midpoints of a square of
/// side `length` centred at `center`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sampler {
    pub n: usize,
    pub length: f64,
    pub center: Point,
}

impl Sampler {
    pub fn for_family(fam: &BesicovitchFamily, n: usize, length: f64) -> Result<Self> {
        if n < 8 || !(length > 0.0) {
            return Err(Error::invalid("sampler needs n >= 8 and a positive side"));
        }
        let (x0, x1, y0, y1) = bbox(fam.rects.iter().chain(&fam.translates));
        Ok(Sampler { n, length, center: (0.5 * (x0 + x1), 0.5 * (y0 + y1)) })
    }

    pub fn h(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Regularization distance for the endpoint singularities of `H_u 1_R`.
    pub fn eps(&self) -> f64 {
        0.25 * self.h()
    }

    fn coord(&self, i: usize, c: f64) -> f64 {
        c - 0.5 * self.length + (i as f64 + 0.5) * self.h()
    }

    pub fn point(&self, k: usize) -> Point {
        (self.coord(k % self.n, self.center.0), self.coord(k / self.n, self.center.1))
    }

    /// Index range of cells whose midpoints lie in `[lo, hi]` along one axis.
    fn range(&self, lo: f64, hi: f64, c: f64) -> std::ops::Range<usize> {
        let h = self.h();
        let base = c - 0.5 * self.length;
        let a = ((lo - base) / h - 0.5).ceil().max(0.0) as usize;
        let b = (((hi - base) / h - 0.5).floor() + 1.0).clamp(0.0, self.n as f64) as usize;
        a.min(b)..b
    }

    /// Cells whose midpoints satisfy `|(x − c)·v| ≤ a`, `|(x − c)·v⊥| ≤ b`.
    pub fn cells_in_box(&self, c: Point, v: Point, a: f64, b: f64) -> Vec<usize> {
        let r = OrientedRect { center: c, direction: v, length: 2.0 * a, width: 2.0 * b };
        let (x0, x1, _, _) = bbox(std::iter::once(&r));
        let mut out = Vec::new();
        for i in self.range(x0, x1, self.center.0) {
            let x = self.coord(i, self.center.0);
            if let Some((y0, y1)) = column_section(&r, x) {
                for j in self.range(y0, y1, self.center.1) {
                    out.push(j * self.n + i);
                }
            }
        }
        out
    }

    pub fn cells_in(&self, r: &OrientedRect) -> Vec<usize> {
        self.cells_in_box(r.center, r.direction, 0.5 * r.length, 0.5 * r.width)
    }

    fn norm(&self, field: &[f64], q: f64) -> f64 {
        let h2 = self.h() * self.h();
        (field.iter().map(|v| v.powf(q)).sum::<f64>() * h2).powf(1.0 / q)
    }
}

/// The exponent at which a lower bound for `‖·‖_{p→p}` is measured: `p'` for `p > 2`.
pub fn measured_exponent(p: f64) -> f64 {
    if p > 2.0 {
        p / (p - 1.0)
    } else {
        p
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 4.0 / 3.0 && p <= 4.0) {
        return Err(Error::invalid("p must lie in (4/3, 4]"));
    }
    Ok(())
}

/// Result of one harness evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundReport {
    pub experiment: String,
    pub n: usize,
    pub p: f64,
    /// Lower bound for the operator norm implied by the test data.
    pub ratio: f64,
    /// Slope of `log ratio` against `log log N` over the sweep this row belongs to.
    pub exponent_fit: Option<f64>,
    pub grid_n: usize,
    pub length: f64,
    pub seed: u64,
    /// `min_{R̃_k} |T_k 1_{R_k}|` where a pointwise floor applies.
    pub floor: Option<f64>,
    /// Harness-specific diagnostic (e.g. a cross-term discrepancy).
    pub diagnostic: Option<f64>,
}

impl LowerBoundReport {
    fn new(experiment: &str, n: usize, p: f64, ratio: f64, s: &Sampler) -> Self {
        LowerBoundReport { experiment: experiment.into(), n, p, ratio, exponent_fit: None, grid_n: s.n, length: s.length, seed: 0, floor: None, diagnostic: None }
    }
}

/// `‖(Σ_j 1_{R_j})^{1/2}‖_q`.
fn indicator_norm(fam: &BesicovitchFamily, s: &Sampler, q: f64) -> f64 {
    let mut count = vec![0.0f64; s.n * s.n];
    for r in &fam.rects {
        for k in s.cells_in(r) {
            count[k] += 1.0;
        }
    }
    s.norm(&count.iter().map(|c| c.sqrt()).collect::<Vec<_>>(), q)
}

/// `min` over the sampled points of `R̃_k` of `|value(k, x)|`.
fn floor_on_translates(fam: &BesicovitchFamily, s: &Sampler, value: impl Fn(usize, Point) -> f64 + Sync) -> f64 {
    (0..fam.n)
        .into_par_iter()
        .map(|k| s.cells_in(&fam.translates[k]).into_iter().map(|c| value(k, s.point(c)).abs()).fold(f64::INFINITY, f64::min))
        .reduce(|| f64::INFINITY, f64::min)
}

/// Vector-valued Hilbert transforms on the Besicovitch data:
/// `‖(Σ_j |H_j 1_{R_j}|²)^{1/2}‖_q / ‖(Σ_j 1_{R_j})^{1/2}‖_q` with `q` from [`measured_exponent`].
pub fn meyer_lower_bound(fam: &BesicovitchFamily, p: f64, s: &Sampler) -> Result<LowerBoundReport> {
    check_p(p)?;
    let q = measured_exponent(p);
    let mut sq = vec![0.0f64; s.n * s.n];
    let reach = 2.0 * s.length;
    for r in &fam.rects {
        // H_j 1_{R_j} vanishes off the strip through R_j.
        for k in s.cells_in_box(r.center, r.direction, reach, 0.5 * r.width) {
            let v = r.hilbert_sampled(s.point(k), r.direction, s.eps());
            sq[k] += v * v;
        }
    }
    let num = s.norm(&sq.iter().map(|v| v.sqrt()).collect::<Vec<_>>(), q);
    let den = indicator_norm(fam, s, q);
    let mut rep = LowerBoundReport::new("meyer", fam.n, p, num / den, s);
    rep.floor = Some(floor_on_translates(fam, s, |k, x| fam.rects[k].hilbert_sampled(x, fam.rects[k].direction, s.eps())));
    Ok(rep)
}

/// Cumulative integral `B(x) = ∫_{−1}^{x} β`.
struct BetaCdf {
    table: Vec<f64>,
}

impl BetaCdf {
    const M: usize = 1 << 14;

    fn new() -> Self {
        let h = 2.0 / Self::M as f64;
        let mut table = vec![0.0; Self::M + 1];
        for i in 0..Self::M {
            let a = -1.0 + i as f64 * h;
            // Simpson on each cell.
            table[i + 1] = table[i] + h / 6.0 * (beta(a) + 4.0 * beta(a + 0.5 * h) + beta(a + h));
        }
        BetaCdf { table }
    }

    fn at(&self, x: f64) -> f64 {
        let t = ((x + 1.0) / 2.0 * Self::M as f64).clamp(0.0, Self::M as f64);
        let i = (t.floor() as usize).min(Self::M - 1);
        let f = t - i as f64;
        self.table[i] * (1.0 - f) + self.table[i + 1] * f
    }

    fn total(&self) -> f64 {
        self.table[Self::M]
    }
}

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// Single-scale averages along `v_j`: rough `A_j` over `[−3, 3]·v × [−1/N, 1/N]·v⊥`
/// (normalized), smooth `A°_j` with kernel `β(t/6)·β(N·s/2)` (normalized).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Averaging {
    Rough,
    Smooth,
}

/// Half-length of the rough averaging window along `v`.
pub const RDF_HALF_LENGTH: f64 = 3.0;

fn average_of_rect(r: &OrientedRect, x: Point, kind: Averaging, cdf: &BetaCdf) -> f64 {
    let n_inv = r.width;
    let (a, b) = r.local(x);
    let (ha, hb) = (0.5 * r.length, 0.5 * r.width);
    match kind {
        Averaging::Rough => {
            let t = overlap(a - RDF_HALF_LENGTH, a + RDF_HALF_LENGTH, -ha, ha) / (2.0 * RDF_HALF_LENGTH);
            let s = overlap(b - n_inv, b + n_inv, -hb, hb) / (2.0 * n_inv);
            t * s
        }
        Averaging::Smooth => {
            let sc_t = 2.0 * RDF_HALF_LENGTH;
            let sc_s = 2.0 * n_inv;
            let t = cdf.at((a + ha) / sc_t) - cdf.at((a - ha) / sc_t);
            let s = cdf.at((b + hb) / sc_s) - cdf.at((b - hb) / sc_s);
            t * s / (cdf.total() * cdf.total())
        }
    }
}

/// Vector-valued single-scale averages on the Besicovitch data.
pub fn rdf_lower_bound(fam: &BesicovitchFamily, p: f64, s: &Sampler, kind: Averaging) -> Result<LowerBoundReport> {
    check_p(p)?;
    let q = measured_exponent(p);
    let cdf = BetaCdf::new();
    let (ra, rb) = match kind {
        Averaging::Rough => (RDF_HALF_LENGTH + 0.5, 1.5),
        Averaging::Smooth => (2.0 * RDF_HALF_LENGTH + 0.5, 2.5),
    };
    let mut sq = vec![0.0f64; s.n * s.n];
    for r in &fam.rects {
        for k in s.cells_in_box(r.center, r.direction, ra, rb * r.width) {
            let v = average_of_rect(r, s.point(k), kind, &cdf);
            sq[k] += v * v;
        }
    }
    let num = s.norm(&sq.iter().map(|v| v.sqrt()).collect::<Vec<_>>(), q);
    let den = indicator_norm(fam, s, q);
    let tag = match kind {
        Averaging::Rough => "rdf",
        Averaging::Smooth => "rdf-smooth",
    };
    let mut rep = LowerBoundReport::new(tag, fam.n, p, num / den, s);
    rep.floor = Some(floor_on_translates(fam, s, |k, x| average_of_rect(&fam.rects[k], x, kind, &cdf)));
    Ok(rep)
}

/// `Σ_j (H_{v_j} − H_{v_{j+1}}) 1_{R_j}(x)` with directions rotated by `2π·t/N`.
fn conical_field(fam: &BesicovitchFamily, x: Point, t: f64, eps: f64) -> f64 {
    let n = fam.n;
    let dir = |j: usize| {
        let a = 2.0 * PI * (j as f64 + t) / n as f64;
        (a.cos(), a.sin())
    };
    // rects[j] points along v_j, so direction(j) matches the rectangle's index.
    (0..n).map(|j| fam.rects[j].hilbert_sampled(x, dir(j), eps) - fam.rects[j].hilbert_sampled(x, dir(j + 1), eps)).sum()
}

/// Default `δ` of the smooth conical harness.
pub const CONICAL_DELTA: f64 = 0.125;

/// Conical square function lower bound through `H_j⁺ − H_{j+1}⁺ = σ_j C_j(P₊ − P₋)`:
/// `|∫_{∪R̃_k} Σ_j (H_j − H_{j+1})1_{R_j}| / (‖(Σ_j 1_{R_j})^{1/2}‖_{p'}·|∪R̃_k|^{1/p})`.
///
/// With `smooth = Some(δ)` the directions are averaged over `N|t| < δ` against `α = β`.
/// The diagnostic is the relative `L²(∪R̃_k)` distance between the summed field and `H_k 1_{R_k}`.
pub fn conical_lower_bound(fam: &BesicovitchFamily, p: f64, s: &Sampler, smooth: Option<f64>) -> Result<LowerBoundReport> {
    check_p(p)?;
    if p < 2.0 {
        return Err(Error::invalid("the conical harness needs p >= 2"));
    }
    let nodes: Vec<(f64, f64)> = match smooth {
        None => vec![(0.0, 1.0)],
        Some(delta) => {
            if !(delta > 0.0 && delta < 1.0) {
                return Err(Error::invalid("delta must lie in (0, 1)"));
            }
            let m = 16;
            let w: Vec<(f64, f64)> = (0..=m)
                .map(|i| {
                    let u = -1.0 + 2.0 * i as f64 / m as f64;
                    let simpson = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                    (u * delta / fam.n as f64, simpson * beta(u))
                })
                .collect();
            let total: f64 = w.iter().map(|x| x.1).sum();
            w.into_iter().map(|(t, c)| (t, c / total)).collect()
        }
    };
    let h2 = s.h() * s.h();
    let parts: Vec<(f64, f64, f64)> = (0..fam.n)
        .into_par_iter()
        .map(|k| {
            let (mut sum, mut diff, mut own) = (0.0, 0.0, 0.0);
            for c in s.cells_in(&fam.translates[k]) {
                let x = s.point(c);
                let g: f64 = nodes.iter().map(|&(t, w)| w * conical_field(fam, x, t, s.eps())).sum();
                let hk = fam.rects[k].hilbert_sampled(x, fam.rects[k].direction, s.eps());
                sum += g;
                diff += (g - hk).powi(2);
                own += hk * hk;
            }
            (sum * h2, diff * h2, own * h2)
        })
        .collect();
    let num = parts.iter().map(|x| x.0).sum::<f64>().abs();
    let diff: f64 = parts.iter().map(|x| x.1).sum();
    let own: f64 = parts.iter().map(|x| x.2).sum();
    let reach: f64 = fam.translates.iter().map(OrientedRect::area).sum();
    let den = indicator_norm(fam, s, p / (p - 1.0)) * reach.powf(1.0 / p);
    let tag = if smooth.is_some() { "conical-smooth" } else { "conical" };
    let mut rep = LowerBoundReport::new(tag, fam.n, p, num / den, s);
    rep.diagnostic = Some((diff / own).sqrt());
    Ok(rep)
}

/// `C_j` of the identity: the double cone over `A ∪ (A + π)`, `A = (θ_j − π/2, θ_{j+1} − π/2]`,
/// together with `σ_j = −1` when `A` lies in the lower half-plane.
pub fn conical_cone(j: usize, n: usize) -> (SymbolSpec, f64) {
    let step = 2.0 * PI / n as f64;
    let start = j as f64 * step - 0.5 * PI;
    let cone = SymbolSpec::sum(vec![SymbolSpec::ConeRough { start, end: start + step }, SymbolSpec::ConeRough { start: start + PI, end: start + step + PI }]);
    let mid = (start + 0.5 * step).rem_euclid(2.0 * PI);
    (cone, if mid > PI { -1.0 } else { 1.0 })
}

/// `max_j ‖(H_j⁺ − H_{j+1}⁺)f − σ_j C_j(P₊ − P₋)f‖₂ / ‖f‖₂` for a random `f`
/// whose spectrum vanishes on the singular rays. Requires `4 | N` so that no
/// `A` straddles the horizontal axis.
pub fn conical_identity_residual(n: usize, grid: Grid, rng: &mut impl rand::Rng) -> Result<f64> {
    if n < 4 || n % 4 != 0 {
        return Err(Error::invalid("the identity needs N divisible by 4"));
    }
    let g = grid.n;
    let mut hat = GridFunction::zeros(grid);
    let dirs: Vec<Point> = (0..n).map(|j| direction(j, n)).collect();
    for r in 0..g {
        for c in 0..g {
            let xi = (grid.freq(c), grid.freq(r));
            let m = xi.0.hypot(xi.1);
            let singular = m == 0.0 || xi.1.abs() <= 1e-9 * m || dirs.iter().any(|v| dot(*v, xi).abs() <= 1e-9 * m);
            if !singular {
                hat.data[r * g + c] = Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
            }
        }
    }
    let f = spectral::inverse(&hat);
    let fn2 = f.norm_l2();
    let half = |v: Point| SymbolSpec::AnalyticProj { v: [v.0, v.1] };
    let pm = SymbolSpec::sum(vec![SymbolSpec::HalfPlane { v: [0.0, 1.0] }, SymbolSpec::product(vec![SymbolSpec::Constant { value: -1.0 }, SymbolSpec::HalfPlane { v: [0.0, -1.0] }])]);
    let worst = (0..n)
        .map(|j| -> Result<f64> {
            let lhs = SymbolSpec::sum(vec![half(dirs[j]), SymbolSpec::product(vec![SymbolSpec::Constant { value: -1.0 }, half(dirs[(j + 1) % n])])]);
            let (cone, sigma) = conical_cone(j, n);
            let rhs = SymbolSpec::product(vec![SymbolSpec::Constant { value: sigma }, cone, pm.clone()]);
            let d = spectral::apply_hat(&lhs, &hat)?.sub(&spectral::apply_hat(&rhs, &hat)?)?;
            Ok(d.norm_l2() / fn2)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(worst.into_iter().fold(0.0, f64::max))
}

/// Córdoba-type radial multiplier test: `P_δ` with symbol `β((ρ − |ξ|)/w)`, `ρ = w/δ`,
/// `δ = 1/N²`, applied to `f_j = e^{iρ v_j·x} 1_{R_j}`. The grid must resolve `ρ`.
pub fn radial_lower_bound(fam: &BesicovitchFamily, p: f64, grid: Grid, band: f64) -> Result<LowerBoundReport> {
    check_p(p)?;
    let q = measured_exponent(p);
    let n = fam.n;
    let delta = 1.0 / (n * n) as f64;
    let rho = band / delta;
    let nyquist = PI * grid.n as f64 / grid.length;
    if rho + band + 4.0 * PI * n as f64 > nyquist {
        return Err(Error::invalid(format!("grid Nyquist {nyquist:.1} does not resolve radius {rho:.1}")));
    }
    let s = Sampler { n: grid.n, length: grid.length, center: Sampler::for_family(fam, grid.n, grid.length)?.center };
    let sym = SymbolSpec::RadialBump { center: rho, halfwidth: band };
    // Sample points on the periodic grid, relative to the family centre.
    let at = |k: usize| {
        let (i, r) = (k % grid.n, k / grid.n);
        (s.center.0 + grid.coord(i), s.center.1 + grid.coord(r))
    };
    let mut sq = vec![0.0f64; grid.n * grid.n];
    let mut ind = vec![0.0f64; grid.n * grid.n];
    for r in &fam.rects {
        let mut f = GridFunction::zeros(grid);
        for k in 0..grid.n * grid.n {
            let x = at(k);
            if r.contains(x) {
                f.data[k] = Complex64::from_polar(1.0, rho * dot(r.direction, sub(x, s.center)));
                ind[k] += 1.0;
            }
        }
        let pf = spectral::apply(&sym, &f)?;
        for (a, z) in sq.iter_mut().zip(&pf.data) {
            *a += z.norm_sqr();
        }
    }
    let h2 = grid.cell_area();
    let norm = |v: &[f64]| (v.iter().map(|x| x.sqrt().powf(q)).sum::<f64>() * h2).powf(1.0 / q);
    let mut rep = LowerBoundReport::new("radial", n, p, norm(&sq) / norm(&ind), &s);
    rep.diagnostic = Some(delta);
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chord_and_hilbert_on_axis() {
        let r = OrientedRect::new((0.0, 0.0), 0.0, 1.0, 0.1).unwrap();
        let x = (2.0, 0.0);
        assert_eq!(r.chord(x, (1.0, 0.0)), Some((1.5, 2.5)));
        assert!((r.hilbert(x, (1.0, 0.0)) - (5.0f64 / 3.0).ln() / PI).abs() < 1e-15);
        assert_eq!(r.hilbert((2.0, 0.2), (1.0, 0.0)), 0.0);
        // Principal value inside the rectangle.
        assert!((r.hilbert((0.25, 0.0), (1.0, 0.0)) - (0.75f64 / 0.25).ln() / PI).abs() < 1e-15);
    }

    #[test]
    fn separating_axis() {
        let a = OrientedRect::new((0.0, 0.0), 0.3, 1.0, 0.1).unwrap();
        assert!(a.separation(&a.translated((0.0, 0.2))) > 0.0);
        assert!(a.separation(&a.translated((0.3, 0.0))) < 0.0);
        let b = OrientedRect::new((0.0, 0.0), 0.3 + PI / 2.0, 1.0, 0.1).unwrap();
        assert!(a.separation(&b) < 0.0);
    }

    #[test]
    fn union_area_of_cross() {
        let a = OrientedRect::new((0.0, 0.0), 0.0, 1.0, 0.25).unwrap();
        let b = OrientedRect::new((0.0, 0.0), PI / 2.0, 1.0, 0.25).unwrap();
        let u = union_area(&[a, b], 4096);
        assert!((u - (0.5 - 0.0625)).abs() < 1e-3, "{u}");
    }

    #[test]
    fn family_basics() {
        assert!(perron_family(3).is_err());
        assert!(perron_family(2048).is_err());
        let f2 = perron_family(2).unwrap();
        assert!(f2.union_area <= 1.0 + 1e-12);
        for n in [4, 16, 64] {
            let f = perron_family(n).unwrap();
            assert_eq!(f.rects.len(), n);
            assert!(f.min_translate_gap > 0.0, "N={n}: {}", f.min_translate_gap);
            for (j, r) in f.rects.iter().enumerate() {
                let v = direction(j, n);
                assert!((r.direction.0 - v.0).abs() < 1e-12 && (r.direction.1 - v.1).abs() < 1e-12);
                assert!((r.area() - 1.0 / n as f64).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn indicator_norm_at_two_is_one() {
        let f = perron_family(16).unwrap();
        let s = Sampler::for_family(&f, 1024, 8.0).unwrap();
        let v = indicator_norm(&f, &s, 2.0);
        assert!((v - 1.0).abs() < 2e-2, "{v}");
    }

    #[test]
    fn average_floors() {
        let f = perron_family(8).unwrap();
        let s = Sampler::for_family(&f, 512, 8.0).unwrap();
        let rep = rdf_lower_bound(&f, 4.0, &s, Averaging::Rough).unwrap();
        assert!(rep.floor.unwrap() >= 1.0 / 12.0 - 1e-12);
        // On R̃ the smooth kernel is flat along v and the edge sees half the transverse bump.
        let m = 200_000;
        let b: f64 = (0..m).map(|i| beta(-1.0 + (i as f64 + 0.5) * 2.0 / m as f64)).sum::<f64>() * 2.0 / m as f64;
        let sm = rdf_lower_bound(&f, 4.0, &s, Averaging::Smooth).unwrap();
        assert!((sm.floor.unwrap() - 1.0 / (12.0 * b * b)).abs() < 1e-6, "{:?} {b}", sm.floor);
    }

    #[test]
    fn harnesses_are_translation_invariant() {
        let f = perron_family(16).unwrap();
        let d = (0.375, -1.25);
        let g = BesicovitchFamily {
            rects: f.rects.iter().map(|r| r.translated(d)).collect(),
            translates: f.translates.iter().map(|r| r.translated(d)).collect(),
            ..f.clone()
        };
        let (sf, sg) = (Sampler::for_family(&f, 512, 8.0).unwrap(), Sampler::for_family(&g, 512, 8.0).unwrap());
        let pairs = [
            (meyer_lower_bound(&f, 4.0, &sf).unwrap().ratio, meyer_lower_bound(&g, 4.0, &sg).unwrap().ratio),
            (rdf_lower_bound(&f, 3.0, &sf, Averaging::Smooth).unwrap().ratio, rdf_lower_bound(&g, 3.0, &sg, Averaging::Smooth).unwrap().ratio),
            (conical_lower_bound(&f, 4.0, &sf, None).unwrap().ratio, conical_lower_bound(&g, 4.0, &sg, None).unwrap().ratio),
        ];
        for (a, b) in pairs {
            assert!((a - b).abs() <= 1e-9 * a.abs(), "{a} {b}");
        }
        let f4 = perron_family(4).unwrap();
        let g4 = BesicovitchFamily {
            rects: f4.rects.iter().map(|r| r.translated(d)).collect(),
            translates: f4.translates.iter().map(|r| r.translated(d)).collect(),
            ..f4.clone()
        };
        let grid = Grid::new(256, 8.0).unwrap();
        let (a, b) = (radial_lower_bound(&f4, 4.0, grid, 0.5).unwrap().ratio, radial_lower_bound(&g4, 4.0, grid, 0.5).unwrap().ratio);
        assert!((a - b).abs() <= 1e-9 * a, "{a} {b}");
    }

    #[test]
    fn cross_terms_nearly_cancel_on_translates() {
        let f = perron_family(32).unwrap();
        let s = Sampler::for_family(&f, 1024, 8.0).unwrap();
        let rep = conical_lower_bound(&f, 4.0, &s, None).unwrap();
        assert!(rep.ratio > 0.0 && rep.diagnostic.unwrap() < 0.3, "{rep:?}");
    }

    #[test]
    fn radial_projection_fixes_its_core() {
        let grid = Grid::new(128, 8.0).unwrap();
        let sym = SymbolSpec::RadialBump { center: 20.0, halfwidth: 2.0 };
        let mut hat = GridFunction::zeros(grid);
        for r in 0..grid.n {
            for c in 0..grid.n {
                if (grid.freq(c).hypot(grid.freq(r)) - 20.0).abs() < 0.9 {
                    hat.data[r * grid.n + c] = Complex64::new((r * 7 + c) as f64 % 3.0, 1.0);
                }
            }
        }
        let f = spectral::inverse(&hat);
        let d = spectral::apply(&sym, &f).unwrap().sub(&f).unwrap();
        assert!(d.norm_l2() <= 1e-12 * f.norm_l2());
        let fam = perron_family(4).unwrap();
        assert!(radial_lower_bound(&fam, 4.0, Grid::new(256, 8.0).unwrap(), 0.5).unwrap().ratio > 0.0);
        assert!(radial_lower_bound(&perron_family(64).unwrap(), 4.0, grid, 0.5).is_err());
    }

    #[test]
    fn identity_sign() {
        let (_, s0) = conical_cone(0, 8);
        let (_, s4) = conical_cone(4, 8);
        assert_eq!((s0, s4), (-1.0, 1.0));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        use rand::SeedableRng;
        let r = conical_identity_residual(8, Grid::new(64, 8.0).unwrap(), &mut rng).unwrap();
        assert!(r < 1e-12, "{r}");
        assert!(conical_identity_residual(6, Grid::new(64, 8.0).unwrap(), &mut rng).is_err());
    }

    #[test]
    fn p_range() {
        let f = perron_family(4).unwrap();
        let s = Sampler::for_family(&f, 64, 8.0).unwrap();
        assert!(meyer_lower_bound(&f, 1.2, &s).is_err());
        assert!(meyer_lower_bound(&f, 4.5, &s).is_err());
        assert!(conical_lower_bound(&f, 1.5, &s, None).is_err());
    }
}
