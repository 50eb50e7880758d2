//! Sheared dyadic grids.
//!
//! A [`Parallelogram`] is `A_s(I×J) = {(x, s·x + y) : x ∈ I, y ∈ J}` with
//! `I`, `J` dyadic and `s = p·2^{-q}`. Every predicate and area here is
//! evaluated in exact rational arithmetic; only the Journé dilation heights
//! go through a raster, because they are defined by a maximal-function level
//! set.

use crate::error::{Error, Result};
use crate::exact::Rational;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::BTreeMap;
use std::fmt;

/// `[m·2^{-k}, (m+1)·2^{-k})`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicInterval {
    pub scale: i32,
    pub position: i64,
}

impl DyadicInterval {
    pub fn new(scale: i32, position: i64) -> Self {
        DyadicInterval { scale, position }
    }

    pub fn lo(&self) -> Rational {
        Rational::dyadic(self.position as i128, self.scale)
    }

    pub fn hi(&self) -> Rational {
        Rational::dyadic(self.position as i128 + 1, self.scale)
    }

    pub fn len(&self) -> Rational {
        Rational::dyadic(1, self.scale)
    }

    pub fn len_f64(&self) -> f64 {
        (-(self.scale as f64)).exp2()
    }

    pub fn lo_f64(&self) -> f64 {
        self.position as f64 * self.len_f64()
    }

    pub fn hi_f64(&self) -> f64 {
        (self.position + 1) as f64 * self.len_f64()
    }

    /// `self ⊆ other`.
    pub fn is_within(&self, other: &DyadicInterval) -> bool {
        if self.scale < other.scale {
            return false;
        }
        (self.position >> (self.scale - other.scale)) == other.position
    }

    pub fn parent(&self) -> DyadicInterval {
        DyadicInterval { scale: self.scale - 1, position: self.position >> 1 }
    }
}

/// A dyadic rational slope `p·2^{-q}` in `[-1, 1]`, kept in lowest terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Slope {
    p: i64,
    q: u32,
}

impl Ord for Slope {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let a = (self.p as i128) << other.q;
        let b = (other.p as i128) << self.q;
        a.cmp(&b)
    }
}

impl PartialOrd for Slope {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Slope {
    pub const ZERO: Slope = Slope { p: 0, q: 0 };

    pub fn new(p: i64, q: u32) -> Result<Self> {
        if q > 60 {
            return Err(Error::invalid("slope denominator exponent too large"));
        }
        if p.unsigned_abs() > 1u64 << q {
            return Err(Error::invalid(format!("slope {p}/2^{q} outside [-1, 1]")));
        }
        let (mut p, mut q) = (p, q);
        while q > 0 && p % 2 == 0 {
            p /= 2;
            q -= 1;
        }
        if p == 0 {
            q = 0;
        }
        Ok(Slope { p, q })
    }

    pub fn numerator(&self) -> i64 {
        self.p
    }

    pub fn log_denominator(&self) -> u32 {
        self.q
    }

    pub fn value(&self) -> Rational {
        Rational::dyadic(self.p as i128, self.q as i32)
    }

    pub fn to_f64(&self) -> f64 {
        self.p as f64 * (-(self.q as f64)).exp2()
    }

    /// The dyadic slope with denominator `2^q` nearest to `x` (ties toward zero), clamped to `[-1, 1]`.
    pub fn nearest(x: f64, q: u32) -> Slope {
        let scale = (1u64 << q) as f64;
        let p = (x.clamp(-1.0, 1.0) * scale).round() as i64;
        Slope::new(p, q).expect("clamped slope is valid")
    }
}

impl fmt::Display for Slope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/2^{}", self.p, self.q)
    }
}

impl std::str::FromStr for Slope {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("malformed slope {s:?}, expected p/2^q"));
        let (p, q) = s.split_once("/2^").ok_or_else(bad)?;
        Slope::new(p.trim().parse().map_err(|_| bad())?, q.trim().parse().map_err(|_| bad())?)
    }
}

impl Serialize for Slope {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Slope {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `A_s(x, y) = (x, s·x + y)`.
pub fn shear(s: Slope, point: (f64, f64)) -> (f64, f64) {
    (point.0, s.to_f64() * point.0 + point.1)
}

/// `A_s(I×J)` with `|I| ≥ |J|`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Parallelogram {
    pub slope: Slope,
    pub base: DyadicInterval,
    pub vert: DyadicInterval,
}

impl Parallelogram {
    pub fn new(slope: Slope, base: DyadicInterval, vert: DyadicInterval) -> Result<Self> {
        if base.scale > vert.scale {
            return Err(Error::invalid("parallelogram needs |I| >= |J|"));
        }
        Ok(Parallelogram { slope, base, vert })
    }

    pub fn area(&self) -> Rational {
        Rational::dyadic(1, self.base.scale + self.vert.scale)
    }

    pub fn area_f64(&self) -> f64 {
        self.base.len_f64() * self.vert.len_f64()
    }

    /// `(π₁, π₂)` as half-open rational intervals.
    pub fn projections(&self) -> ((Rational, Rational), (Rational, Rational)) {
        let s = self.slope.value();
        let (a, b) = (self.base.lo(), self.base.hi());
        let (lo, hi) = if s >= Rational::ZERO { (s * a, s * b) } else { (s * b, s * a) };
        ((a, b), (lo + self.vert.lo(), hi + self.vert.hi()))
    }

    pub fn to_box(&self) -> ShearBox {
        ShearBox {
            slope: self.slope.value(),
            x0: self.base.lo(),
            x1: self.base.hi(),
            y0: self.vert.lo(),
            y1: self.vert.hi(),
        }
    }

    pub fn contains(&self, x: Rational, y: Rational) -> bool {
        self.to_box().contains(x, y)
    }

    pub fn contains_f64(&self, x: f64, y: f64) -> bool {
        self.contains(Rational::from_f64(x), Rational::from_f64(y))
    }

    pub fn center(&self) -> (f64, f64) {
        let cx = 0.5 * (self.base.lo_f64() + self.base.hi_f64());
        let cy = 0.5 * (self.vert.lo_f64() + self.vert.hi_f64());
        shear(self.slope, (cx, cy))
    }

    /// The four corners, counter-clockwise from `(inf I, s·inf I + inf J)`.
    pub fn vertices(&self) -> [(Rational, Rational); 4] {
        self.to_box().vertices()
    }

    /// Eccentricity `|I|/|J|` as a power of two.
    pub fn log_eccentricity(&self) -> i32 {
        self.vert.scale - self.base.scale
    }
}

/// A sheared box `{(x, s·x + y) : x ∈ [x0, x1), y ∈ [y0, y1)}` with arbitrary
/// rational data. Dyadic parallelograms are the special case with dyadic
/// endpoints; the iterative decomposition needs tripled, non-dyadic boxes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShearBox {
    pub slope: Rational,
    pub x0: Rational,
    pub x1: Rational,
    pub y0: Rational,
    pub y1: Rational,
}

impl ShearBox {
    pub fn area(&self) -> Rational {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn contains(&self, x: Rational, y: Rational) -> bool {
        if x < self.x0 || x >= self.x1 {
            return false;
        }
        let t = y - self.slope * x;
        t >= self.y0 && t < self.y1
    }

    /// Closed-set containment of a point.
    pub fn contains_closed(&self, x: Rational, y: Rational) -> bool {
        if x < self.x0 || x > self.x1 {
            return false;
        }
        let t = y - self.slope * x;
        t >= self.y0 && t <= self.y1
    }

    pub fn vertices(&self) -> [(Rational, Rational); 4] {
        let s = self.slope;
        [
            (self.x0, s * self.x0 + self.y0),
            (self.x1, s * self.x1 + self.y0),
            (self.x1, s * self.x1 + self.y1),
            (self.x0, s * self.x0 + self.y1),
        ]
    }

    /// Closure containment `self ⊆ other`.
    pub fn is_within(&self, other: &ShearBox) -> bool {
        self.vertices().iter().all(|&(x, y)| other.contains_closed(x, y))
    }

    fn lower(&self) -> Line {
        Line { slope: self.slope, offset: self.y0 }
    }

    fn upper(&self) -> Line {
        Line { slope: self.slope, offset: self.y1 }
    }
}

#[derive(Clone, Copy, Debug)]
struct Line {
    slope: Rational,
    offset: Rational,
}

impl Line {
    fn at(&self, x: Rational) -> Rational {
        self.slope * x + self.offset
    }

    fn crossing(&self, o: &Line) -> Option<Rational> {
        if self.slope == o.slope {
            None
        } else {
            Some((o.offset - self.offset) / (self.slope - o.slope))
        }
    }
}

/// Exact `|A ∩ B|` for two sheared boxes.
///
/// Over the common x-range the cross-section length
/// `max(0, min(upper) − max(lower))` is piecewise linear with breakpoints
/// only where two boundary lines cross, so the trapezoid rule between
/// consecutive breakpoints is exact.
pub fn box_intersection_area(a: &ShearBox, b: &ShearBox) -> Rational {
    let lo = a.x0.max(b.x0);
    let hi = a.x1.min(b.x1);
    if lo >= hi {
        return Rational::ZERO;
    }
    let lines = [a.lower(), a.upper(), b.lower(), b.upper()];
    let mut xs = vec![lo, hi];
    for (i, j) in [(0, 2), (1, 3), (0, 3), (1, 2)] {
        if let Some(x) = lines[i].crossing(&lines[j]) {
            if x > lo && x < hi {
                xs.push(x);
            }
        }
    }
    xs.sort();
    xs.dedup();
    let len = |x: Rational| {
        let top = lines[1].at(x).min(lines[3].at(x));
        let bot = lines[0].at(x).max(lines[2].at(x));
        (top - bot).max(Rational::ZERO)
    };
    let mut area = Rational::ZERO;
    let mut prev = (xs[0], len(xs[0]));
    for &x in &xs[1..] {
        let l = len(x);
        area = area + (prev.1 + l) * (x - prev.0) * Rational::new(1, 2);
        prev = (x, l);
    }
    area
}

/// Exact intersection area of two parallelograms.
pub fn intersect_area(p: &Parallelogram, q: &Parallelogram) -> f64 {
    intersect_area_exact(p, q).to_f64()
}

pub fn intersect_area_exact(p: &Parallelogram, q: &Parallelogram) -> Rational {
    box_intersection_area(&p.to_box(), &q.to_box())
}

/// The partial order `Q ≤ R`: `Q ∩ R ≠ ∅` and `π₁(Q) ⊆ π₁(R)`.
///
/// For these half-open sets a nonempty intersection always has positive
/// area, so the exact area decides emptiness.
pub fn leq(q: &Parallelogram, r: &Parallelogram) -> bool {
    q.base.is_within(&r.base) && intersect_area_exact(q, r) > Rational::ZERO
}

/// Exact convex polygon with rational vertices in counter-clockwise order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvexPolygon {
    pub vertices: Vec<(Rational, Rational)>,
}

impl ConvexPolygon {
    pub fn from_box(b: &ShearBox) -> Self {
        ConvexPolygon { vertices: b.vertices().to_vec() }
    }

    pub fn area(&self) -> Rational {
        let n = self.vertices.len();
        if n < 3 {
            return Rational::ZERO;
        }
        let mut twice = Rational::ZERO;
        for i in 0..n {
            let (x0, y0) = self.vertices[i];
            let (x1, y1) = self.vertices[(i + 1) % n];
            twice = twice + (x0 * y1 - x1 * y0);
        }
        (twice * Rational::new(1, 2)).abs()
    }

    /// Sutherland–Hodgman against another convex polygon (counter-clockwise).
    pub fn clip(&self, other: &ConvexPolygon) -> ConvexPolygon {
        let mut out = self.vertices.clone();
        let m = other.vertices.len();
        for i in 0..m {
            if out.is_empty() {
                break;
            }
            let a = other.vertices[i];
            let b = other.vertices[(i + 1) % m];
            let side = |p: (Rational, Rational)| (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            let input = std::mem::take(&mut out);
            for k in 0..input.len() {
                let cur = input[k];
                let nxt = input[(k + 1) % input.len()];
                let (dc, dn) = (side(cur), side(nxt));
                if dc >= Rational::ZERO {
                    out.push(cur);
                }
                if (dc > Rational::ZERO && dn < Rational::ZERO) || (dc < Rational::ZERO && dn > Rational::ZERO) {
                    let t = dc / (dc - dn);
                    out.push((cur.0 + t * (nxt.0 - cur.0), cur.1 + t * (nxt.1 - cur.1)));
                }
            }
        }
        out.dedup();
        if out.len() > 1 && out.first() == out.last() {
            out.pop();
        }
        ConvexPolygon { vertices: out }
    }
}

/// Parallelograms grouped by slope.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallelogramCollection {
    pub groups: BTreeMap<Slope, Vec<Parallelogram>>,
}

impl ParallelogramCollection {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_iter<I: IntoIterator<Item = Parallelogram>>(items: I) -> Self {
        let mut c = Self::new();
        for p in items {
            c.push(p);
        }
        c
    }

    pub fn push(&mut self, p: Parallelogram) {
        self.groups.entry(p.slope).or_default().push(p);
    }

    pub fn len(&self) -> usize {
        self.groups.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parallelogram> + '_ {
        self.groups.values().flatten()
    }

    pub fn to_vec(&self) -> Vec<Parallelogram> {
        self.iter().copied().collect()
    }

    /// Sorts each slope group and drops repeated members. Sequences are keyed
    /// by parallelogram, so the Carleson routines expect distinct members.
    pub fn dedup(&mut self) {
        for v in self.groups.values_mut() {
            v.sort();
            v.dedup();
        }
    }

    pub fn slopes(&self) -> Vec<Slope> {
        self.groups.keys().copied().collect()
    }

    pub fn single_slope(&self) -> Option<Slope> {
        let mut keys = self.groups.iter().filter(|(_, v)| !v.is_empty()).map(|(k, _)| *k);
        let first = keys.next()?;
        if keys.next().is_some() {
            None
        } else {
            Some(first)
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.groups.iter().all(|(s, v)| v.iter().all(|p| p.slope == *s))
    }

    /// Axis-parallel bounding box `(x0, x1, y0, y1)` in floating point.
    pub fn bbox(&self) -> Option<(f64, f64, f64, f64)> {
        let mut it = self.iter().peekable();
        it.peek()?;
        let mut bb = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in it {
            let ((a, b), (c, d)) = p.projections();
            bb.0 = bb.0.min(a.to_f64());
            bb.1 = bb.1.max(b.to_f64());
            bb.2 = bb.2.min(c.to_f64());
            bb.3 = bb.3.max(d.to_f64());
        }
        Some(bb)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("collection serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s).map_err(|e| Error::invalid(e.to_string()))?;
        if !c.is_consistent() {
            return Err(Error::invalid("slope key does not match member slope"));
        }
        for p in c.iter() {
            Parallelogram::new(p.slope, p.base, p.vert)?;
        }
        Ok(c)
    }
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Default, Debug)]
pub(crate) struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Length of the union of half-open intervals.
fn union_length(iv: &mut [(Rational, Rational)]) -> Rational {
    iv.sort();
    let mut total = Rational::ZERO;
    let mut cur: Option<(Rational, Rational)> = None;
    for &(a, b) in iv.iter() {
        if a >= b {
            continue;
        }
        match cur {
            Some((c0, c1)) if a <= c1 => cur = Some((c0, c1.max(b))),
            Some((c0, c1)) => {
                total = total + (c1 - c0);
                cur = Some((a, b));
            }
            None => cur = Some((a, b)),
        }
    }
    if let Some((c0, c1)) = cur {
        total = total + (c1 - c0);
    }
    total
}

/// `|∪ boxes|` by an exact x-sweep.
///
/// Between consecutive x-endpoints the active cross-sections have endpoints
/// linear in x. Their union length is linear between crossings of those
/// lines, so evaluating it at every crossing and applying the trapezoid rule
/// is exact. Each trapezoid is exact; the pieces are summed in compensated
/// floating point because their denominators are unrelated.
pub fn union_area(boxes: &[ShearBox]) -> f64 {
    if boxes.is_empty() {
        return 0.0;
    }
    let mut events: Vec<Rational> = boxes.iter().flat_map(|b| [b.x0, b.x1]).collect();
    events.sort();
    events.dedup();
    let slabs: Vec<(Rational, Rational)> = events.windows(2).map(|w| (w[0], w[1])).collect();
    let pieces: Vec<f64> = slabs
        .par_iter()
        .map(|&(xa, xb)| {
            let active: Vec<&ShearBox> = boxes.iter().filter(|b| b.x0 <= xa && b.x1 >= xb).collect();
            if active.is_empty() {
                return 0.0;
            }
            let mut lines: Vec<Line> = active.iter().flat_map(|b| [b.lower(), b.upper()]).collect();
            lines.sort_by(|a, b| a.slope.cmp(&b.slope).then(a.offset.cmp(&b.offset)));
            lines.dedup_by(|a, b| a.slope == b.slope && a.offset == b.offset);
            let mut xs = vec![xa, xb];
            for i in 0..lines.len() {
                for j in i + 1..lines.len() {
                    if let Some(x) = lines[i].crossing(&lines[j]) {
                        if x > xa && x < xb {
                            xs.push(x);
                        }
                    }
                }
            }
            xs.sort();
            xs.dedup();
            let mut buf = Vec::with_capacity(active.len());
            let mut len_at = |x: Rational| {
                buf.clear();
                buf.extend(active.iter().map(|b| (b.slope * x + b.y0, b.slope * x + b.y1)));
                union_length(&mut buf)
            };
            let mut acc = KahanSum::default();
            let mut prev = (xs[0], len_at(xs[0]));
            for &x in &xs[1..] {
                let l = len_at(x);
                acc.add(((prev.1 + l) * (x - prev.0) * Rational::new(1, 2)).to_f64());
                prev = (x, l);
            }
            acc.value()
        })
        .collect();
    let mut total = KahanSum::default();
    for p in pieces {
        total.add(p);
    }
    total.value()
}

/// Exact shadow `|∪C|`.
pub fn shadow_area(c: &ParallelogramCollection) -> f64 {
    let boxes: Vec<ShearBox> = c.iter().map(Parallelogram::to_box).collect();
    union_area(&boxes)
}

/// Rasterization oracle for `|∪C|`: `res` sample columns and rows over the
/// bounding box, counting cell midpoints covered by the union.
pub fn raster_shadow_area(c: &ParallelogramCollection, res: usize) -> f64 {
    let Some((x0, x1, y0, y1)) = c.bbox() else { return 0.0 };
    let items: Vec<(f64, f64, f64, f64, f64)> = c
        .iter()
        .map(|p| (p.base.lo_f64(), p.base.hi_f64(), p.slope.to_f64(), p.vert.lo_f64(), p.vert.hi_f64()))
        .collect();
    let hx = (x1 - x0) / res as f64;
    let hy = (y1 - y0) / res as f64;
    let count: u64 = (0..res)
        .into_par_iter()
        .map(|i| {
            let x = x0 + (i as f64 + 0.5) * hx;
            let mut iv: Vec<(i64, i64)> = items
                .iter()
                .filter(|t| x >= t.0 && x < t.1)
                .map(|t| {
                    // rows j with y_j = y0 + (j + 1/2) hy in [a, b)
                    let a = t.2 * x + t.3;
                    let b = t.2 * x + t.4;
                    (((a - y0) / hy - 0.5).ceil() as i64, ((b - y0) / hy - 0.5).ceil() as i64)
                })
                .collect();
            iv.sort();
            let mut n = 0i64;
            let mut end = i64::MIN;
            for (a, b) in iv {
                let a = a.max(end);
                if b > a {
                    n += b - a;
                    end = b;
                }
            }
            n as u64
        })
        .sum();
    count as f64 * hx * hy
}

/// Raster and maximal-function settings for [`journe_heights_with`].
#[derive(Clone, Copy, Debug)]
pub struct JourneConfig {
    pub threshold: f64,
    /// Raster cells across the shortest vertical side in `T`.
    pub cells_per_side: u32,
    /// Rectangle side lengths follow a geometric ladder with this many steps per octave.
    pub steps_per_octave: u32,
}

impl Default for JourneConfig {
    fn default() -> Self {
        JourneConfig { threshold: 1.0 / 64.0, cells_per_side: 2, steps_per_octave: 4 }
    }
}

/// Dilation heights `u_R` with the default raster.
pub fn journe_heights(t: &ParallelogramCollection, threshold: f64) -> Result<BTreeMap<Parallelogram, u32>> {
    journe_heights_with(t, JourneConfig { threshold, ..JourneConfig::default() })
}

/// For each `R ∈ T`, the least `u ≥ 0` with `2^u R ⊄ sh*(T)`, where
/// `sh*(T) = {M 1_{sh(T)} > threshold}` and `M` is the maximal operator over
/// parallelograms along the common slope with long side horizontal.
///
/// Everything is computed after undoing the shear, where `T` becomes a family
/// of axis-parallel rectangles and the maximal operator becomes the strong
/// maximal operator restricted to rectangles at least as wide as tall.
pub fn journe_heights_with(t: &ParallelogramCollection, cfg: JourneConfig) -> Result<BTreeMap<Parallelogram, u32>> {
    if t.is_empty() {
        return Ok(BTreeMap::new());
    }
    if t.single_slope().is_none() {
        return Err(Error::invalid("journe requires fixed slope"));
    }
    if !(cfg.threshold > 0.0 && cfg.threshold < 1.0) {
        return Err(Error::invalid("threshold must lie in (0, 1)"));
    }
    let rects: Vec<Parallelogram> = t.to_vec();
    let min_side = rects.iter().map(|r| r.vert.scale).max().unwrap();
    let cell_log = min_side + (cfg.cells_per_side.max(1) as f64).log2().ceil() as i32;
    let h = (-(cell_log as f64)).exp2();
    let (mut bx0, mut bx1, mut by0, mut by1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for r in &rects {
        bx0 = bx0.min(r.base.lo_f64());
        bx1 = bx1.max(r.base.hi_f64());
        by0 = by0.min(r.vert.lo_f64());
        by1 = by1.max(r.vert.hi_f64());
    }
    let (wx, wy) = (bx1 - bx0, by1 - by0);
    // Outside this window every admissible average of 1_sh is at most the threshold.
    let mx = (wx / cfg.threshold).ceil();
    let my = ((wx * wy / cfg.threshold).sqrt()).ceil();
    let ox = ((bx0 - mx) / h).floor() * h;
    let oy = ((by0 - my) / h).floor() * h;
    let nx = (((bx1 + mx) - ox) / h).ceil() as usize + 1;
    let ny = (((by1 + my) - oy) / h).ceil() as usize + 1;

    // Indicator of the unsheared shadow; rectangle edges fall on cell edges.
    let mut ind = vec![0u8; nx * ny];
    for r in &rects {
        let i0 = ((r.base.lo_f64() - ox) / h).round() as usize;
        let i1 = ((r.base.hi_f64() - ox) / h).round() as usize;
        let j0 = ((r.vert.lo_f64() - oy) / h).round() as usize;
        let j1 = ((r.vert.hi_f64() - oy) / h).round() as usize;
        for j in j0..j1 {
            ind[j * nx + i0..j * nx + i1].fill(1);
        }
    }
    let sat = SummedArea::new(&ind, nx, ny);
    let shadow_cells = sat.sum(0, 0, nx, ny) as f64;

    let ladder = size_ladder(nx.max(ny), cfg.steps_per_octave);
    let mut pairs = Vec::new();
    for &a in &ladder {
        for &b in &ladder {
            if b <= a && a <= nx && b <= ny && ((a * b) as f64) * cfg.threshold < shadow_cells {
                pairs.push((a, b));
            }
        }
    }
    // Only boxes meeting the bounding box of the shadow can have a positive
    // average, so each size pair works on that band and ORs its dilate in.
    let (sx0, sx1) = (((bx0 - ox) / h).round() as usize, ((bx1 - ox) / h).round() as usize);
    let (sy0, sy1) = (((by0 - oy) / h).round() as usize, ((by1 - oy) / h).round() as usize);
    let star: Vec<u8> = pairs
        .par_iter()
        .fold(
            || vec![0u8; nx * ny],
            |mut acc, &(a, b)| {
                let (i0, i1) = ((sx0 + 1).saturating_sub(a), (sx1 - 1).min(nx - a));
                let (j0, j1) = ((sy0 + 1).saturating_sub(b), (sy1 - 1).min(ny - b));
                if i0 > i1 || j0 > j1 {
                    return acc;
                }
                let (lx, ly) = (i1 - i0 + a, j1 - j0 + b);
                let mut avg = vec![0f64; lx * ly];
                for j in j0..=j1 {
                    for i in i0..=i1 {
                        avg[(j - j0) * lx + (i - i0)] = sat.sum(i, j, i + a, j + b) as f64 / (a * b) as f64;
                    }
                }
                // The box with lower-left cell (i, j) covers cells [i, i+a) × [j, j+b).
                let m = window_max(&avg, lx, ly, a, b);
                for (k, v) in m.into_iter().enumerate() {
                    if v > cfg.threshold {
                        acc[(j0 + k / lx) * nx + i0 + k % lx] = 1;
                    }
                }
                acc
            },
        )
        .reduce(|| vec![0u8; nx * ny], |mut x, y| {
            for (u, v) in x.iter_mut().zip(y) {
                *u |= v;
            }
            x
        });
    let outside: Vec<u8> = star.iter().map(|&v| 1 - v).collect();
    let out_sat = SummedArea::new(&outside, nx, ny);

    let mut res = BTreeMap::new();
    for r in &rects {
        let cx = 0.5 * (r.base.lo_f64() + r.base.hi_f64());
        let cy = 0.5 * (r.vert.lo_f64() + r.vert.hi_f64());
        let (w, v) = (r.base.len_f64(), r.vert.len_f64());
        let mut u = 0u32;
        loop {
            let f = (u as f64).exp2() * 0.5;
            let (x0, x1, y0, y1) = (cx - f * w, cx + f * w, cy - f * v, cy + f * v);
            // cells whose centers lie in the half-open dilate
            let i0 = ((x0 - ox) / h - 0.5).ceil();
            let i1 = ((x1 - ox) / h - 0.5).ceil();
            let j0 = ((y0 - oy) / h - 0.5).ceil();
            let j1 = ((y1 - oy) / h - 0.5).ceil();
            let inside_window = i0 >= 0.0 && j0 >= 0.0 && i1 <= nx as f64 && j1 <= ny as f64;
            if !inside_window || out_sat.sum(i0 as usize, j0 as usize, i1 as usize, j1 as usize) > 0 {
                break;
            }
            u += 1;
        }
        res.insert(*r, u);
    }
    Ok(res)
}

fn size_ladder(max: usize, steps: u32) -> Vec<usize> {
    let mut v = Vec::new();
    let mut k = 0u32;
    loop {
        let s = (k as f64 / steps.max(1) as f64).exp2().round() as usize;
        if s > max {
            break;
        }
        if v.last() != Some(&s) {
            v.push(s);
        }
        k += 1;
    }
    v
}

/// `out(p) = max{ avg(i, j) : i ∈ (p.x − a, p.x], j ∈ (p.y − b, p.y] }`, the
/// best box of size `a × b` containing cell `p`.
fn window_max(avg: &[f64], nx: usize, ny: usize, a: usize, b: usize) -> Vec<f64> {
    let mut tmp = vec![0f64; nx * ny];
    let mut line = vec![0f64; nx.max(ny)];
    let mut outl = vec![0f64; nx.max(ny)];
    for j in 0..ny {
        line[..nx].copy_from_slice(&avg[j * nx..(j + 1) * nx]);
        trailing_max(&line[..nx], a, nx - a + 1, &mut outl[..nx]);
        tmp[j * nx..(j + 1) * nx].copy_from_slice(&outl[..nx]);
    }
    let mut out = vec![0f64; nx * ny];
    for i in 0..nx {
        for j in 0..ny {
            line[j] = tmp[j * nx + i];
        }
        trailing_max(&line[..ny], b, ny - b + 1, &mut outl[..ny]);
        for j in 0..ny {
            out[j * nx + i] = outl[j];
        }
    }
    out
}

/// `out[p] = max(x[q] : p − w < q ≤ p, q < valid)` via a monotone deque.
fn trailing_max(x: &[f64], w: usize, valid: usize, out: &mut [f64]) {
    let mut dq: std::collections::VecDeque<usize> = std::collections::VecDeque::new();
    for p in 0..x.len() {
        if p < valid {
            while let Some(&back) = dq.back() {
                if x[back] <= x[p] {
                    dq.pop_back();
                } else {
                    break;
                }
            }
            dq.push_back(p);
        }
        while let Some(&front) = dq.front() {
            if front + w <= p {
                dq.pop_front();
            } else {
                break;
            }
        }
        out[p] = dq.front().map_or(0.0, |&q| x[q]);
    }
}

pub(crate) struct SummedArea {
    nx: usize,
    s: Vec<i64>,
}

impl SummedArea {
    pub fn new(v: &[u8], nx: usize, ny: usize) -> Self {
        let w = nx + 1;
        let mut s = vec![0i64; w * (ny + 1)];
        for j in 0..ny {
            let mut row = 0i64;
            for i in 0..nx {
                row += v[j * nx + i] as i64;
                s[(j + 1) * w + i + 1] = s[j * w + i + 1] + row;
            }
        }
        SummedArea { nx, s }
    }

    /// Sum over cells `[i0, i1) × [j0, j1)`.
    pub fn sum(&self, i0: usize, j0: usize, i1: usize, j1: usize) -> i64 {
        if i1 <= i0 || j1 <= j0 {
            return 0;
        }
        let w = self.nx + 1;
        self.s[j1 * w + i1] - self.s[j0 * w + i1] - self.s[j1 * w + i0] + self.s[j0 * w + i0]
    }
}


/// `N` equispaced dyadic slopes `(2j − N)/N`, `j = 0..N`, in `[−1, 1)`.
pub fn slope_set(n: usize) -> Result<Vec<Slope>> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::invalid("slope count must be a power of two"));
    }
    let q = n.trailing_zeros();
    (0..n).map(|j| Slope::new(2 * j as i64 - n as i64, q + 1)).collect()
}

/// Random parallelograms along `slopes` inside `[0, 2)²` (before shearing),
/// with `|I| ∈ {1, 1/2, 1/4}` and eccentricity up to 4. Repeats are dropped, so
/// the result may hold fewer than `count` members.
pub fn random_collection(rng: &mut impl rand::Rng, count: usize, slopes: &[Slope]) -> ParallelogramCollection {
    let mut c = ParallelogramCollection::new();
    for _ in 0..count {
        let s = slopes[rng.gen_range(0..slopes.len())];
        let ki = rng.gen_range(0..3);
        let kj = ki + rng.gen_range(0..3);
        let i = DyadicInterval::new(ki, rng.gen_range(0..2i64 << ki));
        let j = DyadicInterval::new(kj, rng.gen_range(0..2i64 << kj));
        c.push(Parallelogram::new(s, i, j).expect("|I| >= |J| by construction"));
    }
    c.dedup();
    c
}

/// A bush: one `1 × 1/N` parallelogram per slope, all through `(1/2, 1/2)`.
pub fn kakeya_collection(slopes: &[Slope]) -> ParallelogramCollection {
    let k = (slopes.len().next_power_of_two().trailing_zeros()) as i32;
    let mut c = ParallelogramCollection::new();
    for &s in slopes {
        let target = 0.5 - 0.5 * s.to_f64();
        let m = (target * (k as f64).exp2()).floor() as i64;
        c.push(Parallelogram::new(s, DyadicInterval::new(0, 0), DyadicInterval::new(k, m)).expect("k >= 0"));
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(k: i32, m: i64) -> DyadicInterval {
        DyadicInterval::new(k, m)
    }

    fn par(p: i64, q: u32, i: DyadicInterval, j: DyadicInterval) -> Parallelogram {
        Parallelogram::new(Slope::new(p, q).unwrap(), i, j).unwrap()
    }

    #[test]
    fn shear_examples() {
        let half = Slope::new(1, 1).unwrap();
        assert_eq!(shear(half, (2.0, 1.0)), (2.0, 2.0));
        assert_eq!(shear(Slope::ZERO, (0.3, -0.7)), (0.3, -0.7));
        assert_eq!(shear(Slope::new(-1, 0).unwrap(), (1.0, 1.0)), (1.0, 0.0));
    }

    #[test]
    fn slope_normalizes_and_parses() {
        let s = Slope::new(4, 3).unwrap();
        assert_eq!((s.numerator(), s.log_denominator()), (1, 1));
        assert_eq!("1/2^1".parse::<Slope>().unwrap(), s);
        assert!(Slope::new(3, 1).is_err());
        assert_eq!(Slope::new(0, 5).unwrap(), Slope::ZERO);
    }

    #[test]
    fn projections_examples() {
        let p = par(0, 0, iv(0, 0), iv(0, 0));
        let (a, b) = p.projections();
        assert_eq!(a, (Rational::ZERO, Rational::ONE));
        assert_eq!(b, (Rational::ZERO, Rational::ONE));
        let p = par(1, 1, iv(-1, 0), iv(0, 0));
        assert_eq!(p.projections().1, (Rational::ZERO, Rational::int(2)));
        let p = par(-1, 1, iv(-1, 0), iv(0, 0));
        assert_eq!(p.projections().1, (Rational::int(-1), Rational::ONE));
    }

    #[test]
    fn leq_examples() {
        let unit = par(0, 0, iv(0, 0), iv(0, 0));
        let r = par(0, 0, iv(-1, 0), iv(0, 0));
        assert!(leq(&unit, &r));
        let far = par(0, 0, iv(0, 2), iv(0, 0));
        assert!(!leq(&unit, &far));
        let wide = par(0, 0, iv(-1, 0), iv(0, 0));
        assert!(!leq(&wide, &unit));
        assert!(leq(&unit, &unit));
    }

    #[test]
    fn intersect_examples() {
        let a = par(0, 0, iv(0, 0), iv(0, 0));
        let b = par(1, 1, iv(0, 0), iv(0, 0));
        assert_eq!(intersect_area_exact(&a, &b), Rational::new(3, 4));
        assert_eq!(intersect_area_exact(&a, &a), Rational::ONE);
        let c = ShearBox {
            slope: Rational::ZERO,
            x0: Rational::new(1, 2),
            x1: Rational::new(3, 2),
            y0: Rational::new(1, 2),
            y1: Rational::new(3, 2),
        };
        assert_eq!(box_intersection_area(&a.to_box(), &c), Rational::new(1, 4));
    }

    #[test]
    fn shadow_examples() {
        let a = par(0, 0, iv(0, 0), iv(0, 0));
        let b = par(1, 1, iv(0, 0), iv(0, 0));
        let c = ParallelogramCollection::from_iter([a, b]);
        assert!((shadow_area(&c) - 1.25).abs() < 1e-15);
        assert!((raster_shadow_area(&c, 4096) - 1.25).abs() < 1e-3);
        let c = ParallelogramCollection::from_iter([a, a]);
        assert_eq!(shadow_area(&c), 1.0);
        let d = par(0, 0, iv(0, 3), iv(0, 0));
        let c = ParallelogramCollection::from_iter([a, d]);
        assert_eq!(shadow_area(&c), 2.0);
    }

    #[test]
    fn clipping_matches_slab_integration() {
        let a = par(1, 2, iv(0, 0), iv(1, 0));
        let b = par(-3, 2, iv(1, 1), iv(2, 1));
        let pa = ConvexPolygon::from_box(&a.to_box());
        let pb = ConvexPolygon::from_box(&b.to_box());
        assert_eq!(pa.clip(&pb).area(), intersect_area_exact(&a, &b));
    }

    #[test]
    fn journe_unit_square() {
        let sq = par(0, 0, iv(0, 0), iv(0, 0));
        let t = ParallelogramCollection::from_iter([sq]);
        let u = journe_heights(&t, 1.0 / 64.0).unwrap();
        assert_eq!(u[&sq], 4);
        let u8 = journe_heights(&t, 1.0 / 8.0).unwrap();
        assert!(u8[&sq] < 4);
    }

    #[test]
    fn journe_rejects_mixed_slopes() {
        let a = par(0, 0, iv(0, 0), iv(0, 0));
        let b = par(1, 1, iv(0, 0), iv(0, 0));
        let t = ParallelogramCollection::from_iter([a, b]);
        assert!(journe_heights(&t, 1.0 / 64.0).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let c = ParallelogramCollection::from_iter([par(3, 3, iv(1, -1), iv(2, 5))]);
        let s = c.to_json();
        assert!(s.contains("\"3/2^3\""));
        assert_eq!(ParallelogramCollection::from_json(&s).unwrap(), c);
    }
}
