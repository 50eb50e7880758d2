//! Tiles, canonical wave packets and intrinsic square functions.
//!
//! Frequencies here are measured in cycles per unit length, `ν = ξ/2π`, so a
//! tile with spatial sides `|I|, |J|` pairs with frequency windows of widths
//! comparable to `1/|I|, 1/|J|`. Packets are built on the FFT lattice of a
//! [`Grid`]: a separable window `ĥ_t(|I|·(ν−ν_c)·v_s)·ĥ_r(|J|·(ν−ν_c)₂)`,
//! truncated to the tile's frequency region and modulated to the centre of
//! `R_t`. The torus is the spatial domain, so translates wrap.

use crate::carleson::CarlesonSequence;
use crate::error::{Error, Result};
use crate::geometry::{shadow_area, DyadicInterval, Parallelogram, ParallelogramCollection, Slope};
use crate::spectral::{self, beta, Grid, GridFunction};
use crate::tolerances;
use num_complex::Complex64;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

/// The arc of unit vectors `v^⊥/|v^⊥|` for slopes strictly between `minus` and `plus`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub minus: Slope,
    pub center: Slope,
    pub plus: Slope,
}

/// Angle of `v_s^⊥ = (−s, 1)`.
pub fn perp_angle(s: Slope) -> f64 {
    s.to_f64().atan() + FRAC_PI_2
}

fn unit_perp(s: f64) -> (f64, f64) {
    let r = (1.0 + s * s).sqrt();
    (-s / r, 1.0 / r)
}

impl Arc {
    pub fn new(minus: Slope, center: Slope, plus: Slope) -> Result<Self> {
        if !(minus < center && center < plus) {
            return Err(Error::invalid("arc needs minus < center < plus"));
        }
        let a = Arc { minus, center, plus };
        if a.width() > FRAC_PI_2 {
            return Err(Error::invalid("arcs wider than pi/2 are not supported"));
        }
        Ok(a)
    }

    pub fn width(&self) -> f64 {
        perp_angle(self.plus) - perp_angle(self.minus)
    }

    /// `ℓ` with `2^{-ℓ} < |ω| ≤ 2^{-ℓ+1}`.
    pub fn ell(&self) -> i32 {
        (-self.width().log2()).floor() as i32 + 1
    }

    pub fn contains_direction(&self, nu: (f64, f64)) -> bool {
        if nu == (0.0, 0.0) {
            return false;
        }
        let a = nu.1.atan2(nu.0);
        a > perp_angle(self.minus) && a < perp_angle(self.plus)
    }

    /// Distance from `ν` to the boundary ray through `v_σ^⊥`.
    pub fn ray_distance(&self, nu: (f64, f64), plus: bool) -> f64 {
        let u = unit_perp(if plus { self.plus } else { self.minus }.to_f64());
        let along = u.0 * nu.0 + u.1 * nu.1;
        if along <= 0.0 {
            nu.0.hypot(nu.1)
        } else {
            (u.0 * nu.1 - u.1 * nu.0).abs()
        }
    }
}

/// `N` arcs with centres `(2j+1−N)/N` and endpoints `(2j−N)/N`, `(2j+2−N)/N`.
pub fn cone_arcs(n: usize) -> Result<Vec<Arc>> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::invalid("arc count must be a power of two"));
    }
    let q = n.trailing_zeros();
    let n = n as i64;
    (0..n)
        .map(|j| Arc::new(Slope::new(2 * j - n, q)?, Slope::new(2 * j + 1 - n, q)?, Slope::new(2 * j + 2 - n, q)?))
        .collect()
}

/// A frequency rectangle `y + rot(I×J)` whose first axis is `v_s/|v_s|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreqRectangle {
    pub slope: Slope,
    pub center: (f64, f64),
    pub sides: (f64, f64),
}

impl FreqRectangle {
    pub fn new(slope: Slope, center: (f64, f64), sides: (f64, f64)) -> Result<Self> {
        if !(sides.0 > 0.0 && sides.1 > 0.0 && sides.0.is_finite() && sides.1.is_finite()) {
            return Err(Error::invalid("degenerate frequency rectangle"));
        }
        Ok(FreqRectangle { slope, center, sides })
    }

    fn axes(&self) -> ((f64, f64), (f64, f64)) {
        let s = self.slope.to_f64();
        let r = (1.0 + s * s).sqrt();
        ((1.0 / r, s / r), (-s / r, 1.0 / r))
    }

    /// Coordinates of `ν` in the rotated frame centred at the rectangle.
    pub fn local(&self, nu: (f64, f64)) -> (f64, f64) {
        let (e1, e2) = self.axes();
        let d = (nu.0 - self.center.0, nu.1 - self.center.1);
        (d.0 * e1.0 + d.1 * e1.1, d.0 * e2.0 + d.1 * e2.1)
    }

    pub fn contains(&self, nu: (f64, f64)) -> bool {
        let (a, b) = self.local(nu);
        a.abs() < 0.5 * self.sides.0 && b.abs() < 0.5 * self.sides.1
    }
}

/// `ℓ` with `2^ℓ < x ≤ 2^{ℓ+1}`.
fn ell_of_length(x: f64) -> i32 {
    x.log2().ceil() as i32 - 1
}

/// One-dimensional Whitney band: `k = 0` is `|t| ≤ 1/3`; `k ≥ 1` is
/// `2^{-k-1}/3 ≤ 1/2 − |t| ≤ 2^{-k+1}/3` on the side `sign`.
fn whitney_band(t: f64, k: u32, sign: i8) -> bool {
    if k == 0 {
        return 0.5 - t.abs() >= 1.0 / 6.0;
    }
    if t * sign as f64 <= 0.0 {
        return false;
    }
    let d = 0.5 - t.abs();
    let kk = k as i32;
    d >= (-(kk as f64) - 1.0).exp2() / 3.0 && d <= (1.0 - kk as f64).exp2() / 3.0
}

fn whitney_center(k: u32, sign: i8) -> f64 {
    if k == 0 {
        0.0
    } else {
        sign as f64 * (0.5 - 5.0 / 12.0 * (-(k as f64)).exp2())
    }
}

/// A frequency component `Ω_t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FreqRegion {
    /// `Ω_{s,k} = {2^{k-1} < |ν| < 2^{k+1}, ν/|ν| ∈ ω_s}`.
    Sector { arc: Arc, k: i32 },
    /// Whitney piece `Ω_{s,k,m}` of a sector; distances are measured in units of `2^k|ω_s|`.
    Whitney { arc: Arc, k: i32, m: i32 },
    /// One sign-quadrant of `Ω_{s,k₁,k₂}(F)`.
    RectPiece { rect: FreqRectangle, k1: u32, k2: u32, side1: i8, side2: i8 },
}

impl FreqRegion {
    pub fn contains(&self, nu: (f64, f64)) -> bool {
        match *self {
            FreqRegion::Sector { arc, k } => in_sector(&arc, k, nu),
            FreqRegion::Whitney { arc, k, m } => {
                if !in_sector(&arc, k, nu) {
                    return false;
                }
                let unit = (k as f64).exp2() * arc.width();
                if m == 0 {
                    arc.ray_distance(nu, false).min(arc.ray_distance(nu, true)) / unit >= 1.0 / 6.0
                } else {
                    let d = arc.ray_distance(nu, m > 0) / unit;
                    let mm = m.unsigned_abs() as f64;
                    d >= (-mm - 1.0).exp2() / 3.0 && d <= (1.0 - mm).exp2() / 3.0
                }
            }
            FreqRegion::RectPiece { rect, k1, k2, side1, side2 } => {
                let (a, b) = rect.local(nu);
                whitney_band(a / rect.sides.0, k1, side1) && whitney_band(b / rect.sides.1, k2, side2)
            }
        }
    }

    /// Slope of the tiles carried by this component.
    pub fn tile_slope(&self) -> Slope {
        match *self {
            FreqRegion::Sector { arc, .. } => arc.center,
            FreqRegion::Whitney { arc, m, .. } => match m.signum() {
                1 => arc.plus,
                -1 => arc.minus,
                _ => arc.center,
            },
            FreqRegion::RectPiece { rect, .. } => rect.slope,
        }
    }

    /// Dyadic scales `(a, b)` with `|I_t| = 2^{-a}`, `|J_t| = 2^{-b}`.
    pub fn spatial_scales(&self) -> (i32, i32) {
        match *self {
            FreqRegion::Sector { arc, k } => (k - arc.ell(), k),
            FreqRegion::Whitney { arc, k, m } => (k - arc.ell() - m.abs(), k),
            FreqRegion::RectPiece { rect, k1, k2, .. } => {
                let a = ell_of_length(rect.sides.0) - k1 as i32;
                let b = ell_of_length(rect.sides.1) - k2 as i32;
                (a.min(b), b)
            }
        }
    }

    /// Centre of the packet window.
    pub fn window_center(&self) -> (f64, f64) {
        match *self {
            FreqRegion::Sector { arc, k } | FreqRegion::Whitney { arc, k, m: 0 } => {
                let u = unit_perp(arc.center.to_f64());
                let r = 1.25 * (k as f64).exp2();
                (r * u.0, r * u.1)
            }
            FreqRegion::Whitney { arc, k, m } => {
                let sigma = self.tile_slope().to_f64();
                let u = unit_perp(sigma);
                let norm = (1.0 + sigma * sigma).sqrt();
                let inward = if m > 0 { 1.0 } else { -1.0 };
                let n = (inward / norm, inward * sigma / norm);
                let r = 1.25 * (k as f64).exp2();
                let d = 5.0 / 12.0 * (-(m.abs() as f64)).exp2() * (k as f64).exp2() * arc.width();
                (r * u.0 + d * n.0, r * u.1 + d * n.1)
            }
            FreqRegion::RectPiece { rect, k1, k2, side1, side2 } => {
                let (e1, e2) = rect.axes();
                let a = whitney_center(k1, side1) * rect.sides.0;
                let b = whitney_center(k2, side2) * rect.sides.1;
                (rect.center.0 + a * e1.0 + b * e2.0, rect.center.1 + a * e1.1 + b * e2.1)
            }
        }
    }

    /// Area by midpoint sampling of an enclosing frame box at `res²` points.
    pub fn area(&self, res: usize) -> f64 {
        let (o, e1, e2, (a0, a1), (b0, b1)) = self.frame();
        let (ha, hb) = ((a1 - a0) / res as f64, (b1 - b0) / res as f64);
        let count: usize = (0..res)
            .into_par_iter()
            .map(|i| {
                let a = a0 + (i as f64 + 0.5) * ha;
                (0..res)
                    .filter(|&j| {
                        let b = b0 + (j as f64 + 0.5) * hb;
                        self.contains((o.0 + a * e1.0 + b * e2.0, o.1 + a * e1.1 + b * e2.1))
                    })
                    .count()
            })
            .sum();
        count as f64 * ha * hb
    }

    /// Orthonormal frame `(origin, e₁, e₂, range₁, range₂)` whose box contains the region.
    #[allow(clippy::type_complexity)]
    fn frame(&self) -> ((f64, f64), (f64, f64), (f64, f64), (f64, f64), (f64, f64)) {
        let outer = |k: i32| (k as f64 + 1.0).exp2();
        match *self {
            FreqRegion::Sector { arc, k } | FreqRegion::Whitney { arc, k, m: 0 } => {
                let u = unit_perp(arc.center.to_f64());
                let half = outer(k) * arc.width().min(FRAC_PI_2).sin();
                ((0.0, 0.0), u, (-u.1, u.0), (0.0, outer(k)), (-half, half))
            }
            FreqRegion::Whitney { arc, k, m } => {
                let u = unit_perp(self.tile_slope().to_f64());
                let n = if m > 0 { (u.1, -u.0) } else { (-u.1, u.0) };
                let d = (k as f64).exp2() * arc.width() * (1.0 - m.abs() as f64).exp2() / 3.0;
                ((0.0, 0.0), u, n, (0.0, outer(k)), (0.0, d * 1.001))
            }
            FreqRegion::RectPiece { rect, .. } => {
                let (e1, e2) = rect.axes();
                let (a, b) = (0.5 * rect.sides.0, 0.5 * rect.sides.1);
                (rect.center, e1, e2, (-a, a), (-b, b))
            }
        }
    }
}

fn in_sector(arc: &Arc, k: i32, nu: (f64, f64)) -> bool {
    let r = nu.0.hypot(nu.1);
    let base = (k as f64).exp2();
    r > 0.5 * base && r < 2.0 * base && arc.contains_direction(nu)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tile {
    pub spatial: Parallelogram,
    pub freq: FreqRegion,
}

impl Tile {
    pub fn slope(&self) -> Slope {
        self.spatial.slope
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Construction {
    RoughCone { arcs: Vec<Arc> },
    SmoothCone { arcs: Vec<Arc> },
    Rectangles { rects: Vec<FreqRectangle> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TileSet {
    pub construction: Construction,
    pub grid_n: usize,
    pub length: f64,
    pub tiles: Vec<Tile>,
}

impl TileSet {
    pub fn grid(&self) -> Grid {
        Grid { n: self.grid_n, length: self.length }
    }

    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }

    /// Distinct frequency components in emission order.
    pub fn components(&self) -> Vec<FreqRegion> {
        let mut out: Vec<FreqRegion> = Vec::new();
        for t in &self.tiles {
            if out.last() != Some(&t.freq) {
                out.push(t.freq);
            }
        }
        out
    }

    pub fn spatial_collection(&self) -> ParallelogramCollection {
        ParallelogramCollection::from_iter(self.tiles.iter().map(|t| t.spatial))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("tile set serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::invalid(e.to_string()))
    }
}

/// Window shape of canonical packets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PacketParams {
    /// Decay order `M` used by [`adaptation_constant`].
    pub order: u32,
    /// Support half-width of the window along `J`, in units of `1/|J|`.
    pub radial: f64,
    /// Support half-width of the window along `I`, in units of `1/|I|`.
    pub tangential: f64,
}

impl Default for PacketParams {
    fn default() -> Self {
        PacketParams { order: 8, radial: 0.4, tangential: 0.45 }
    }
}

impl PacketParams {
    pub fn validate(&self) -> Result<()> {
        if self.order < 3 {
            return Err(Error::invalid("packet order must be at least 3"));
        }
        if !(self.radial > 0.0 && self.radial < 0.5 && self.tangential > 0.0 && self.tangential < 0.5) {
            return Err(Error::invalid("window half-widths must lie in (0, 1/2)"));
        }
        Ok(())
    }
}

/// `exp(−½(3τ/b)²)·β(τ/b)`, supported in `|τ| ≤ b`.
pub fn window(tau: f64, b: f64) -> f64 {
    let u = tau / b;
    if u.abs() >= 1.0 {
        return 0.0;
    }
    (-0.5 * (3.0 * u).powi(2)).exp() * beta(u)
}

/// Frequency lattice of `grid` in cycles: slot `i` has `ν = k/L`.
fn nu_of(grid: &Grid, i: usize) -> f64 {
    grid.signed_index(i) as f64 / grid.length
}

fn nyquist(grid: &Grid) -> f64 {
    0.5 * grid.n as f64 / grid.length
}

/// Lattice points `(slot, ν, W(ν))` carrying the window of `region` at tile scales.
struct Component {
    points: Vec<(usize, (f64, f64), f64)>,
    /// Integer frequencies `(k_x, k_y)` of `points`, same order.
    ks: Vec<(i64, i64)>,
    /// `1/(h·‖W‖₂)`, which makes the grid packet unit norm.
    kappa: f64,
}

fn window_extent(region: &FreqRegion, params: &PacketParams) -> (f64, f64) {
    let (a, b) = region.spatial_scales();
    let (li, lj) = ((-(a as f64)).exp2(), (-(b as f64)).exp2());
    let s = region.tile_slope().to_f64().abs();
    let ry = params.radial / lj;
    (params.tangential / li + s * ry, ry)
}

fn component(region: &FreqRegion, grid: &Grid, params: &PacketParams) -> Component {
    let (a, b) = region.spatial_scales();
    let (li, lj) = ((-(a as f64)).exp2(), (-(b as f64)).exp2());
    let s = region.tile_slope().to_f64();
    let c = region.window_center();
    let (ex, ey) = window_extent(region, params);
    let l = grid.length;
    let k_range = |lo: f64, hi: f64| -> Vec<i64> {
        let half = (grid.n / 2) as i64;
        let a = ((lo * l).ceil() as i64).max(-half);
        let b = ((hi * l).floor() as i64).min(half - 1);
        (a..=b).collect()
    };
    let mut points = Vec::new();
    let mut ks = Vec::new();
    let mut norm = 0.0;
    for ky in k_range(c.1 - ey, c.1 + ey) {
        for kx in k_range(c.0 - ex, c.0 + ex) {
            let nu = (kx as f64 / l, ky as f64 / l);
            let d = (nu.0 - c.0, nu.1 - c.1);
            let w = window(li * (d.0 + s * d.1), params.tangential) * window(lj * d.1, params.radial);
            if w > 0.0 && region.contains(nu) {
                points.push((grid.slot(ky) * grid.n + grid.slot(kx), nu, w));
                ks.push((kx, ky));
                norm += w * w;
            }
        }
    }
    let kappa = if norm > 0.0 { 1.0 / (grid.cell() * norm.sqrt()) } else { 0.0 };
    Component { points, ks, kappa }
}

/// Whether tiles of `region` fit the grid: `|I_t| ≤ L/4`, `|J_t| ≥ 2h`, window inside Nyquist.
fn representable(region: &FreqRegion, grid: &Grid) -> bool {
    let (a, b) = region.spatial_scales();
    let (li, lj) = ((-(a as f64)).exp2(), (-(b as f64)).exp2());
    if li > 0.25 * grid.length || lj < 2.0 * grid.cell() {
        return false;
    }
    let (ex, ey) = window_extent(region, &PacketParams::default());
    let c = region.window_center();
    let ny = nyquist(grid);
    c.0.abs() + ex < ny && c.1.abs() + ey < ny
}

/// Every dyadic parallelogram of the given slope and scales whose base lies in
/// the window and whose centre height lies in `[−L/2, L/2)`.
fn translates(slope: Slope, (a, b): (i32, i32), grid: &Grid) -> Vec<Parallelogram> {
    let half = 0.5 * grid.length;
    let (li, lj) = ((-(a as f64)).exp2(), (-(b as f64)).exp2());
    let s = slope.to_f64();
    let ni = (half / li).round() as i64;
    let nj = (grid.length / lj).round() as i64;
    let mut out = Vec::with_capacity((2 * ni * nj) as usize);
    for i in -ni..ni {
        let xc = (i as f64 + 0.5) * li;
        let j0 = ((-half - s * xc) / lj - 0.5).ceil() as i64;
        for j in j0..j0 + nj {
            let p = Parallelogram::new(slope, DyadicInterval::new(a, i), DyadicInterval::new(b, j)).expect("scales ordered");
            out.push(p);
        }
    }
    out
}

fn emit(regions: impl IntoIterator<Item = FreqRegion>, grid: &Grid) -> Vec<Tile> {
    let params = PacketParams::default();
    let mut tiles = Vec::new();
    for r in regions {
        if !representable(&r, grid) || component(&r, grid, &params).points.is_empty() {
            continue;
        }
        for p in translates(r.tile_slope(), r.spatial_scales(), grid) {
            tiles.push(Tile { spatial: p, freq: r });
        }
    }
    tiles
}

fn check_arcs(arcs: &[Arc]) -> Result<()> {
    let mut ev: Vec<(f64, i32)> = Vec::new();
    for a in arcs {
        ev.push((perp_angle(a.minus), 1));
        ev.push((perp_angle(a.plus), -1));
    }
    ev.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    let mut depth = 0;
    for (_, d) in ev {
        depth += d;
        if depth as usize > tolerances::TILE_OVERLAP_MAX {
            return Err(Error::invalid("arcs overlap too much"));
        }
    }
    Ok(())
}

const K_RANGE: std::ops::RangeInclusive<i32> = -12..=24;

/// The Whitney regions `Ω_{s,k,m}` for `|m| ≤ m_max`.
pub fn whitney_regions(arc: Arc, k: i32, m_max: i32) -> Vec<FreqRegion> {
    (-m_max..=m_max).map(|m| FreqRegion::Whitney { arc, k, m }).collect()
}

/// Rough-cone tiles over the Whitney pieces of every sector.
pub fn whitney_cone_tiles(arcs: &[Arc], grid: Grid) -> Result<TileSet> {
    check_arcs(arcs)?;
    let mut regions = Vec::new();
    for arc in arcs {
        for k in K_RANGE {
            regions.push(FreqRegion::Whitney { arc: *arc, k, m: 0 });
            for m in 1..=40 {
                let up = FreqRegion::Whitney { arc: *arc, k, m };
                if (-(up.spatial_scales().0 as f64)).exp2() > 0.5 * grid.length {
                    break;
                }
                regions.push(FreqRegion::Whitney { arc: *arc, k, m: -m });
                regions.push(up);
            }
        }
    }
    Ok(TileSet { construction: Construction::RoughCone { arcs: arcs.to_vec() }, grid_n: grid.n, length: grid.length, tiles: emit(regions, &grid) })
}

/// Smooth-cone tiles: one sector per `(s, k)`, `R_t ∈ D_{s,k−ℓ_s,k}`.
pub fn smooth_cone_tiles(arcs: &[Arc], grid: Grid) -> Result<TileSet> {
    check_arcs(arcs)?;
    let regions = arcs.iter().flat_map(|arc| K_RANGE.map(move |k| FreqRegion::Sector { arc: *arc, k }));
    Ok(TileSet { construction: Construction::SmoothCone { arcs: arcs.to_vec() }, grid_n: grid.n, length: grid.length, tiles: emit(regions, &grid) })
}

/// Two-parameter Whitney tiles of frequency rectangles.
///
/// Each `W_{k₁,k₂}` with `k_i ≥ 1` is split by the sign of the coordinate, so
/// every frequency component is a single rectangle. Spatial components have
/// `|J_t| = 2^{k₂−ℓ_J}` and `|I_t| = max(2^{k₁−ℓ_I}, |J_t|)`.
pub fn rect_tiles(rects: &[FreqRectangle], grid: Grid) -> Result<TileSet> {
    let mut regions = Vec::new();
    for r in rects {
        FreqRectangle::new(r.slope, r.center, r.sides)?;
        for k1 in 0..=24u32 {
            for k2 in 0..=24u32 {
                let s1: &[i8] = if k1 == 0 { &[1] } else { &[-1, 1] };
                let s2: &[i8] = if k2 == 0 { &[1] } else { &[-1, 1] };
                for &side1 in s1 {
                    for &side2 in s2 {
                        regions.push(FreqRegion::RectPiece { rect: *r, k1, k2, side1, side2 });
                    }
                }
            }
        }
    }
    Ok(TileSet { construction: Construction::Rectangles { rects: rects.to_vec() }, grid_n: grid.n, length: grid.length, tiles: emit(regions, &grid) })
}

fn center_of(p: &Parallelogram) -> (f64, f64) {
    p.center()
}

/// Lattice coefficients of the packet of `t`, unit norm on the grid.
fn packet_hat(t: &Tile, comp: &Component, grid: &Grid) -> Vec<Complex64> {
    let n = grid.n;
    let mut data = vec![Complex64::new(0.0, 0.0); n * n];
    let c = center_of(&t.spatial);
    let x0 = -0.5 * grid.length;
    for &(slot, nu, w) in &comp.points {
        let ph = -2.0 * PI * ((c.0 - x0) * nu.0 + (c.1 - x0) * nu.1);
        data[slot] = Complex64::from_polar(comp.kappa * w, ph);
    }
    data
}

/// The canonical packet of `t`, normalized to `‖φ‖₂ = 1` on the grid.
pub fn canonical_packet(t: &Tile, grid: Grid, params: &PacketParams) -> Result<GridFunction> {
    params.validate()?;
    let (a, b) = t.freq.spatial_scales();
    if (-(b as f64)).exp2() < grid.cell() || (-(a as f64)).exp2() > grid.length {
        return Err(Error::invalid("tile is not resolved by the grid"));
    }
    let comp = component(&t.freq, &grid, params);
    if comp.points.is_empty() {
        return Err(Error::invalid("tile window has no lattice points"));
    }
    let hat = GridFunction { grid, data: packet_hat(t, &comp, &grid) };
    Ok(spectral::inverse(&hat))
}

/// `a_t = |⟨f, φ_t⟩|²` for every tile, in tile order.
pub fn coefficients(f: &GridFunction, tiles: &TileSet, params: &PacketParams) -> Result<Vec<f64>> {
    coefficients_from_spectrum(&spectral::forward(f), tiles, params)
}

/// [`coefficients`] for a function given by its unitary lattice spectrum.
pub fn coefficients_from_spectrum(fhat: &GridFunction, tiles: &TileSet, params: &PacketParams) -> Result<Vec<f64>> {
    params.validate()?;
    let grid = fhat.grid;
    if grid != tiles.grid() {
        return Err(Error::GridMismatch("function and tile set use different grids".into()));
    }
    let h = grid.cell();
    let x0 = -0.5 * grid.length;
    let l = grid.length;
    let mut planner = rustfft::FftPlanner::new();
    let mut out = vec![0.0; tiles.len()];
    let mut start = 0;
    while start < tiles.len() {
        let region = tiles.tiles[start].freq;
        let mut end = start;
        while end < tiles.len() && tiles.tiles[end].freq == region {
            end += 1;
        }
        let comp = component(&region, &grid, params);
        if comp.points.is_empty() {
            start = end;
            continue;
        }
        let scale = (h * h * comp.kappa).powi(2);
        // Dense box of F·W over the window so the phase factors per tile separate.
        let kx0 = comp.ks.iter().map(|k| k.0).min().unwrap();
        let ky0 = comp.ks.iter().map(|k| k.1).min().unwrap();
        let wx = (comp.ks.iter().map(|k| k.0).max().unwrap() - kx0 + 1) as usize;
        let wy = (comp.ks.iter().map(|k| k.1).max().unwrap() - ky0 + 1) as usize;
        let mut z = vec![Complex64::new(0.0, 0.0); wx * wy];
        for (&(slot, _, w), &(kx, ky)) in comp.points.iter().zip(&comp.ks) {
            z[(ky - ky0) as usize * wx + (kx - kx0) as usize] = fhat.data[slot] * w;
        }
        let mut a = start;
        while a < end {
            let first = &tiles.tiles[a].spatial;
            let mut b = a;
            while b < end && tiles.tiles[b].spatial.base == first.base {
                b += 1;
            }
            let (cx, cy) = center_of(first);
            let ex = phases(cx - x0, kx0, wx, l);
            let ey = phases(cy - x0, ky0, wy, l);
            // g_y = (Σ_x Z_{y,x} e_x)·e_y at the first centre of the column.
            let g: Vec<Complex64> = z.chunks_exact(wx).zip(&ey).map(|(row, e)| row.iter().zip(&ex).map(|(p, q)| p * q).sum::<Complex64>() * e).collect();
            let nj = (l / first.vert.len_f64()).round() as usize;
            let consecutive = b - a == nj && tiles.tiles[a..b].iter().enumerate().all(|(j, t)| t.spatial.vert.position == first.vert.position + j as i64);
            if consecutive {
                // Shifting the centre by j·|J| multiplies term y by e^{2πi·j·y/n_j}.
                let mut buf = vec![Complex64::new(0.0, 0.0); nj];
                for (y, v) in g.iter().enumerate() {
                    buf[y % nj] += v;
                }
                planner.plan_fft_inverse(nj).process(&mut buf);
                for (o, v) in out[a..b].iter_mut().zip(&buf) {
                    *o = v.norm_sqr() * scale;
                }
            } else {
                for (o, t) in out[a..b].iter_mut().zip(&tiles.tiles[a..b]) {
                    let ey = phases(center_of(&t.spatial).1 - x0, ky0, wy, l);
                    let rows = z.chunks_exact(wx).map(|row| row.iter().zip(&ex).map(|(p, q)| p * q).sum::<Complex64>());
                    let acc: Complex64 = rows.zip(&ey).map(|(p, q)| p * q).sum();
                    *o = acc.norm_sqr() * scale;
                }
            }
            a = b;
        }
        start = end;
    }
    Ok(out)
}

/// `e^{2πi·pos·(k₀+m)/L}` for `m = 0..len`.
fn phases(pos: f64, k0: i64, len: usize, l: f64) -> Vec<Complex64> {
    let t = pos / l;
    (0..len).map(|m| Complex64::from_polar(1.0, 2.0 * PI * (t * (k0 + m as i64) as f64).rem_euclid(1.0))).collect()
}

/// Calls `each` with every grid index in `R`, wrapping periodically.
fn visit_periodic(p: &Parallelogram, grid: &Grid, mut each: impl FnMut(usize)) {
    let n = grid.n as i64;
    let h = grid.cell();
    let half = 0.5 * grid.length;
    let s = p.slope.to_f64();
    let first = |v: f64| ((v + half) / h).ceil() as i64;
    for i in first(p.base.lo_f64())..first(p.base.hi_f64()) {
        let x = -half + i as f64 * h;
        for j in first(s * x + p.vert.lo_f64())..first(s * x + p.vert.hi_f64()) {
            each((j.rem_euclid(n) * n + i.rem_euclid(n)) as usize);
        }
    }
}

/// `Δ_T² = Σ_t a_t 1_{R_t}/|R_t|` on the grid, returned as its square root.
pub fn square_from_coefficients(tiles: &TileSet, coeffs: &[f64]) -> GridFunction {
    let grid = tiles.grid();
    let mut acc = vec![0.0f64; grid.n * grid.n];
    for (t, a) in tiles.tiles.iter().zip(coeffs) {
        if *a == 0.0 {
            continue;
        }
        let v = a / t.spatial.area_f64();
        visit_periodic(&t.spatial, &grid, |k| acc[k] += v);
    }
    GridFunction { grid, data: acc.into_iter().map(|x| Complex64::new(x.sqrt(), 0.0)).collect() }
}

/// `(‖Δ_T f‖_p, Δ_T f)`.
pub fn intrinsic_square_function(f: &GridFunction, tiles: &TileSet, params: &PacketParams, p: f64) -> Result<(f64, GridFunction)> {
    let a = coefficients(f, tiles, params)?;
    let amp = square_from_coefficients(tiles, &a);
    Ok((amp.norm_lp(p), amp))
}

/// `a_R = Σ_{t: R_t = R} a_t`.
pub fn carleson_sequence(tiles: &TileSet, coeffs: &[f64]) -> CarlesonSequence {
    let mut sums: std::collections::BTreeMap<Parallelogram, f64> = std::collections::BTreeMap::new();
    for (t, a) in tiles.tiles.iter().zip(coeffs) {
        *sums.entry(t.spatial).or_default() += a;
    }
    let mut out = CarlesonSequence::new();
    for (r, v) in sums {
        out.insert(r, v).expect("coefficients are nonnegative");
    }
    out
}

/// `Σ_t a_t(f) / (|sh(cover)|·‖f‖_∞²)` for tiles subordinate to a single-slope cover.
pub fn local_orthogonality_check(tiles: &TileSet, cover: &ParallelogramCollection, f: &GridFunction, params: &PacketParams) -> Result<f64> {
    if tiles.is_empty() {
        return Ok(0.0);
    }
    if cover.single_slope().is_none() {
        return Err(Error::invalid("cover must be nonempty and single-slope"));
    }
    let boxes: Vec<_> = cover.iter().map(Parallelogram::to_box).collect();
    for t in &tiles.tiles {
        let b = t.spatial.to_box();
        if !boxes.iter().any(|c| b.is_within(c)) {
            return Err(Error::invalid("tile is not subordinate to the cover"));
        }
    }
    let a = coefficients(f, tiles, params)?;
    let sup = f.max_abs();
    let denom = shadow_area(cover) * sup * sup;
    Ok(if denom == 0.0 { 0.0 } else { a.iter().sum::<f64>() / denom })
}

/// Lattice frequencies `(k_x, k_y)`, `ν = k/L`, inside `region`.
fn region_lattice(region: &FreqRegion, grid: &Grid) -> Vec<(i64, i64)> {
    let (o, e1, e2, (a0, a1), (b0, b1)) = region.frame();
    let corners = [(a0, b0), (a0, b1), (a1, b0), (a1, b1)].map(|(a, b)| (o.0 + a * e1.0 + b * e2.0, o.1 + a * e1.1 + b * e2.1));
    let l = grid.length;
    let half = (grid.n / 2) as i64;
    let span = |f: fn(&(f64, f64)) -> f64| {
        let lo = corners.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = corners.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        ((lo * l).ceil() as i64).max(-half)..=((hi * l).floor() as i64).min(half - 1)
    };
    let ys = span(|c| c.1);
    let mut out = Vec::new();
    for ky in ys {
        let y = ky as f64 / l;
        // Row `y` meets the frame box in an x-interval cut out by two slabs.
        let (mut lo, mut hi) = (-(half as f64), (half - 1) as f64);
        for (e, (c0, c1)) in [(e1, (a0, a1)), (e2, (b0, b1))] {
            let off = (y - o.1) * e.1 - o.0 * e.0;
            if e.0.abs() < 1e-15 {
                if off < c0 - 1e-12 || off > c1 + 1e-12 {
                    lo = f64::INFINITY;
                }
                continue;
            }
            let (p, q) = ((c0 - off) / e.0, (c1 - off) / e.0);
            lo = lo.max(p.min(q) * l - 1.0);
            hi = hi.min(p.max(q) * l + 1.0);
        }
        if lo > hi {
            continue;
        }
        for kx in (lo.ceil() as i64).max(-half)..=(hi.floor() as i64).min(half - 1) {
            if region.contains((kx as f64 / l, y)) {
                out.push((kx, ky));
            }
        }
    }
    out
}

/// Largest number of distinct frequency components containing one lattice point.
pub fn frequency_overlap(tiles: &TileSet) -> usize {
    let grid = tiles.grid();
    let n = grid.n;
    let mut count = vec![0u16; n * n];
    for r in tiles.components() {
        for (kx, ky) in region_lattice(&r, &grid) {
            count[grid.slot(ky) * n + grid.slot(kx)] += 1;
        }
    }
    count.into_iter().max().unwrap_or(0) as usize
}

/// Lattice slots covered by at least one frequency component, ascending.
pub fn spectral_support(tiles: &TileSet) -> Vec<usize> {
    let grid = tiles.grid();
    let mut slots: Vec<usize> = tiles.components().iter().flat_map(|r| region_lattice(r, &grid)).map(|(kx, ky)| grid.slot(ky) * grid.n + grid.slot(kx)).collect();
    slots.sort_unstable();
    slots.dedup();
    slots
}

/// Spectrum of a random function with independent Gaussian coefficients on
/// `support` (see [`spectral_support`]), scaled to `‖f‖₂ = 1`.
pub fn random_spectrum(grid: Grid, support: &[usize], rng: &mut impl rand::Rng) -> GridFunction {
    let mut hat = GridFunction::zeros(grid);
    let mut e = 0.0;
    for &slot in support {
        let z = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        e += z.norm_sqr();
        hat.data[slot] = z;
    }
    // The transform is unitary on samples, so ‖f‖₂ = h·(Σ|F|²)^{1/2}.
    if e > 0.0 {
        let c = 1.0 / (grid.cell() * f64::sqrt(e));
        for &slot in support {
            hat.data[slot] *= c;
        }
    }
    hat
}

/// One rectangle per arc, centred at radius `rho` on the arc's centre ray, with
/// radial side 2 and the largest dyadic tangential side below `0.8·(ρ−1)·|ω|`.
pub fn inscribed_rectangles(arcs: &[Arc], rho: f64) -> Result<Vec<FreqRectangle>> {
    if !(rho > 1.0 && rho.is_finite()) {
        return Err(Error::invalid("radius must exceed 1"));
    }
    arcs.iter()
        .map(|a| {
            let u = unit_perp(a.center.to_f64());
            let side = (0.8 * (rho - 1.0) * a.width()).log2().floor().exp2();
            FreqRectangle::new(a.center, (rho * u.0, rho * u.1), (side, 2.0))
        })
        .collect()
}

/// Energy fraction of `packet` outside the dilate `d·R_t` about its centre, on the torus.
pub fn spatial_tail(packet: &GridFunction, t: &Tile, dilation: f64) -> f64 {
    let grid = packet.grid;
    let (li, lj) = (t.spatial.base.len_f64(), t.spatial.vert.len_f64());
    let c = center_of(&t.spatial);
    let s = t.slope().to_f64();
    let l = grid.length;
    let wrap = |x: f64| x - l * (x / l).round();
    let mut inside = 0.0;
    let mut total = 0.0;
    for (k, z) in packet.data.iter().enumerate() {
        let (x, y) = (grid.coord(k % grid.n), grid.coord(k / grid.n));
        let dx = wrap(x - c.0);
        let dy = wrap(y - c.1 - s * dx);
        let e = z.norm_sqr();
        total += e;
        if dx.abs() <= 0.5 * dilation * li && dy.abs() <= 0.5 * dilation * lj {
            inside += e;
        }
    }
    (total - inside) / total
}

/// `sup_x |R|^{1/2}(1 + |u₁|)^M(1 + |u₂|)^M|φ(x)|` in the sheared frame of `R_t`.
pub fn adaptation_constant(packet: &GridFunction, t: &Tile, order: u32) -> f64 {
    let grid = packet.grid;
    let (li, lj) = (t.spatial.base.len_f64(), t.spatial.vert.len_f64());
    let c = center_of(&t.spatial);
    let s = t.slope().to_f64();
    let l = grid.length;
    let wrap = |x: f64| x - l * (x / l).round();
    let area = t.spatial.area_f64().sqrt();
    packet
        .data
        .iter()
        .enumerate()
        .map(|(k, z)| {
            let (x, y) = (grid.coord(k % grid.n), grid.coord(k / grid.n));
            let dx = wrap(x - c.0);
            let dy = wrap(y - c.1 - s * dx);
            area * ((1.0 + (dx / li).abs()) * (1.0 + (dy / lj).abs())).powi(order as i32) * z.norm()
        })
        .fold(0.0, f64::max)
}

/// `|R_t|·|Ω_t|` with the region area sampled at `res²` points.
pub fn uncertainty_product(t: &Tile, res: usize) -> f64 {
    t.spatial.area_f64() * t.freq.area(res)
}

/// A random function with independent Gaussian Fourier coefficients on the
/// lattice points `0 < |ν| < ν_max`, normalized to `‖f‖₂ = 1`.
pub fn random_band_limited(grid: Grid, nu_max: f64, rng: &mut impl rand::Rng) -> GridFunction {
    let n = grid.n;
    let mut hat = GridFunction::zeros(grid);
    for r in 0..n {
        for c in 0..n {
            let nu = (nu_of(&grid, c), nu_of(&grid, r));
            let m = nu.0.hypot(nu.1);
            if m > 0.0 && m < nu_max {
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

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn grid() -> Grid {
        Grid::new(256, 16.0).unwrap()
    }

    #[test]
    fn arcs_partition_slopes() {
        let arcs = cone_arcs(8).unwrap();
        assert_eq!(arcs.len(), 8);
        for w in arcs.windows(2) {
            assert_eq!(w[0].plus, w[1].minus);
        }
        let wide = Arc::new(Slope::new(-1, 0).unwrap(), Slope::ZERO, Slope::new(1, 0).unwrap()).unwrap();
        assert!((wide.width() - FRAC_PI_2).abs() < 1e-15);
        assert_eq!(wide.ell(), 0);
    }

    #[test]
    fn smooth_tiles_have_fixed_eccentricity() {
        let arcs = cone_arcs(4).unwrap();
        let ts = smooth_cone_tiles(&arcs, grid()).unwrap();
        assert!(!ts.is_empty());
        for t in &ts.tiles {
            let FreqRegion::Sector { arc, .. } = t.freq else { panic!() };
            assert_eq!(t.spatial.log_eccentricity(), arc.ell());
        }
    }

    #[test]
    fn packet_is_normalized_and_truncated() {
        let arcs = cone_arcs(4).unwrap();
        let ts = smooth_cone_tiles(&arcs, grid()).unwrap();
        let t = ts.tiles[ts.len() / 2];
        let p = canonical_packet(&t, grid(), &PacketParams::default()).unwrap();
        assert!((p.norm_l2() - 1.0).abs() < 1e-12);
        let hat = spectral::forward(&p);
        let g = grid();
        for (k, z) in hat.data.iter().enumerate() {
            if !t.freq.contains((nu_of(&g, k % g.n), nu_of(&g, k / g.n))) {
                assert!(z.norm() < 1e-12);
            }
        }
        let a = coefficients(&p, &ts, &PacketParams::default()).unwrap();
        let own = ts.tiles.iter().position(|u| *u == t).unwrap();
        assert!((a[own] - 1.0).abs() < 1e-10, "{}", a[own]);
    }

    #[test]
    fn zero_function_has_zero_coefficients() {
        let ts = smooth_cone_tiles(&cone_arcs(4).unwrap(), grid()).unwrap();
        let a = coefficients(&GridFunction::zeros(grid()), &ts, &PacketParams::default()).unwrap();
        assert!(a.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn square_function_energy_identity() {
        let ts = smooth_cone_tiles(&cone_arcs(4).unwrap(), grid()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let f = random_band_limited(grid(), 6.0, &mut rng);
        let a = coefficients(&f, &ts, &PacketParams::default()).unwrap();
        let amp = square_from_coefficients(&ts, &a);
        let total: f64 = a.iter().sum();
        assert!((amp.norm_l2().powi(2) - total).abs() <= 1e-12 * total.max(1.0));
    }

    #[test]
    fn whitney_distance_law() {
        let arc = cone_arcs(4).unwrap()[1];
        let k = 3;
        let unit = 8.0 * arc.width();
        for m in [1, 2, 3, -1, -2] {
            let r = FreqRegion::Whitney { arc, k, m };
            let mut seen = 0;
            for i in 0..200 {
                for j in 0..200 {
                    let nu = (-16.0 + 0.16 * i as f64, 0.16 * j as f64);
                    if r.contains(nu) {
                        seen += 1;
                        let d = arc.ray_distance(nu, m > 0) / unit;
                        let mm = m.abs() as f64;
                        assert!(d >= (-mm - 1.0).exp2() / 3.0 - 1e-12 && d <= (1.0 - mm).exp2() / 3.0 + 1e-12);
                    }
                }
            }
            assert!(seen > 0);
        }
    }

    #[test]
    fn rect_pieces_central_region() {
        let r = FreqRectangle::new(Slope::ZERO, (0.0, 0.0), (3.0, 1.5)).unwrap();
        let w00 = FreqRegion::RectPiece { rect: r, k1: 0, k2: 0, side1: 1, side2: 1 };
        assert!(w00.contains((0.0, 0.0)));
        assert!(w00.contains((1.0, 0.5)));
        assert!(!w00.contains((1.01, 0.0)));
        assert!(FreqRectangle::new(Slope::ZERO, (0.0, 0.0), (0.0, 1.0)).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let ts = smooth_cone_tiles(&cone_arcs(2).unwrap(), Grid::new(64, 8.0).unwrap()).unwrap();
        assert_eq!(TileSet::from_json(&ts.to_json()).unwrap(), ts);
    }

    fn sample_box(r: f64, res: usize) -> impl Iterator<Item = (f64, f64)> {
        let h = 2.0 * r / res as f64;
        (0..res * res).map(move |k| (-r + ((k % res) as f64 + 0.5) * h, -r + ((k / res) as f64 + 0.5) * h))
    }

    #[test]
    fn whitney_pieces_cover_sector_with_overlap_at_most_four() {
        let arc = cone_arcs(4).unwrap()[2];
        let k = 2;
        let sector = FreqRegion::Sector { arc, k };
        let pieces = whitney_regions(arc, k, 30);
        let unit = 4.0 * arc.width();
        let mut hit = 0;
        for nu in sample_box(8.0, 400) {
            if !sector.contains(nu) {
                continue;
            }
            let cnt = pieces.iter().filter(|r| r.contains(nu)).count();
            assert!(cnt <= 4);
            let d = arc.ray_distance(nu, false).min(arc.ray_distance(nu, true)) / unit;
            if d > 1e-8 {
                assert!(cnt >= 1, "{nu:?} uncovered");
                hit += 1;
            }
        }
        assert!(hit > 1000);
    }

    #[test]
    fn sector_radii() {
        let arc = cone_arcs(2).unwrap()[1];
        let r = FreqRegion::Sector { arc, k: 1 };
        let u = unit_perp(arc.center.to_f64());
        for (t, inside) in [(0.99, false), (1.01, true), (3.99, true), (4.01, false)] {
            assert_eq!(r.contains((t * u.0, t * u.1)), inside, "{t}");
        }
    }

    #[test]
    fn rect_pieces_cover_with_overlap_at_most_four() {
        let rect = FreqRectangle::new(Slope::new(1, 2).unwrap(), (0.3, 2.0), (2.0, 1.0)).unwrap();
        let mut pieces = Vec::new();
        for k1 in 0..12u32 {
            for k2 in 0..12u32 {
                for side1 in [-1i8, 1] {
                    for side2 in [-1i8, 1] {
                        if (k1 == 0 && side1 < 0) || (k2 == 0 && side2 < 0) {
                            continue;
                        }
                        pieces.push(FreqRegion::RectPiece { rect, k1, k2, side1, side2 });
                    }
                }
            }
        }
        for nu in sample_box(3.0, 300).map(|(x, y)| (x + 0.3, y + 2.0)) {
            let (a, b) = rect.local(nu);
            let margin = (0.5 - (a / 2.0).abs()).min(0.5 - b.abs());
            let cnt = pieces.iter().filter(|r| r.contains(nu)).count();
            assert!(cnt <= 4);
            if margin > 1e-3 {
                assert!(cnt >= 1, "{nu:?}");
            } else if margin < 0.0 {
                assert_eq!(cnt, 0);
            }
        }
        let w00 = FreqRegion::RectPiece { rect, k1: 0, k2: 0, side1: 1, side2: 1 };
        for nu in sample_box(3.0, 200).map(|(x, y)| (x + 0.3, y + 2.0)).filter(|nu| w00.contains(*nu)) {
            let (a, b) = rect.local(nu);
            assert!(1.0 - a.abs() >= 2.0 / 12.0 - 1e-12 && 0.5 - b.abs() >= 1.0 / 12.0 - 1e-12);
        }
    }

    #[test]
    fn axis_parallel_rectangle_gives_dyadic_rectangles() {
        let rect = FreqRectangle::new(Slope::ZERO, (0.0, 3.0), (1.0, 2.0)).unwrap();
        let ts = rect_tiles(&[rect], Grid::new(128, 16.0).unwrap()).unwrap();
        assert!(!ts.is_empty());
        assert!(ts.tiles.iter().all(|t| t.slope() == Slope::ZERO));
    }

    #[test]
    fn single_component_tile_count() {
        let g = grid();
        let arc = cone_arcs(4).unwrap()[1];
        let region = FreqRegion::Whitney { arc, k: 2, m: 0 };
        let tiles = emit([region], &g);
        let (a, b) = region.spatial_scales();
        let per_axis = |s: i32| (g.length / (-(s as f64)).exp2()).round() as usize;
        assert_eq!(tiles.len(), per_axis(a) * per_axis(b));
    }

    #[test]
    fn uncertainty_and_concentration() {
        let g = grid();
        let params = PacketParams::default();
        for ts in [smooth_cone_tiles(&cone_arcs(4).unwrap(), g).unwrap(), whitney_cone_tiles(&cone_arcs(4).unwrap(), g).unwrap()] {
            for r in ts.components() {
                let t = ts.tiles.iter().find(|t| t.freq == r).unwrap();
                assert!(uncertainty_product(t, 200) >= tolerances::UNCERTAINTY_C);
                if t.spatial.base.len_f64() <= g.length / 8.0 {
                    let p = canonical_packet(t, g, &params).unwrap();
                    assert!(spatial_tail(&p, t, 8.0) <= 1e-2);
                    assert!(adaptation_constant(&p, t, params.order).is_finite());
                }
            }
        }
    }

    #[test]
    fn single_tile_square_function() {
        let g = grid();
        let ts = smooth_cone_tiles(&cone_arcs(4).unwrap(), g).unwrap();
        let t = ts.tiles[100];
        let one = TileSet { tiles: vec![t], ..ts.clone() };
        let p = canonical_packet(&t, g, &PacketParams::default()).unwrap();
        let (_, amp) = intrinsic_square_function(&p, &one, &PacketParams::default(), 2.0).unwrap();
        let expect = (1.0 / t.spatial.area_f64()).sqrt();
        let (cx, cy) = t.spatial.center();
        let z = amp.at(g.index_of(cy), g.index_of(cx));
        assert!((z.re - expect).abs() < 1e-9 * expect);
    }

    #[test]
    fn bessel_on_smooth_tiles() {
        let g = grid();
        let ts = smooth_cone_tiles(&cone_arcs(4).unwrap(), g).unwrap();
        let sup = spectral_support(&ts);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let f = random_spectrum(g, &sup, &mut rng);
            let a = coefficients_from_spectrum(&f, &ts, &PacketParams::default()).unwrap();
            assert!(a.iter().sum::<f64>() <= tolerances::BESSEL_C);
        }
        assert!(frequency_overlap(&ts) <= tolerances::TILE_OVERLAP_MAX);
    }

    #[test]
    fn wide_arcs_and_bad_params_rejected() {
        assert!(Arc::new(Slope::new(-1, 0).unwrap(), Slope::ZERO, Slope::new(1, 0).unwrap()).is_ok());
        assert!(Arc::new(Slope::ZERO, Slope::ZERO, Slope::new(1, 0).unwrap()).is_err());
        assert!(PacketParams { order: 2, ..Default::default() }.validate().is_err());
        assert!(cone_arcs(3).is_err());
    }
}
