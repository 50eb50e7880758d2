//! Periodic 2D FFT and the multiplier catalogue.
//!
//! A [`Grid`] samples `[−L/2, L/2)²` with `n` points per axis; frequencies
//! sit on the lattice `ξ = 2πk/L`, `k ∈ [−n/2, n/2)`, stored in FFT order.
//! The transform is unitary for the Riemann norms with cell weight
//! `(L/n)²`, so Plancherel holds exactly up to rounding.

use crate::error::{Error, Result};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n: usize,
    pub length: f64,
}

impl Grid {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::invalid(format!("grid size {n} is not a power of two")));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::invalid("domain length must be positive"));
        }
        Ok(Grid { n, length })
    }

    pub fn cell(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.cell() * self.cell()
    }

    /// Spatial coordinate of sample index `i`.
    pub fn coord(&self, i: usize) -> f64 {
        -0.5 * self.length + i as f64 * self.cell()
    }

    /// Signed lattice index of FFT slot `i`.
    pub fn signed_index(&self, i: usize) -> i64 {
        if i < self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// Angular frequency of FFT slot `i`.
    pub fn freq(&self, i: usize) -> f64 {
        2.0 * PI * self.signed_index(i) as f64 / self.length
    }

    /// FFT slot of the signed lattice index `k`.
    pub fn slot(&self, k: i64) -> usize {
        k.rem_euclid(self.n as i64) as usize
    }

    /// Nearest sample index of a coordinate, wrapped periodically.
    pub fn index_of(&self, x: f64) -> usize {
        let i = ((x + 0.5 * self.length) / self.cell()).round() as i64;
        i.rem_euclid(self.n as i64) as usize
    }
}

/// Samples on a [`Grid`], row-major: `data[row·n + col]` sits at
/// `(coord(col), coord(row))`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    pub grid: Grid,
    pub data: Vec<Complex64>,
}

/// Reductions run over fixed chunks and add the partial sums in order, so
/// results do not depend on the thread count.
const CHUNK: usize = 1 << 12;

fn chunked_sum(data: &[Complex64], f: impl Fn(&Complex64) -> f64 + Sync) -> f64 {
    let parts: Vec<f64> = data.par_chunks(CHUNK).map(|c| c.iter().map(&f).sum()).collect();
    parts.into_iter().sum()
}

const MAGIC: &[u8; 4] = b"DSQF";
const FORMAT_VERSION: u32 = 1;

impl GridFunction {
    pub fn zeros(grid: Grid) -> Self {
        GridFunction { grid, data: vec![Complex64::new(0.0, 0.0); grid.n * grid.n] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> Complex64 + Sync) -> Self {
        let n = grid.n;
        let mut data = vec![Complex64::new(0.0, 0.0); n * n];
        data.par_chunks_mut(n).enumerate().for_each(|(r, row)| {
            let y = grid.coord(r);
            for (c, v) in row.iter_mut().enumerate() {
                *v = f(grid.coord(c), y);
            }
        });
        GridFunction { grid, data }
    }

    pub fn from_real(grid: Grid, f: impl Fn(f64, f64) -> f64 + Sync) -> Self {
        Self::from_fn(grid, |x, y| Complex64::new(f(x, y), 0.0))
    }

    pub fn n(&self) -> usize {
        self.grid.n
    }

    pub fn at(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.grid.n + col]
    }

    pub fn norm_l2(&self) -> f64 {
        let s: f64 = chunked_sum(&self.data, |z| z.norm_sqr());
        (s * self.grid.cell_area()).sqrt()
    }

    pub fn norm_lp(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.max_abs();
        }
        let s: f64 = chunked_sum(&self.data, |z| z.norm().powf(p));
        (s * self.grid.cell_area()).powf(1.0 / p)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.par_iter().map(|z| z.norm()).reduce(|| 0.0, f64::max)
    }

    pub fn inner(&self, other: &GridFunction) -> Complex64 {
        let parts: Vec<Complex64> = self
            .data
            .par_chunks(CHUNK)
            .zip(other.data.par_chunks(CHUNK))
            .map(|(a, b)| a.iter().zip(b).map(|(a, b)| a * b.conj()).sum())
            .collect();
        parts.into_iter().sum::<Complex64>() * self.grid.cell_area()
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64 + Sync) -> Self {
        GridFunction { grid: self.grid, data: self.data.par_iter().map(|&z| f(z)).collect() }
    }

    pub fn abs(&self) -> Self {
        self.map(|z| Complex64::new(z.norm(), 0.0))
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|z| z * c)
    }

    pub fn zip_with(&self, other: &GridFunction, f: impl Fn(Complex64, Complex64) -> Complex64 + Sync) -> Result<Self> {
        check_grid(&self.grid, &other.grid)?;
        let data = self.data.par_iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(GridFunction { grid: self.grid, data })
    }

    pub fn sub(&self, other: &GridFunction) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &GridFunction) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn re(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.re).collect()
    }

    /// Writes the `DSQF` binary format.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.grid.n as u64).to_le_bytes())?;
        w.write_all(&self.grid.length.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.data.len() * 16);
        for z in &self.data {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut head = [0u8; 24];
        r.read_exact(&mut head)?;
        if &head[..4] != MAGIC {
            return Err(Error::invalid("bad magic, expected DSQF"));
        }
        let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::invalid(format!("unsupported DSQF version {version}")));
        }
        let n = u64::from_le_bytes(head[8..16].try_into().unwrap()) as usize;
        let length = f64::from_le_bytes(head[16..24].try_into().unwrap());
        let grid = Grid::new(n, length)?;
        let mut buf = vec![0u8; n * n * 16];
        r.read_exact(&mut buf)?;
        let data = buf
            .chunks_exact(16)
            .map(|c| Complex64::new(f64::from_le_bytes(c[..8].try_into().unwrap()), f64::from_le_bytes(c[8..].try_into().unwrap())))
            .collect();
        Ok(GridFunction { grid, data })
    }
}

fn check_grid(a: &Grid, b: &Grid) -> Result<()> {
    if a != b {
        return Err(Error::GridMismatch(format!("{}x{} on L={} vs {}x{} on L={}", a.n, a.n, a.length, b.n, b.n, b.length)));
    }
    Ok(())
}

fn plans(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    let mut planner = FftPlanner::new();
    (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
}

fn transpose(data: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    out.par_chunks_mut(n).enumerate().for_each(|(r, row)| {
        for (c, v) in row.iter_mut().enumerate() {
            *v = data[c * n + r];
        }
    });
    out
}

fn fft2(data: &mut Vec<Complex64>, n: usize, plan: &Arc<dyn Fft<f64>>) {
    let pass = |d: &mut [Complex64]| {
        d.par_chunks_mut(n).for_each_init(
            || vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()],
            |scratch, row| plan.process_with_scratch(row, scratch),
        );
    };
    pass(data);
    let mut t = transpose(data, n);
    pass(&mut t);
    *data = transpose(&t, n);
    let s = 1.0 / n as f64;
    data.par_iter_mut().for_each(|z| *z *= s);
}

/// Unitary forward transform; slot `(r, c)` holds frequency `(freq(c), freq(r))`.
pub fn forward(f: &GridFunction) -> GridFunction {
    let n = f.grid.n;
    let (fwd, _) = plans(n);
    let mut data = f.data.clone();
    fft2(&mut data, n, &fwd);
    GridFunction { grid: f.grid, data }
}

pub fn inverse(fhat: &GridFunction) -> GridFunction {
    let n = fhat.grid.n;
    let (_, inv) = plans(n);
    let mut data = fhat.data.clone();
    fft2(&mut data, n, &inv);
    GridFunction { grid: fhat.grid, data }
}

/// Transition function `θ(t) = g(t)/(g(t)+g(1−t))`, `g(t) = exp(−1/t)`.
pub fn theta(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / t).exp();
    let b = (-1.0 / (1.0 - t)).exp();
    a / (a + b)
}

/// The bump `β`: 1 on `|x| ≤ 1/2`, 0 on `|x| ≥ 1`.
pub fn beta(x: f64) -> f64 {
    let a = x.abs();
    if a <= 0.5 {
        1.0
    } else if a >= 1.0 {
        0.0
    } else {
        theta((1.0 - a) / 0.5)
    }
}

/// Radial Littlewood–Paley profile: 1 on `[1, 2]`, supported in `[1/2, 4]`.
pub fn psi(r: f64) -> f64 {
    if (1.0..=2.0).contains(&r) {
        1.0
    } else if r <= 0.5 || r >= 4.0 {
        0.0
    } else if r < 1.0 {
        theta((r - 0.5) / 0.5)
    } else {
        theta((4.0 - r) / 2.0)
    }
}

/// A smooth plateau: 1 on `[p0, p1]`, 0 outside `(s0, s1)`, θ-transitions between.
pub fn plateau(r: f64, s0: f64, p0: f64, p1: f64, s1: f64) -> f64 {
    if r <= s0 || r >= s1 {
        0.0
    } else if r < p0 {
        theta((r - s0) / (p0 - s0))
    } else if r > p1 {
        theta((s1 - r) / (s1 - p1))
    } else {
        1.0
    }
}

/// `κ` with `2^{κ−1} < N ≤ 2^κ`.
pub fn kappa_of(n: usize) -> u32 {
    n.next_power_of_two().trailing_zeros()
}

/// Angle in `[0, 2π)`.
fn angle(xi: (f64, f64)) -> f64 {
    let a = xi.1.atan2(xi.0);
    if a < 0.0 {
        a + 2.0 * PI
    } else {
        a
    }
}

/// `x` reduced to `(−π, π]`.
pub fn wrap_angle(x: f64) -> f64 {
    let mut y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    }
    y
}

/// A rotated frequency rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreqRect {
    pub direction: [f64; 2],
    pub center: [f64; 2],
    /// Half-widths along `v` and along `v⊥`.
    pub halfwidths: [f64; 2],
}

impl FreqRect {
    /// Coordinates of `ξ − center` in the frame `(v, v⊥)`.
    pub fn local(&self, xi: (f64, f64)) -> (f64, f64) {
        let [vx, vy] = self.direction;
        let (dx, dy) = (xi.0 - self.center[0], xi.1 - self.center[1]);
        (dx * vx + dy * vy, -dx * vy + dy * vx)
    }

    pub fn validate(&self) -> Result<()> {
        let [vx, vy] = self.direction;
        if ((vx * vx + vy * vy).sqrt() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("rectangle direction must be a unit vector"));
        }
        if !(self.halfwidths[0] > 0.0 && self.halfwidths[1] > 0.0) {
            return Err(Error::invalid("degenerate rectangle"));
        }
        Ok(())
    }
}

/// Declarative frequency multipliers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SymbolSpec {
    Constant { value: f64 },
    /// Smooth cone over the arc `(start, end)` in radians.
    ConeSmooth { start: f64, end: f64 },
    /// Indicator of the open cone over `(start, end)`.
    ConeRough { start: f64, end: f64 },
    LittlewoodPaley { k: i32 },
    /// `1_{ξ·v > 0}`, used for `P_±` with `v = ±e₂`.
    HalfPlane { v: [f64; 2] },
    /// `−i·sgn(ξ·v)`.
    Hilbert { v: [f64; 2] },
    /// `1_{ξ·v > 0}`, the analytic projection `H_v⁺`.
    AnalyticProj { v: [f64; 2] },
    RectRough { rect: FreqRect },
    RectSmooth { rect: FreqRect },
    /// Closed regular `N`-gon with vertices `e^{2πij/N}`.
    Polygon { n: usize },
    /// Closed convex polygon, vertices counter-clockwise.
    PolygonVertices { vertices: Vec<[f64; 2]> },
    /// `m_k`: supported in `A_k`, identically 1 on `a_k`.
    RadialAnnulusPiece { k: i32, kappa: u32 },
    /// `m₀`, the residual `1_P(1 − m_κ − m_P)` for the `N`-gon.
    RadialLow { n: usize },
    /// `m_P`: identically 1 on `||ξ| − 1| ≤ 2^{−2κ−4}`, supported in `||ξ| − 1| < 2^{−2κ−3}`.
    RadialCircle { kappa: u32 },
    /// `β((|ξ| − center)/halfwidth)`.
    RadialBump { center: f64, halfwidth: f64 },
    /// `β_j`, the angular partition of unity around `2πj/N`.
    AngularBump { j: usize, n: usize },
    Product { factors: Vec<SymbolSpec> },
    Sum { terms: Vec<SymbolSpec> },
}

impl SymbolSpec {
    pub fn one() -> Self {
        SymbolSpec::Constant { value: 1.0 }
    }

    pub fn product(factors: Vec<SymbolSpec>) -> Self {
        SymbolSpec::Product { factors }
    }

    pub fn sum(terms: Vec<SymbolSpec>) -> Self {
        SymbolSpec::Sum { terms }
    }

    /// `1 − self`.
    pub fn complement(self) -> Self {
        SymbolSpec::sum(vec![SymbolSpec::one(), SymbolSpec::product(vec![SymbolSpec::Constant { value: -1.0 }, self])])
    }

    /// `m_κ = Σ_{k=−2κ}^{0} m_k`.
    pub fn annulus_sum(kappa: u32) -> Self {
        SymbolSpec::sum((-2 * kappa as i32..=0).map(|k| SymbolSpec::RadialAnnulusPiece { k, kappa }).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: &[f64; 2]| {
            if v[0] == 0.0 && v[1] == 0.0 || !v[0].is_finite() || !v[1].is_finite() {
                Err(Error::invalid("zero direction vector"))
            } else {
                Ok(())
            }
        };
        match self {
            SymbolSpec::Constant { value } if !value.is_finite() => Err(Error::invalid("non-finite constant")),
            SymbolSpec::ConeSmooth { start, end } | SymbolSpec::ConeRough { start, end } => {
                if !(end > start) || end - start > 2.0 * PI {
                    Err(Error::invalid("empty or over-long cone interval"))
                } else {
                    Ok(())
                }
            }
            SymbolSpec::HalfPlane { v } | SymbolSpec::Hilbert { v } | SymbolSpec::AnalyticProj { v } => unit(v),
            SymbolSpec::RectRough { rect } | SymbolSpec::RectSmooth { rect } => rect.validate(),
            SymbolSpec::Polygon { n } | SymbolSpec::RadialLow { n } if *n < 3 => Err(Error::invalid("polygon needs N >= 3")),
            SymbolSpec::PolygonVertices { vertices } if vertices.len() < 3 => Err(Error::invalid("polygon needs 3 vertices")),
            SymbolSpec::RadialAnnulusPiece { k, kappa } if *k > 0 || *k < -2 * *kappa as i32 => {
                Err(Error::invalid("annulus index outside [-2κ, 0]"))
            }
            SymbolSpec::RadialBump { halfwidth, .. } if !(*halfwidth > 0.0) => Err(Error::invalid("non-positive radial width")),
            SymbolSpec::AngularBump { j, n } if *n == 0 || j >= n => Err(Error::invalid("angular bump index out of range")),
            SymbolSpec::Product { factors: v } | SymbolSpec::Sum { terms: v } => v.iter().try_for_each(SymbolSpec::validate),
            _ => Ok(()),
        }
    }

    /// Pointwise value; assumes [`SymbolSpec::validate`] passed.
    pub fn value(&self, xi: (f64, f64)) -> Complex64 {
        let re = |x: f64| Complex64::new(x, 0.0);
        let dot = |v: &[f64; 2]| xi.0 * v[0] + xi.1 * v[1];
        let r = (xi.0 * xi.0 + xi.1 * xi.1).sqrt();
        match self {
            SymbolSpec::Constant { value } => re(*value),
            SymbolSpec::ConeSmooth { start, end } => {
                if r == 0.0 {
                    return re(0.0);
                }
                let c = 0.5 * (start + end);
                re(beta(wrap_angle(angle(xi) - c) / (0.5 * (end - start))))
            }
            SymbolSpec::ConeRough { start, end } => {
                if r == 0.0 {
                    return re(0.0);
                }
                let a = angle(xi);
                let m = ((start - a) / (2.0 * PI)).floor() + 1.0;
                let t = a + 2.0 * PI * m;
                re(f64::from(t > *start && t < *end))
            }
            SymbolSpec::LittlewoodPaley { k } => re(psi(r * (-(*k as f64)).exp2())),
            SymbolSpec::HalfPlane { v } | SymbolSpec::AnalyticProj { v } => re(f64::from(dot(v) > 0.0)),
            SymbolSpec::Hilbert { v } => {
                let d = dot(v);
                if d > 0.0 {
                    Complex64::new(0.0, -1.0)
                } else if d < 0.0 {
                    Complex64::new(0.0, 1.0)
                } else {
                    re(0.0)
                }
            }
            SymbolSpec::RectRough { rect } => {
                let (u, w) = rect.local(xi);
                re(f64::from(u.abs() < rect.halfwidths[0] && w.abs() < rect.halfwidths[1]))
            }
            SymbolSpec::RectSmooth { rect } => {
                let (u, w) = rect.local(xi);
                re(beta(u / rect.halfwidths[0]) * beta(w / rect.halfwidths[1]))
            }
            SymbolSpec::Polygon { n } => re(f64::from(in_regular_polygon(*n, xi))),
            SymbolSpec::PolygonVertices { vertices } => {
                let m = vertices.len();
                let inside = (0..m).all(|i| {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % m];
                    (b[0] - a[0]) * (xi.1 - a[1]) - (b[1] - a[1]) * (xi.0 - a[0]) >= 0.0
                });
                re(f64::from(inside))
            }
            SymbolSpec::RadialAnnulusPiece { k, kappa } => re(annulus_piece(*k, *kappa, r)),
            SymbolSpec::RadialLow { n } => {
                if !in_regular_polygon(*n, xi) {
                    return re(0.0);
                }
                let kappa = kappa_of(*n);
                let mk: f64 = (-2 * kappa as i32..=0).map(|k| annulus_piece(k, kappa, r)).sum();
                re(1.0 - mk - circle_piece(kappa, r))
            }
            SymbolSpec::RadialCircle { kappa } => re(circle_piece(*kappa, r)),
            SymbolSpec::RadialBump { center, halfwidth } => re(beta((r - center) / halfwidth)),
            SymbolSpec::AngularBump { j, n } => re(angular_bump(*j, *n, angle(xi))),
            SymbolSpec::Product { factors } => factors.iter().map(|f| f.value(xi)).product(),
            SymbolSpec::Sum { terms } => terms.iter().map(|f| f.value(xi)).sum(),
        }
    }
}

fn in_regular_polygon(n: usize, xi: (f64, f64)) -> bool {
    let inr = (PI / n as f64).cos();
    (0..n).all(|j| {
        let a = (2 * j + 1) as f64 * PI / n as f64;
        xi.0 * a.cos() + xi.1 * a.sin() <= inr
    })
}

fn annulus_piece(k: i32, kappa: u32, r: f64) -> f64 {
    let eps = (-2.0 * kappa as f64).exp2();
    let w = |e: i32| (e as f64).exp2() * eps;
    plateau(r, 1.0 - w(-k - 1), 1.0 - w(-k - 2), 1.0 - w(-k - 4), 1.0 - w(-k - 5))
}

fn circle_piece(kappa: u32, r: f64) -> f64 {
    let a = (-(2.0 * kappa as f64) - 3.0).exp2();
    plateau(r, 1.0 - a, 1.0 - 0.5 * a, 1.0 + 0.5 * a, 1.0 + a)
}

/// Angular radius of the supports of `β_j`.
pub fn angular_radius(n: usize) -> f64 {
    1.5 * PI / n as f64
}

fn angular_bump(j: usize, n: usize, a: f64) -> f64 {
    let r = angular_radius(n);
    let b = |i: usize| beta(wrap_angle(a - 2.0 * PI * i as f64 / n as f64) / r);
    // Only neighbours of the nearest centre can be nonzero.
    let near = ((a / (2.0 * PI / n as f64)).round() as i64).rem_euclid(n as i64) as usize;
    let mut total = 0.0;
    for d in [n - 2 % n, n - 1, 0, 1, 2 % n] {
        let i = (near + d) % n;
        total += b(i);
    }
    if n < 5 {
        total = (0..n).map(b).sum();
    }
    b(j) / total
}

/// Pointwise value after validation.
pub fn eval_symbol(spec: &SymbolSpec, xi: (f64, f64)) -> Result<Complex64> {
    spec.validate()?;
    Ok(spec.value(xi))
}

/// The symbol sampled on the frequency lattice, in FFT order.
pub fn symbol_on_lattice(spec: &SymbolSpec, grid: Grid) -> Result<Vec<Complex64>> {
    spec.validate()?;
    let n = grid.n;
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    out.par_chunks_mut(n).enumerate().for_each(|(r, row)| {
        let eta = grid.freq(r);
        for (c, v) in row.iter_mut().enumerate() {
            *v = spec.value((grid.freq(c), eta));
        }
    });
    Ok(out)
}

fn multiply(fhat: &GridFunction, m: &[Complex64]) -> GridFunction {
    GridFunction { grid: fhat.grid, data: fhat.data.par_iter().zip(m).map(|(a, b)| a * b).collect() }
}

pub fn apply(spec: &SymbolSpec, f: &GridFunction) -> Result<GridFunction> {
    let m = symbol_on_lattice(spec, f.grid)?;
    Ok(inverse(&multiply(&forward(f), &m)))
}

/// Applies a symbol to an already transformed input.
pub fn apply_hat(spec: &SymbolSpec, fhat: &GridFunction) -> Result<GridFunction> {
    let m = symbol_on_lattice(spec, fhat.grid)?;
    Ok(inverse(&multiply(fhat, &m)))
}

/// `(Σ_j |apply(spec_j, f)|²)^{1/2}` and its `L^p` norm.
pub fn square_function(specs: &[SymbolSpec], f: &GridFunction, p: f64) -> Result<(f64, GridFunction)> {
    if specs.is_empty() {
        return Err(Error::invalid("square function needs at least one symbol"));
    }
    if p < 1.0 {
        return Err(Error::invalid("p must be at least 1"));
    }
    let fhat = forward(f);
    let mut acc = vec![0f64; f.data.len()];
    for s in specs {
        let g = apply_hat(s, &fhat)?;
        acc.par_iter_mut().zip(&g.data).for_each(|(a, z)| *a += z.norm_sqr());
    }
    let amp = GridFunction { grid: f.grid, data: acc.into_iter().map(|v| Complex64::new(v.sqrt(), 0.0)).collect() };
    Ok((amp.norm_lp(p), amp))
}

/// The three pieces of `T_P = T₀ + T_κ + O_P`.
#[derive(Clone, Debug)]
pub struct PolygonPieces {
    pub low: GridFunction,
    pub annuli: GridFunction,
    pub boundary: GridFunction,
}

/// The symbols `(m₀, m_κ·1_P, m_P·1_P)` of the polygon decomposition.
pub fn polygon_symbols(n: usize) -> Result<[SymbolSpec; 3]> {
    if n < 3 {
        return Err(Error::invalid("polygon needs N >= 3"));
    }
    let kappa = kappa_of(n);
    let poly = SymbolSpec::Polygon { n };
    Ok([
        SymbolSpec::RadialLow { n },
        SymbolSpec::product(vec![SymbolSpec::annulus_sum(kappa), poly.clone()]),
        SymbolSpec::product(vec![SymbolSpec::RadialCircle { kappa }, poly]),
    ])
}

pub fn polygon_decomposition(n: usize, f: &GridFunction) -> Result<PolygonPieces> {
    let [m0, mk, mp] = polygon_symbols(n)?;
    let fhat = forward(f);
    Ok(PolygonPieces { low: apply_hat(&m0, &fhat)?, annuli: apply_hat(&mk, &fhat)?, boundary: apply_hat(&mp, &fhat)? })
}

/// A closed polar box `{r e^{iφ} : r ∈ [r0, r1], φ ∈ [a0, a1]}`.
#[derive(Clone, Copy, Debug)]
pub struct PolarBox {
    pub r0: f64,
    pub r1: f64,
    pub a0: f64,
    pub a1: f64,
}

impl PolarBox {
    fn center(&self) -> (f64, f64) {
        let r = 0.5 * (self.r0 + self.r1);
        let a = 0.5 * (self.a0 + self.a1);
        (r * a.cos(), r * a.sin())
    }

    /// Radius of a disc around [`PolarBox::center`] containing the box.
    fn spread(&self) -> f64 {
        let dr = 0.5 * (self.r1 - self.r0);
        let da = 0.5 * (self.a1 - self.a0);
        let chord = 2.0 * self.r1 * (0.5 * da).sin().abs() + self.r1 * (1.0 - da.cos());
        (dr * dr + chord * chord).sqrt() + dr.min(chord)
    }

    fn sample(&self, i: usize, j: usize, m: usize) -> (f64, f64) {
        let t = |k: usize| (k as f64 + 0.5) / m as f64;
        let r = self.r0 + t(i) * (self.r1 - self.r0);
        let a = self.a0 + t(j) * (self.a1 - self.a0);
        (r * a.cos(), r * a.sin())
    }
}

/// Relation of a disc `D(z, h)` to a polar box, by interval bounds on modulus and argument.
fn disc_vs_box(z: (f64, f64), h: f64, b: &PolarBox) -> Option<bool> {
    let m = (z.0 * z.0 + z.1 * z.1).sqrt();
    let (mlo, mhi) = (m - h, m + h);
    if mhi < b.r0 || mlo > b.r1 {
        return Some(false);
    }
    if m <= h {
        return None;
    }
    let spread = (h / m).min(1.0).asin();
    let mid = 0.5 * (b.a0 + b.a1);
    let half = 0.5 * (b.a1 - b.a0);
    let d = wrap_angle(z.1.atan2(z.0) - mid).abs();
    if d - spread > half {
        return Some(false);
    }
    if d + spread <= half && mlo >= b.r0 && mhi <= b.r1 {
        return Some(true);
    }
    None
}

/// Conservative test for `ξ ∈ A + B` by bisection of `B`.
fn in_sumset(xi: (f64, f64), a: &PolarBox, b: &PolarBox, tol: f64) -> bool {
    let mut stack = vec![*b];
    while let Some(cell) = stack.pop() {
        let c = cell.center();
        let h = cell.spread();
        match disc_vs_box((xi.0 - c.0, xi.1 - c.1), h, a) {
            Some(true) => return true,
            Some(false) => {}
            None if h < tol => return true,
            None => {
                let radial = cell.r1 - cell.r0;
                let tangential = cell.r1 * (cell.a1 - cell.a0);
                if radial >= tangential {
                    let m = 0.5 * (cell.r0 + cell.r1);
                    stack.push(PolarBox { r1: m, ..cell });
                    stack.push(PolarBox { r0: m, ..cell });
                } else {
                    let m = 0.5 * (cell.a0 + cell.a1);
                    stack.push(PolarBox { a1: m, ..cell });
                    stack.push(PolarBox { a0: m, ..cell });
                }
            }
        }
    }
    false
}

/// The sectors `Ω_{j,k}`, annulus `A_k` cut by the support of `β_j`, for the
/// centres `2πj/N` in the first quadrant.
pub fn cordoba_sectors(n: usize, k: i32) -> Result<Vec<PolarBox>> {
    if n < 3 {
        return Err(Error::invalid("Córdoba overlap needs N >= 3"));
    }
    let kappa = kappa_of(n);
    if k > 0 || k < -2 * kappa as i32 {
        return Err(Error::invalid("k outside [-2κ, 0]"));
    }
    let eps = (-2.0 * kappa as f64).exp2();
    let r0 = 1.0 - ((-k - 1) as f64).exp2() * eps;
    let r1 = 1.0 - ((-k - 5) as f64).exp2() * eps;
    let w = angular_radius(n);
    Ok((0..n)
        .map(|j| 2.0 * PI * j as f64 / n as f64)
        .filter(|&a| a < PI - 1e-12)
        .map(|a| PolarBox { r0, r1, a0: a - w, a1: a + w })
        .collect())
}

/// `max_ξ Σ_{j,j'} 1_{Ω_{j,k} + Ω_{j',k}}(ξ)` over ordered pairs of sectors in
/// one quadrant, evaluated at sample points of every sumset.
pub fn cordoba_overlap(n: usize, k: i32) -> Result<usize> {
    let sectors = cordoba_sectors(n, k)?;
    let m = sectors.len();
    let tol = 1e-3 * (sectors[0].r1 - sectors[0].r0);
    let samples = 3;
    let mut points = Vec::new();
    for a in &sectors {
        for b in &sectors {
            for i in 0..samples * samples {
                for j in 0..samples * samples {
                    let p = a.sample(i / samples, i % samples, samples);
                    let q = b.sample(j / samples, j % samples, samples);
                    points.push((p.0 + q.0, p.1 + q.1));
                }
            }
        }
    }
    let centers: Vec<((f64, f64), f64)> = sectors.iter().map(|s| (s.center(), s.spread())).collect();
    let best = points
        .par_iter()
        .map(|&xi| {
            let mut count = 0;
            for a in 0..m {
                for b in 0..m {
                    let (ca, ha) = centers[a];
                    let (cb, hb) = centers[b];
                    let dx = xi.0 - ca.0 - cb.0;
                    let dy = xi.1 - ca.1 - cb.1;
                    if (dx * dx + dy * dy).sqrt() > ha + hb {
                        continue;
                    }
                    if in_sumset(xi, &sectors[a], &sectors[b], tol) {
                        count += 1;
                    }
                }
            }
            count
        })
        .max()
        .unwrap_or(0);
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid {
        Grid::new(n, 2.0 * PI).unwrap()
    }

    #[test]
    fn bump_profiles() {
        assert_eq!(beta(0.0), 1.0);
        assert_eq!(beta(0.5), 1.0);
        assert_eq!(beta(1.0), 0.0);
        assert!((beta(0.75) - 0.5).abs() < 1e-15);
        assert_eq!(psi(1.5), 1.0);
        assert_eq!(psi(4.0), 0.0);
        assert!(psi(0.75) > 0.0 && psi(3.0) > 0.0);
    }

    #[test]
    fn constant_transforms_to_origin() {
        let g = grid(16);
        let f = GridFunction::from_real(g, |_, _| 1.0);
        let fh = forward(&f);
        let total: f64 = fh.data.iter().map(|z| z.norm_sqr()).sum();
        assert!((fh.data[0].norm_sqr() - total).abs() < 1e-12 * total);
    }

    #[test]
    fn exponential_has_single_coefficient() {
        let g = grid(32);
        let f = GridFunction::from_fn(g, |x, y| Complex64::from_polar(1.0, 3.0 * x - 5.0 * y));
        let fh = forward(&f);
        let big: Vec<usize> = (0..fh.data.len()).filter(|&i| fh.data[i].norm() > 1e-9).collect();
        assert_eq!(big, vec![g.slot(-5) * 32 + g.slot(3)]);
    }

    #[test]
    fn symbol_examples() {
        let v = SymbolSpec::Polygon { n: 4 }.value((0.4, 0.4));
        assert_eq!(v.re, 1.0);
        let h = SymbolSpec::Hilbert { v: [1.0, 0.0] }.value((3.0, 7.0));
        assert_eq!(h, Complex64::new(0.0, -1.0));
        let c = SymbolSpec::ConeSmooth { start: 0.3, end: 0.9 }.value((0.6f64.cos(), 0.6f64.sin()));
        assert_eq!(c.re, 1.0);
        assert!(eval_symbol(&SymbolSpec::ConeRough { start: 1.0, end: 1.0 }, (1.0, 0.0)).is_err());
        assert!(eval_symbol(&SymbolSpec::Hilbert { v: [0.0, 0.0] }, (1.0, 0.0)).is_err());
    }

    #[test]
    fn angular_bumps_partition_unity() {
        for n in [3usize, 4, 7, 16, 64] {
            for t in 0..97 {
                let a = t as f64 * 0.0651;
                let s: f64 = (0..n).map(|j| SymbolSpec::AngularBump { j, n }.value((a.cos(), a.sin())).re).sum();
                assert!((s - 1.0).abs() < 1e-14, "n={n} a={a} s={s}");
            }
        }
    }

    #[test]
    fn binary_roundtrip() {
        let g = grid(8);
        let f = GridFunction::from_fn(g, |x, y| Complex64::new(x, y * y));
        let mut buf = Vec::new();
        f.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"DSQF");
        assert_eq!(buf.len(), 24 + 64 * 16);
        assert_eq!(GridFunction::read_from(&mut buf.as_slice()).unwrap(), f);
    }

    #[test]
    fn cordoba_small() {
        let c = cordoba_overlap(4, 0).unwrap();
        assert!((1..=32).contains(&c));
    }
}
