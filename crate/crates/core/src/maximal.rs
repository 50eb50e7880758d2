//! Directional and collection maximal operators, weighted constants and the
//! truncated directional singular integral, all on sampled grids.
//!
//! Line operators reduce to one-dimensional work along grid-resolved lines:
//! for a direction `(1, s)` with `|s| ≤ 1` every column is resampled at
//! `y + s·x` by linear interpolation, the operator runs along rows of the
//! sheared array, and the result is interpolated back. Steeper directions go
//! through the transpose. Functions vanish outside the sampled square.

use crate::error::{Error, Result};
use crate::geometry::{KahanSum, ParallelogramCollection, Slope};
use crate::spectral::{Grid, GridFunction};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use std::f64::consts::PI;

/// A finite set of unit vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionSet {
    vectors: Vec<(f64, f64)>,
}

impl DirectionSet {
    pub fn new(vectors: Vec<(f64, f64)>) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::invalid("direction set is empty"));
        }
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(vectors.len());
        for (x, y) in vectors {
            let r = x.hypot(y);
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::invalid("direction must be a nonzero finite vector"));
            }
            let v = (x / r, y / r);
            if out.iter().any(|u| (u.0 - v.0).abs() < 1e-12 && (u.1 - v.1).abs() < 1e-12) {
                return Err(Error::invalid("directions must be distinct"));
            }
            out.push(v);
        }
        Ok(DirectionSet { vectors: out })
    }

    /// `(1, s)/|(1, s)|` for each slope.
    pub fn from_slopes(slopes: &[Slope]) -> Result<Self> {
        Self::new(slopes.iter().map(|s| (1.0, s.to_f64())).collect())
    }

    /// `exp(2πij/N)`, `j = 0..N`.
    pub fn uniform(n: usize) -> Result<Self> {
        Self::new((0..n).map(|j| (2.0 * PI * j as f64 / n as f64).sin_cos()).map(|(s, c)| (c, s)).collect())
    }

    pub fn vectors(&self) -> &[(f64, f64)] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Linear interpolation of `u` (sampled at rows `j`) at fractional row `t`, zero outside.
fn lerp_at(u: &[Complex64], t: f64) -> Complex64 {
    let j0 = t.floor();
    let fr = t - j0;
    let j0 = j0 as i64;
    let get = |j: i64| if j >= 0 && (j as usize) < u.len() { u[j as usize] } else { Complex64::new(0.0, 0.0) };
    get(j0) * (1.0 - fr) + get(j0 + 1) * fr
}

fn transpose(data: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    for r in 0..n {
        for c in 0..n {
            out[c * n + r] = data[r * n + c];
        }
    }
    out
}

/// Runs `op` along every line of direction `v`. `op` receives the samples of
/// one line at unit column spacing and the arclength of one step.
fn along_lines<F>(f: &GridFunction, v: (f64, f64), op: F) -> GridFunction
where
    F: Fn(&[Complex64], f64) -> Vec<Complex64> + Sync,
{
    let n = f.grid.n;
    let h = f.grid.cell();
    let steep = v.1.abs() > v.0.abs();
    let s = if steep { v.0 / v.1 } else { v.1 / v.0 };
    let data = if steep { transpose(&f.data, n) } else { f.data.clone() };
    let step = h * (1.0 + s * s).sqrt();
    let out = if s == 0.0 {
        let rows: Vec<Vec<Complex64>> = data.par_chunks(n).map(|row| op(row, step)).collect();
        rows.concat()
    } else {
        // Column `c` of the sheared array holds f(x_c, η + s·x_c).
        let cols: Vec<Vec<Complex64>> = (0..n)
            .into_par_iter()
            .map(|c| {
                let col: Vec<Complex64> = (0..n).map(|r| data[r * n + c]).collect();
                let shift = s * f.grid.coord(c) / h;
                (0..n).map(|k| lerp_at(&col, k as f64 + shift)).collect()
            })
            .collect();
        let sheared_rows: Vec<Vec<Complex64>> = (0..n)
            .into_par_iter()
            .map(|k| {
                let row: Vec<Complex64> = (0..n).map(|c| cols[c][k]).collect();
                op(&row, step)
            })
            .collect();
        let back: Vec<Vec<Complex64>> = (0..n)
            .into_par_iter()
            .map(|c| {
                let col: Vec<Complex64> = (0..n).map(|k| sheared_rows[k][c]).collect();
                let shift = s * f.grid.coord(c) / h;
                (0..n).map(|r| lerp_at(&col, r as f64 - shift)).collect()
            })
            .collect();
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for (c, col) in back.iter().enumerate() {
            for (r, z) in col.iter().enumerate() {
                out[r * n + c] = *z;
            }
        }
        out
    };
    let data = if steep { transpose(&out, n) } else { out };
    GridFunction { grid: f.grid, data }
}

/// Half-widths (in samples) of the averaging windows: the point itself, then
/// `rungs_per_octave` geometric steps per doubling up to the domain width.
fn ladder(n: usize, rungs_per_octave: u32) -> Vec<usize> {
    let mut out = vec![0usize];
    let total = (n as f64).log2() * rungs_per_octave as f64;
    for k in 0..=total.round() as usize {
        let m = (k as f64 / rungs_per_octave as f64).exp2().round() as usize;
        if m > *out.last().unwrap() {
            out.push(m);
        }
    }
    out
}

fn line_max(row: &[Complex64], rungs: &[usize]) -> Vec<Complex64> {
    let n = row.len();
    let mut pre = vec![0.0; n + 1];
    for (i, z) in row.iter().enumerate() {
        pre[i + 1] = pre[i] + z.re;
    }
    (0..n)
        .map(|i| {
            let mut best = row[i].re;
            for &m in &rungs[1..] {
                let lo = i.saturating_sub(m);
                let hi = (i + m + 1).min(n);
                let avg = (pre[hi] - pre[lo]) / (2 * m + 1) as f64;
                best = best.max(avg);
            }
            Complex64::new(best, 0.0)
        })
        .collect()
}

fn finish_max(mut out: GridFunction, absf: &GridFunction) -> GridFunction {
    // The zero-radius rung is |f| itself; interpolation must not undercut it.
    for (o, a) in out.data.iter_mut().zip(&absf.data) {
        *o = Complex64::new(o.re.max(a.re), 0.0);
    }
    out
}

/// `M_v f` over the dyadic radius ladder.
pub fn directional_max(f: &GridFunction, v: (f64, f64)) -> GridFunction {
    directional_max_with(f, v, 1)
}

/// `M_v f` with `rungs_per_octave` radii per doubling.
pub fn directional_max_with(f: &GridFunction, v: (f64, f64), rungs_per_octave: u32) -> GridFunction {
    let absf = f.abs();
    let rungs = ladder(f.grid.n, rungs_per_octave.max(1));
    let out = along_lines(&absf, v, |row, _| line_max(row, &rungs));
    finish_max(out, &absf)
}

fn pointwise_max(a: &mut GridFunction, b: &GridFunction) {
    for (x, y) in a.data.iter_mut().zip(&b.data) {
        if y.re > x.re {
            *x = *y;
        }
    }
}

/// `M_V f = max_{v∈V} M_v f`.
pub fn max_over_directions(f: &GridFunction, dirs: &DirectionSet) -> GridFunction {
    let parts: Vec<GridFunction> = dirs.vectors().par_iter().map(|v| directional_max(f, *v)).collect();
    let mut out = parts[0].clone();
    for p in &parts[1..] {
        pointwise_max(&mut out, p);
    }
    out
}

/// Sample index range `[i0, i1)` of coordinates in `[lo, hi)`.
fn sample_range(grid: &Grid, lo: f64, hi: f64) -> (usize, usize) {
    let h = grid.cell();
    let idx = |x: f64| ((x + 0.5 * grid.length) / h).ceil().clamp(0.0, grid.n as f64) as usize;
    (idx(lo), idx(hi))
}

/// `M_C f(x) = max_{R∋x} ⟨|f|⟩_R` with averages over the samples inside `R`.
pub fn collection_max(f: &GridFunction, c: &ParallelogramCollection) -> Result<GridFunction> {
    if c.is_empty() {
        return Err(Error::invalid("collection maximal operator needs a nonempty collection"));
    }
    let grid = f.grid;
    let n = grid.n;
    let absf = f.abs();
    let members = c.to_vec();
    let visit = |r: &crate::geometry::Parallelogram, mut each: Box<dyn FnMut(usize) + '_>| {
        let s = r.slope.to_f64();
        let (i0, i1) = sample_range(&grid, r.base.lo_f64(), r.base.hi_f64());
        for i in i0..i1 {
            let x = grid.coord(i);
            let (j0, j1) = sample_range(&grid, s * x + r.vert.lo_f64(), s * x + r.vert.hi_f64());
            for j in j0..j1 {
                each(j * n + i);
            }
        }
    };
    let avgs: Vec<Option<f64>> = members
        .par_iter()
        .map(|r| {
            let mut sum = 0.0;
            let mut count = 0usize;
            visit(r, Box::new(|k| {
                sum += absf.data[k].re;
                count += 1;
            }));
            (count > 0).then(|| sum / count as f64)
        })
        .collect();
    let mut out = vec![0.0f64; n * n];
    for (r, a) in members.iter().zip(avgs) {
        if let Some(a) = a {
            visit(r, Box::new(|k| out[k] = out[k].max(a)));
        }
    }
    Ok(GridFunction { grid, data: out.into_iter().map(|x| Complex64::new(x, 0.0)).collect() })
}

pub const VERTICAL: (f64, f64) = (0.0, 1.0);

/// `M_{S;2} f = M_V(M_{(0,1)} f)`.
pub fn strong_composition(f: &GridFunction, dirs: &DirectionSet) -> GridFunction {
    max_over_directions(&directional_max(f, VERTICAL), dirs)
}

/// `M̃_V w = M_V M_V M_{(0,1)} w`, with the vertical operator alone in the
/// innermost slot since experiments use near-horizontal direction sets.
pub fn tilde_max(w: &GridFunction, dirs: &DirectionSet) -> GridFunction {
    max_over_directions(&strong_composition(w, dirs), dirs)
}

/// `sup_x M_{S;2}w / u`; `+∞` when `u` vanishes where the numerator does not.
pub fn two_weight_constant(w: &GridFunction, u: &GridFunction, dirs: &DirectionSet) -> f64 {
    let m = strong_composition(w, dirs);
    ratio_sup(&m, u)
}

fn ratio_sup(num: &GridFunction, den: &GridFunction) -> f64 {
    num.data
        .iter()
        .zip(&den.data)
        .map(|(a, b)| {
            if a.re <= 0.0 {
                0.0
            } else if b.re <= 0.0 {
                f64::INFINITY
            } else {
                a.re / b.re
            }
        })
        .fold(0.0, f64::max)
}

/// `[w]_{A₁^V} = ‖M_V w / w‖_∞`.
pub fn a1_constant(w: &GridFunction, dirs: &DirectionSet) -> f64 {
    ratio_sup(&max_over_directions(w, dirs), w)
}

/// Empirical `‖M_{S;2}‖_{p→p}` as the largest ratio over the given inputs.
pub fn strong_norm_estimate(inputs: &[GridFunction], dirs: &DirectionSet, p: f64) -> f64 {
    inputs
        .iter()
        .filter(|g| g.norm_lp(p) > 0.0)
        .map(|g| strong_composition(g, dirs).norm_lp(p) / g.norm_lp(p))
        .fold(1.0, f64::max)
}

/// `w = Σ_{ℓ≥0} M_{S;2}^{[ℓ]} g / (2B)^ℓ` for a norm bound `B ≥ 1`. Summation
/// stops once the tail bound `(2B)^{−ℓ}‖g‖_∞/(2B − 1)` falls below
/// `tol·min_{w>0} w`, or after `max_terms` terms.
pub fn series_weight(g: &GridFunction, dirs: &DirectionSet, bound: f64, tol: f64, max_terms: usize) -> GridFunction {
    let ratio = 2.0 * bound.max(1.0);
    let gmax = g.max_abs();
    let mut term = g.abs();
    let mut w = term.clone();
    for l in 1..max_terms {
        let wmin = w.data.iter().map(|z| z.re).filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);
        if ratio.powi(-(l as i32)) * gmax / (ratio - 1.0) <= tol * wmin {
            break;
        }
        term = strong_composition(&term, dirs);
        let c = ratio.powi(l as i32);
        for (a, b) in w.data.iter_mut().zip(&term.data) {
            *a += b / c;
        }
    }
    w
}

/// `sup_λ λ·(μ{F > λ})^{1/q}` with `μ` the sample measure weighted by `w`.
pub fn weak_norm(fval: &GridFunction, w: Option<&GridFunction>, q: f64) -> f64 {
    let cell = fval.grid.cell_area();
    let mut pts: Vec<(f64, f64)> = fval
        .data
        .iter()
        .enumerate()
        .map(|(k, z)| (z.norm(), w.map_or(1.0, |w| w.data[k].re) * cell))
        .collect();
    pts.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut mass = KahanSum::default();
    let mut best = 0.0f64;
    let mut k = 0;
    while k < pts.len() {
        let v = pts[k].0;
        while k < pts.len() && pts[k].0 == v {
            mass.add(pts[k].1);
            k += 1;
        }
        best = best.max(v * mass.value().powf(1.0 / q));
    }
    best
}

/// `λ²·w{M_V f > λ}` over `log₂N·∫|f|²·M̃_V w`, maximized in `λ`.
pub fn fefferman_stein_ratio(f: &GridFunction, w: &GridFunction, dirs: &DirectionSet) -> f64 {
    let mf = max_over_directions(f, dirs);
    let lhs = weak_norm(&mf, Some(w), 1.0 / 0.5).powi(2);
    let mw = tilde_max(w, dirs);
    let mut s = KahanSum::default();
    for (a, b) in f.data.iter().zip(&mw.data) {
        s.add(a.norm_sqr() * b.re);
    }
    let rhs = (dirs.len().max(2) as f64).log2() * s.value() * f.grid.cell_area();
    if rhs == 0.0 {
        0.0
    } else {
        lhs / rhs
    }
}

/// One-dimensional odd kernel for the directional singular integral.
#[derive(Clone, Copy, Debug)]
pub enum Kernel {
    /// `1/(πt)`.
    Hilbert,
    Custom(fn(f64) -> f64),
}

impl Kernel {
    /// `∫_a^b K(t) dt` for `0 < a < b`.
    fn cell_integral(&self, a: f64, b: f64) -> f64 {
        match self {
            Kernel::Hilbert => (b / a).ln() / PI,
            Kernel::Custom(k) => {
                let m = 16;
                let h = (b - a) / m as f64;
                let mut s = k(a) + k(b);
                for i in 1..m {
                    s += if i % 2 == 1 { 4.0 } else { 2.0 } * k(a + i as f64 * h);
                }
                s * h / 3.0
            }
        }
    }
}

/// `T_v f = sup_ε |∫_{ε<|t|<1/ε} f(x+tv) K(t) dt|` over `ε = 2^{-j}` down to the cell size.
///
/// Sample `k` along a line stands for the arc `[(k−½)h', (k+½)h']`; the kernel
/// is integrated over each arc and the central arc is dropped.
pub fn truncated_directional_sio(f: &GridFunction, v: (f64, f64), kernel: Kernel) -> GridFunction {
    let n = f.grid.n;
    let len = 2 * n;
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let out = along_lines(f, v, |row, step| {
        let shells = sio_shells(n, step, kernel);
        let mut buf: Vec<Complex64> = row.to_vec();
        buf.resize(len, Complex64::new(0.0, 0.0));
        fwd.process(&mut buf);
        let mut partial = vec![Complex64::new(0.0, 0.0); n];
        let mut best = vec![0.0f64; n];
        for pair in shells.chunks(2) {
            for shell in pair {
                let mut spec: Vec<Complex64> = buf.iter().zip(&shell.0).map(|(a, b)| a * b).collect();
                inv.process(&mut spec);
                for i in 0..n {
                    partial[i] += spec[i] / len as f64;
                }
            }
            for i in 0..n {
                best[i] = best[i].max(partial[i].norm());
            }
        }
        best.into_iter().map(|x| Complex64::new(x, 0.0)).collect()
    });
    GridFunction { grid: f.grid, data: out.data.iter().map(|z| Complex64::new(z.norm(), 0.0)).collect() }
}

struct Shell(Vec<Complex64>);

/// Kernel spectra of the dyadic shells, ordered so that consecutive pairs
/// `{2^{-j-1} < |t| ≤ 2^{-j}}, {2^j < |t| ≤ 2^{j+1}}` extend `(ε, 1/ε)` from `ε = 2^{-j}` to `2^{-j-1}`.
fn sio_shells(n: usize, step: f64, kernel: Kernel) -> Vec<Shell> {
    let len = 2 * n;
    let jmax = ((2.0 / step).log2().ceil() as i32).max(1);
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let mut out = Vec::new();
    for j in 0..jmax {
        let inner = ((-(j as f64) - 1.0).exp2(), (-(j as f64)).exp2());
        let outer = ((j as f64).exp2(), (j as f64 + 1.0).exp2());
        for (lo, hi) in [inner, outer] {
            let mut c = vec![Complex64::new(0.0, 0.0); len];
            for k in 1..n {
                let t = k as f64 * step;
                if t > lo && t <= hi {
                    let w = kernel.cell_integral((k as f64 - 0.5) * step, (k as f64 + 0.5) * step);
                    // out(i) = Σ_k g(i+k)·w_k, so c[d] = w_{−d}.
                    c[len - k] = Complex64::new(w, 0.0);
                    c[k] = Complex64::new(-w, 0.0);
                }
            }
            fwd.process(&mut c);
            out.push(Shell(c));
        }
    }
    out
}

/// `T_V f = max_{v∈V} T_v f`.
pub fn truncated_sio_over_directions(f: &GridFunction, dirs: &DirectionSet, kernel: Kernel) -> GridFunction {
    let parts: Vec<GridFunction> = dirs.vectors().iter().map(|v| truncated_directional_sio(f, *v, kernel)).collect();
    let mut out = parts[0].clone();
    for p in &parts[1..] {
        pointwise_max(&mut out, p);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{DyadicInterval, Parallelogram};

    fn grid() -> Grid {
        Grid::new(256, 8.0).unwrap()
    }

    fn unit_square(g: Grid) -> GridFunction {
        GridFunction::from_real(g, |x, y| if (0.0..1.0).contains(&x) && (0.0..1.0).contains(&y) { 1.0 } else { 0.0 })
    }

    #[test]
    fn constant_is_fixed() {
        let g = Grid::new(64, 4.0).unwrap();
        let f = GridFunction::from_real(g, |_, _| 1.5);
        let m = directional_max(&f, (1.0, 0.25));
        for z in &m.data {
            assert!((z.re - 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn horizontal_example() {
        let f = unit_square(grid());
        let m = directional_max(&f, (1.0, 0.0));
        let (i, j) = (grid().index_of(2.0), grid().index_of(0.5));
        assert!((m.at(j, i).re - 0.25).abs() < 1e-2, "{}", m.at(j, i).re);
    }

    #[test]
    fn dominates_and_bounded() {
        let g = Grid::new(64, 4.0).unwrap();
        let f = GridFunction::from_real(g, |x, y| (3.0 * x).sin() * (y * y).cos());
        for v in [(1.0, 0.3), (0.2, 1.0), (1.0, -1.0)] {
            let m = directional_max(&f, v);
            for (a, b) in m.data.iter().zip(&f.data) {
                assert!(a.re >= b.norm() - 1e-12 && a.re <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn ladder_refinement_is_comparable() {
        let f = unit_square(Grid::new(128, 8.0).unwrap());
        let a = directional_max_with(&f, (1.0, 0.5), 1);
        let b = directional_max_with(&f, (1.0, 0.5), 2);
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!(y.re + 1e-12 >= x.re && y.re <= 2.0 * x.re + 1e-12);
        }
    }

    #[test]
    fn collection_max_on_member() {
        let g = Grid::new(64, 4.0).unwrap();
        let r = Parallelogram::new(Slope::new(1, 1).unwrap(), DyadicInterval::new(0, 0), DyadicInterval::new(1, 0)).unwrap();
        let f = GridFunction::from_real(g, |x, y| if r.contains_f64(x, y) { 1.0 } else { 0.0 });
        let m = collection_max(&f, &ParallelogramCollection::from_iter([r])).unwrap();
        for (a, b) in m.data.iter().zip(&f.data) {
            assert_eq!(a.re, b.re);
        }
        assert!(collection_max(&f, &ParallelogramCollection::new()).is_err());
    }

    #[test]
    fn two_weight_examples() {
        let g = Grid::new(32, 4.0).unwrap();
        let dirs = DirectionSet::from_slopes(&[Slope::ZERO, Slope::new(1, 1).unwrap()]).unwrap();
        let one = GridFunction::from_real(g, |_, _| 1.0);
        assert!((two_weight_constant(&one, &one, &dirs) - 1.0).abs() < 1e-12);
        let w = GridFunction::from_real(g, |x, y| (-x * x - y * y).exp());
        let u = strong_composition(&w, &dirs).scale(2.0);
        assert!((two_weight_constant(&w, &u, &dirs) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sio_symmetric_cancels() {
        let g = Grid::new(128, 8.0).unwrap();
        let f = GridFunction::from_real(g, |x, _| (-x * x).exp());
        let t = truncated_directional_sio(&f, (1.0, 0.0), Kernel::Hilbert);
        let (i, j) = (g.index_of(0.0), g.index_of(0.3));
        assert!(t.at(j, i).re < 1e-8, "{}", t.at(j, i).re);
    }

    #[test]
    fn sio_matches_hilbert_of_interval() {
        let g = Grid::new(512, 8.0).unwrap();
        let f = GridFunction::from_real(g, |x, _| if (0.0..1.0).contains(&x) { 1.0 } else { 0.0 });
        let t = truncated_directional_sio(&f, (1.0, 0.0), Kernel::Hilbert);
        for x in [2.0, -1.0, 2.5, -1.75] {
            let exact = ((x - 0.0f64) / (x - 1.0)).abs().ln().abs() / PI;
            let got = t.at(g.index_of(0.0), g.index_of(x)).re;
            assert!((got - exact).abs() <= 0.02 * exact, "{x}: {got} vs {exact}");
        }
    }
}
