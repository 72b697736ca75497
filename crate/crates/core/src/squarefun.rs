//! Scale ladders, space-time fields, conical and vertical square functions,
//! the lifting `Q_psi`, the synthesis `pi_psi`, and the area and Carleson
//! functionals.

use crate::error::{LabError, Result};
use crate::fft::fftn;
use crate::funcalc::{apply_symbol, ContourQuadrature, SymbolFunction};
use crate::grid::{dyadic_slot, dyadic_sums, Grid, GridFunction};
use crate::semigroup::SemigroupEngine;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::path::Path;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Geometric ladder `t_j = t_min (t_max/t_min)^{j/(J-1)}` with trapezoid
/// weights for `dt/t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleLadder {
    pub t_min: f64,
    pub t_max: f64,
    pub levels: usize,
    pub ts: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ScaleLadder {
    pub fn new(t_min: f64, t_max: f64, levels: usize) -> Result<Self> {
        if !(t_min > 0.0 && t_max > t_min) || levels < 8 {
            return Err(LabError::InvalidParams(format!("ladder needs 0 < t_min < t_max and J >= 8, got ({t_min}, {t_max}, {levels})")));
        }
        let span = (t_max / t_min).ln();
        let du = span / (levels - 1) as f64;
        let ts = (0..levels).map(|j| t_min * (j as f64 * du).exp()).collect();
        let mut weights = vec![du; levels];
        weights[0] *= 0.5;
        weights[levels - 1] *= 0.5;
        Ok(Self { t_min, t_max, levels, ts, weights })
    }

    /// `[h/2, side]` with 64 levels.
    pub fn default_for(grid: &Grid) -> Self {
        Self::new(0.5 * grid.spacing, grid.side, 64).expect("valid default ladder")
    }

    /// Halved log-spacing, widened by one decade on each side.
    pub fn refined(&self) -> Self {
        let lo = self.t_min / 10.0;
        let hi = self.t_max * 10.0;
        let du = (self.t_max / self.t_min).ln() / (self.levels - 1) as f64 / 2.0;
        let levels = ((hi / lo).ln() / du).round() as usize + 1;
        Self::new(lo, hi, levels).expect("valid refined ladder")
    }

    pub fn log_span(&self) -> f64 {
        (self.t_max / self.t_min).ln()
    }
}

/// `F(x, t_j)`, stored level by level.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimeField {
    pub grid: Grid,
    pub ladder: ScaleLadder,
    pub values: Vec<C64>,
}

#[derive(Serialize, Deserialize)]
struct BlobHeader {
    dim: usize,
    points: usize,
    side: f64,
    ladder: ScaleLadder,
    layout: String,
    scalar: String,
}

impl SpaceTimeField {
    pub fn zeros(grid: Grid, ladder: ScaleLadder) -> Self {
        let len = grid.len() * ladder.levels;
        Self { grid, ladder, values: vec![ZERO; len] }
    }

    pub fn from_levels(grid: Grid, ladder: ScaleLadder, levels: Vec<Vec<C64>>) -> Result<Self> {
        if levels.len() != ladder.levels || levels.iter().any(|l| l.len() != grid.len()) {
            let found = levels.iter().map(|l| l.len()).sum();
            return Err(LabError::ShapeMismatch { expected: (ladder.levels, grid.len()), found: (levels.len(), found) });
        }
        Ok(Self { grid, ladder, values: levels.concat() })
    }

    pub fn level(&self, j: usize) -> &[C64] {
        let n = self.grid.len();
        &self.values[j * n..(j + 1) * n]
    }

    pub fn level_mut(&mut self, j: usize) -> &mut [C64] {
        let n = self.grid.len();
        &mut self.values[j * n..(j + 1) * n]
    }

    pub fn level_function(&self, j: usize) -> GridFunction {
        GridFunction { grid: self.grid, values: self.level(j).to_vec() }
    }

    pub fn scale(mut self, c: C64) -> Self {
        for v in &mut self.values {
            *v *= c;
        }
        self
    }

    /// Space-time inner product `sum h^n w_j F conj(G)`.
    pub fn inner(&self, other: &SpaceTimeField) -> C64 {
        let hn = self.grid.cell_volume();
        (0..self.ladder.levels)
            .map(|j| {
                let s: C64 = self.level(j).iter().zip(other.level(j)).map(|(a, b)| a * b.conj()).sum();
                s * self.ladder.weights[j] * hn
            })
            .sum()
    }

    /// `iint |F|^2 dy dt/t`.
    pub fn l2_norm_sq(&self) -> f64 {
        self.inner(self).re
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.values.len() * 16);
        for v in &self.values {
            out.extend_from_slice(&v.re.to_le_bytes());
            out.extend_from_slice(&v.im.to_le_bytes());
        }
        out
    }

    pub fn header_json(&self) -> String {
        let h = BlobHeader {
            dim: self.grid.dim,
            points: self.grid.points,
            side: self.grid.side,
            ladder: self.ladder.clone(),
            layout: "level-major, node index with axis 0 fastest".into(),
            scalar: "complex f64 little-endian, re then im".into(),
        };
        serde_json::to_string_pretty(&h).expect("header serialises")
    }

    /// Writes `stem.bin` and `stem.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.bin")), self.to_bytes())?;
        std::fs::write(dir.join(format!("{stem}.json")), self.header_json())?;
        Ok(())
    }

    pub fn read(dir: &Path, stem: &str) -> Result<Self> {
        let h: BlobHeader = serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
        let grid = crate::grid::build_grid(h.dim, h.points, h.side)?;
        let bytes = std::fs::read(dir.join(format!("{stem}.bin")))?;
        let expected = grid.len() * h.ladder.levels;
        if bytes.len() != expected * 16 {
            return Err(LabError::ShapeMismatch { expected: (expected, 16), found: (bytes.len() / 16, 16) });
        }
        let values = bytes
            .chunks_exact(16)
            .map(|c| C64::new(f64::from_le_bytes(c[..8].try_into().unwrap()), f64::from_le_bytes(c[8..].try_into().unwrap())))
            .collect();
        Ok(Self { grid, ladder: h.ladder, values })
    }
}

/// The cone `{(y, t): |x - y| < aperture t}` in the torus metric.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cone {
    pub aperture: f64,
}

impl Default for Cone {
    fn default() -> Self {
        Self { aperture: 1.0 }
    }
}

/// Canonical torus offsets (each axis in `(-N/2, N/2]`) with `|d| h < r`.
fn ball_offsets(grid: &Grid, r: f64) -> Vec<[i64; 3]> {
    let n = grid.points as i64;
    let reach = ((r / grid.spacing).ceil() as i64).min(n / 2);
    let lo = if 2 * reach >= n { -(n / 2) + 1 } else { -reach };
    let mut out = Vec::new();
    let r2 = (r / grid.spacing).powi(2);
    let range = |k: usize| if k < grid.dim { lo..=reach } else { 0..=0 };
    for a in range(0) {
        for b in range(1) {
            for c in range(2) {
                if ((a * a + b * b + c * c) as f64) < r2 {
                    out.push([a, b, c]);
                }
            }
        }
    }
    out
}

impl Cone {
    pub fn new(aperture: f64) -> Self {
        Self { aperture }
    }

    /// Number of nodes in the cone's cross-section at each level.
    pub fn counts(&self, grid: &Grid, ladder: &ScaleLadder) -> Vec<usize> {
        ladder.ts.iter().map(|t| ball_offsets(grid, self.aperture * t).len()).collect()
    }

    /// Per-level cross-section measure `|B(x, a t_j)| / t_j^n`.
    pub fn level_constants(&self, grid: &Grid, ladder: &ScaleLadder) -> Vec<f64> {
        let hn = grid.cell_volume();
        self.counts(grid, ladder)
            .iter()
            .zip(&ladder.ts)
            .map(|(&c, t)| c as f64 * hn / t.powi(grid.dim as i32))
            .collect()
    }

    /// The `dt/t`-weighted mean of the level constants: the exact ratio
    /// `|A F|_2^2 / iint |F|^2` for fields with equal energy per level.
    pub fn fubini_constant(&self, grid: &Grid, ladder: &ScaleLadder) -> f64 {
        let c = self.level_constants(grid, ladder);
        let num: f64 = c.iter().zip(&ladder.weights).map(|(c, w)| c * w).sum();
        num / ladder.weights.iter().sum::<f64>()
    }
}

/// `sum_{|d| < r} g(x + d)` over the torus ball, directly or by FFT.
fn ball_sum(grid: &Grid, g: &[f64], r: f64) -> Vec<f64> {
    let offs = ball_offsets(grid, r);
    if offs.len() <= 48 {
        let mut out = vec![0.0; grid.len()];
        for (x, o) in out.iter_mut().enumerate() {
            let c = grid.coords(x);
            for d in &offs {
                *o += g[grid.shifted(c, *d)];
            }
        }
        return out;
    }
    let n = grid.points as i64;
    let mut k = vec![ZERO; grid.len()];
    for d in &offs {
        let mut c = [0usize; 3];
        for a in 0..grid.dim {
            c[a] = d[a].rem_euclid(n) as usize;
        }
        k[grid.index(c)] = C64::new(1.0, 0.0);
    }
    let mut v: Vec<C64> = g.iter().map(|&x| C64::new(x, 0.0)).collect();
    fftn(grid, &mut k, false);
    fftn(grid, &mut v, false);
    for (a, b) in v.iter_mut().zip(&k) {
        *a *= b;
    }
    fftn(grid, &mut v, true);
    // Sums below round-off of the total are zero; left in, they leak into
    // L^p norms with p < 1 through the square root.
    let floor = 1e-12 * g.iter().sum::<f64>();
    v.iter().map(|z| if z.re > floor { z.re } else { 0.0 }).collect()
}

/// `A_s F(x) = (sum_{(y,j) in Gamma(x)} |F(y,j)|^2 h^n w_j / t_j^{2s+n})^{1/2}`.
pub fn area_functional(f: &SpaceTimeField, cone: &Cone, s_weight: f64) -> GridFunction {
    let grid = f.grid;
    let hn = grid.cell_volume();
    let mut acc = vec![0.0; grid.len()];
    for j in 0..f.ladder.levels {
        let g: Vec<f64> = f.level(j).iter().map(|v| v.norm_sqr()).collect();
        if g.iter().all(|&x| x == 0.0) {
            continue;
        }
        let t = f.ladder.ts[j];
        let c = hn * f.ladder.weights[j] / t.powf(2.0 * s_weight + grid.dim as f64);
        for (a, b) in acc.iter_mut().zip(ball_sum(&grid, &g, cone.aperture * t)) {
            *a += c * b;
        }
    }
    GridFunction { grid, values: acc.into_iter().map(|a| C64::new(a.sqrt(), 0.0)).collect() }
}

/// Whether `t` lies in the closed Carleson interval `(0, side]`.
pub fn in_box(t: f64, side: f64) -> bool {
    t <= side * (1.0 + 1e-12)
}

/// `C F(x) = max_{dyadic Q ∋ x} (|Q|^{-1} iint_{Q x (0, l(Q)]} |F|^2 dy dt/t)^{1/2}`.
pub fn carleson_functional(f: &SpaceTimeField) -> GridFunction {
    let grid = f.grid;
    let hn = grid.cell_volume();
    let mut best = vec![0.0f64; grid.len()];
    for level in 0..=grid.levels() {
        let side = (1usize << level) as f64 * grid.spacing;
        let mut g = vec![0.0; grid.len()];
        for j in 0..f.ladder.levels {
            if !in_box(f.ladder.ts[j], side) {
                continue;
            }
            let w = f.ladder.weights[j] * hn;
            for (a, v) in g.iter_mut().zip(f.level(j)) {
                *a += w * v.norm_sqr();
            }
        }
        let sums = dyadic_sums(&grid, &g);
        let vol = side.powi(grid.dim as i32);
        for (x, b) in best.iter_mut().enumerate() {
            *b = b.max(sums[level][dyadic_slot(&grid, x, level)] / vol);
        }
    }
    GridFunction { grid, values: best.into_iter().map(|a| C64::new(a.sqrt(), 0.0)).collect() }
}

/// `Q_psi f(x, t_j) = psi(t_j^2 L) f(x)`.
pub fn q_psi(engine: &SemigroupEngine, psi: &SymbolFunction, quad: &ContourQuadrature, ladder: &ScaleLadder, f: &GridFunction) -> Result<SpaceTimeField> {
    let grid = engine.grid();
    grid.check_same(&f.grid)?;
    if let Some((k, s)) = psi.semigroup_form() {
        let times: Vec<f64> = ladder.ts.iter().map(|t| s * t * t).collect();
        let heat = engine.heat_ladder(&times, &f.values)?;
        let levels = heat
            .into_iter()
            .zip(&times)
            .map(|(mut v, &tau)| {
                for _ in 0..k {
                    v = engine.operator.apply_vec(&v);
                    for x in &mut v {
                        *x *= tau;
                    }
                }
                v
            })
            .collect();
        return SpaceTimeField::from_levels(grid, ladder.clone(), levels);
    }
    let levels = ladder
        .ts
        .iter()
        .map(|t| apply_symbol(engine, &psi.scaled(t * t), quad, f).map(|g| g.values))
        .collect::<Result<Vec<_>>>()?;
    SpaceTimeField::from_levels(grid, ladder.clone(), levels)
}

/// `pi_psi F = sum_j psi(t_j^2 L) F(., t_j) w_j`.
pub fn pi_psi(engine: &SemigroupEngine, psi: &SymbolFunction, quad: &ContourQuadrature, f: &SpaceTimeField) -> Result<GridFunction> {
    let grid = engine.grid();
    grid.check_same(&f.grid)?;
    if let (Some(sp), Some((k, s))) = (engine.spectral(), psi.semigroup_form()) {
        // Accumulate in the eigenbasis and synthesise once; sparse levels
        // (atoms) only touch the columns of `V^{-1}` they occupy.
        let mut acc = vec![ZERO; grid.len()];
        for j in 0..f.ladder.levels {
            let entries: Vec<(usize, C64)> =
                f.level(j).iter().enumerate().filter(|(_, v)| **v != ZERO).map(|(y, v)| (y, *v)).collect();
            if entries.is_empty() {
                continue;
            }
            let tau = s * f.ladder.ts[j].powi(2);
            let w = f.ladder.weights[j];
            let c = sp.analyse_sparse(&entries);
            for ((a, ck), l) in acc.iter_mut().zip(&c).zip(&sp.values) {
                let z = l * tau;
                *a += ck * (w * z.powu(k) * (-z).exp());
            }
        }
        return Ok(GridFunction { grid, values: sp.synthesise(&acc) });
    }
    let mut out = GridFunction::zeros(grid);
    for j in 0..f.ladder.levels {
        let lvl = f.level_function(j);
        if lvl.values.iter().all(|v| *v == ZERO) {
            continue;
        }
        let t = f.ladder.ts[j];
        let g = apply_symbol(engine, &psi.scaled(t * t), quad, &lvl)?;
        out.axpy(C64::new(f.ladder.weights[j], 0.0), &g);
    }
    Ok(out)
}

/// `1 / int_0^inf psi(t^2) psi_tilde(t^2) dt/t`, so that
/// `c pi_{psi_tilde} Q_psi = I` on the mean-zero subspace.
pub fn reproducing_constant(psi: &SymbolFunction, psi_tilde: &SymbolFunction) -> f64 {
    let du = 0.002;
    let total: C64 = (-15000..=15000)
        .map(|k| {
            let s = C64::new((2.0 * k as f64 * du).exp(), 0.0);
            psi.evaluate(s) * psi_tilde.evaluate(s)
        })
        .filter(|v| v.is_finite())
        .sum::<C64>()
        * du;
    1.0 / total.re
}

/// `c pi_{psi_tilde}(Q_psi f)`, the discrete Calderon reproducing formula.
pub fn calderon_reproduce(
    engine: &SemigroupEngine,
    psi: &SymbolFunction,
    psi_tilde: &SymbolFunction,
    quad: &ContourQuadrature,
    ladder: &ScaleLadder,
    f: &GridFunction,
) -> Result<GridFunction> {
    let c = reproducing_constant(psi, psi_tilde);
    let field = q_psi(engine, psi, quad, ladder, f)?;
    Ok(pi_psi(engine, psi_tilde, quad, &field)?.scale(C64::new(c, 0.0)))
}

/// `Sf = A(t^2 L e^{-t^2 L} f)`.
pub fn conical_square_function(engine: &SemigroupEngine, f: &GridFunction, ladder: &ScaleLadder, cone: &Cone) -> Result<GridFunction> {
    let quad = ContourQuadrature::for_engine(engine);
    let field = q_psi(engine, &SymbolFunction::psi0(), &quad, ladder, f)?;
    Ok(area_functional(&field, cone, 0.0))
}

/// `S* f(x) = (sum_j |t_j^2 L e^{-t_j^2 L} f(x)|^2 w_j)^{1/2}`.
pub fn vertical_square_function(engine: &SemigroupEngine, f: &GridFunction, ladder: &ScaleLadder) -> Result<GridFunction> {
    let quad = ContourQuadrature::for_engine(engine);
    let field = q_psi(engine, &SymbolFunction::psi0(), &quad, ladder, f)?;
    let mut acc = vec![0.0; f.len()];
    for j in 0..ladder.levels {
        for (a, v) in acc.iter_mut().zip(field.level(j)) {
            *a += ladder.weights[j] * v.norm_sqr();
        }
    }
    Ok(GridFunction { grid: f.grid, values: acc.into_iter().map(|a| C64::new(a.sqrt(), 0.0)).collect() })
}

/// `sum_j |psi(t_j^2 mu)|^2 w_j`, the ladder's version of `int |psi(t^2 mu)|^2 dt/t`.
pub fn ladder_symbol_energy(psi: &SymbolFunction, ladder: &ScaleLadder, mu: C64) -> f64 {
    ladder.ts.iter().zip(&ladder.weights).map(|(t, w)| w * psi.evaluate(mu * t * t).norm_sqr()).sum()
}
