//! Riesz transform, Kato square-root checks, the square function `S_1`, the
//! Sobolev Calderon-Zygmund decomposition, Triebel-Lizorkin norms and the
//! regions of bounded functional calculus.

use crate::error::{LabError, Result};
use crate::fft::{fftn, signed_frequency};
use crate::funcalc::{apply_symbol, fractional_power_apply, sqrt_apply, ContourQuadrature, SymbolFunction};
use crate::grid::{dyadic_slot, dyadic_sums, lp_norm_values, Cube, Grid, GridFunction};
use crate::semigroup::{adversarial_trials, SemigroupEngine};
use crate::squarefun::{area_functional, Cone, ScaleLadder, SpaceTimeField};
use crate::stats::linear_fit;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// One component per axis; component `k` lives on the faces `x + e_k/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorGridFunction {
    pub grid: Grid,
    pub components: Vec<Vec<C64>>,
}

impl VectorGridFunction {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, components: vec![vec![ZERO; grid.len()]; grid.dim] }
    }

    /// Pointwise Euclidean length.
    pub fn magnitude(&self) -> Vec<f64> {
        (0..self.grid.len()).map(|i| self.components.iter().map(|c| c[i].norm_sqr()).sum::<f64>().sqrt()).collect()
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        lp_norm_values(&self.grid, self.magnitude().into_iter(), p)
    }

    pub fn l2_norm(&self) -> f64 {
        self.lp_norm(2.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.magnitude().into_iter().fold(0.0, f64::max)
    }

    /// `h^n sum_k sum_x F_k conj(G_k)`.
    pub fn inner(&self, other: &VectorGridFunction) -> C64 {
        let s: C64 = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y.conj()).sum::<C64>())
            .sum();
        s * self.grid.cell_volume()
    }
}

/// Periodic forward differences, the stencil used to assemble `L_h`.
pub fn gradient(f: &GridFunction) -> VectorGridFunction {
    let g = f.grid;
    let h = g.spacing;
    let components = (0..g.dim)
        .map(|k| {
            let mut e = [0i64; 3];
            e[k] = 1;
            (0..g.len()).map(|i| (f.values[g.shifted(g.coords(i), e)] - f.values[i]) / h).collect()
        })
        .collect();
    VectorGridFunction { grid: g, components }
}

/// Backward-difference divergence, the negative adjoint of [`gradient`].
pub fn divergence(v: &VectorGridFunction) -> GridFunction {
    let g = v.grid;
    let h = g.spacing;
    let mut out = vec![ZERO; g.len()];
    for (k, comp) in v.components.iter().enumerate() {
        let mut e = [0i64; 3];
        e[k] = -1;
        for (i, o) in out.iter_mut().enumerate() {
            *o += (comp[i] - comp[g.shifted(g.coords(i), e)]) / h;
        }
    }
    GridFunction { grid: g, values: out }
}

/// `grad L^{-1/2} f` for mean-zero `f`.
pub fn riesz_apply(engine: &SemigroupEngine, f: &GridFunction) -> Result<VectorGridFunction> {
    Ok(gradient(&fractional_power_apply(engine, 0.5, f)?))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct KatoReport {
    /// Band of `|sqrt(L) f|_2 / |grad f|_2`.
    pub ratio_min: f64,
    pub ratio_max: f64,
    /// Band of `|sqrt(L) f|_2 / (Re <L f, f>)^{1/2}`; both ends are 1 for Hermitian `A`.
    pub energy_min: f64,
    pub energy_max: f64,
    pub lambda: f64,
    pub big_lambda: f64,
}

impl KatoReport {
    /// `[lambda/Lambda, Lambda/lambda]` widened by `delta`.
    pub fn within_sandwich(&self, delta: f64) -> bool {
        let lo = self.lambda / self.big_lambda * (1.0 - delta);
        let hi = self.big_lambda / self.lambda * (1.0 + delta);
        self.ratio_min >= lo && self.ratio_max <= hi
    }
}

/// Kato ratios over a seeded battery of random mean-zero functions.
pub fn kato_check(engine: &SemigroupEngine, battery_size: usize) -> Result<KatoReport> {
    let g = engine.grid();
    let op = &engine.operator;
    let mut r = (f64::INFINITY, 0.0f64);
    let mut e = (f64::INFINITY, 0.0f64);
    for seed in 0..battery_size as u64 {
        let f = GridFunction::random_mean_zero(g, 7000 + seed);
        let root = sqrt_apply(engine, &f)?.l2_norm();
        let grad = gradient(&f).l2_norm();
        let energy = op.form(&f, &f).re.sqrt();
        r = (r.0.min(root / grad), r.1.max(root / grad));
        e = (e.0.min(root / energy), e.1.max(root / energy));
    }
    Ok(KatoReport { ratio_min: r.0, ratio_max: r.1, energy_min: e.0, energy_max: e.1, lambda: op.lambda, big_lambda: op.big_lambda })
}

/// `S_1 f(x) = (iint_Gamma |t sqrt(L) e^{-t^2 L} f|^2 dy dt / t^{n+1})^{1/2}`.
pub fn s1_square_function(engine: &SemigroupEngine, f: &GridFunction, ladder: &ScaleLadder, cone: &Cone) -> Result<GridFunction> {
    let root = sqrt_apply(engine, f)?;
    let times: Vec<f64> = ladder.ts.iter().map(|t| t * t).collect();
    let levels = engine
        .heat_ladder(&times, &root.values)?
        .into_iter()
        .zip(&ladder.ts)
        .map(|(v, &t)| v.into_iter().map(|x| x * t).collect())
        .collect();
    let field = SpaceTimeField::from_levels(f.grid, ladder.clone(), levels)?;
    Ok(area_functional(&field, cone, 0.0))
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct CzConstants {
    /// `max_i |grad b_i|_p / (alpha |Q_i|^{1/p})`.
    pub bad_gradient: f64,
    /// `|grad g|_inf / alpha`.
    pub good_sup: f64,
    /// `|grad g|_p / |grad f|_p`.
    pub good_lp: f64,
    /// `sum |Q_i| alpha^p / |grad f|_p^p`.
    pub measure: f64,
    /// Largest number of supports meeting at one node.
    pub overlap: usize,
}

#[derive(Clone, Debug)]
pub struct SobolevCZDecomposition {
    pub good: GridFunction,
    /// `(Q_i, b_i)`, with `supp b_i` inside `Q_i`.
    pub bad: Vec<(Cube, GridFunction)>,
    /// The Whitney cubes of the level set.
    pub whitney: Vec<Cube>,
    pub alpha: f64,
    pub p: f64,
    pub constants: CzConstants,
}

impl SobolevCZDecomposition {
    /// `|f - g - sum b_i|_inf`.
    pub fn residual(&self, f: &GridFunction) -> f64 {
        let mut r = f.sub(&self.good);
        for (_, b) in &self.bad {
            r = r.sub(b);
        }
        r.max_abs()
    }
}

/// Dyadic maximal function `M u(x) = max_{dyadic Q containing x} |Q|^{-1} int_Q u`.
pub fn dyadic_maximal(grid: &Grid, u: &[f64]) -> Vec<f64> {
    let sums = dyadic_sums(grid, u);
    (0..grid.len())
        .map(|x| {
            sums.iter()
                .enumerate()
                .map(|(level, s)| s[dyadic_slot(grid, x, level)] / (1usize << level).pow(grid.dim as u32) as f64)
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Per-axis trapezoid weight: 1 on the cube, falling linearly over `ext` cells.
fn trapezoid(grid: &Grid, cube: &Cube, ext: usize, index: usize) -> f64 {
    let n = grid.points as i64;
    let c = grid.coords(index);
    let mut w = 1.0;
    for k in 0..grid.dim {
        // Offset of the node from the cube, measured forward from the extended corner.
        let start = cube.corner[k] as i64 - ext as i64;
        let d = (c[k] as i64 - start).rem_euclid(n);
        let len = (cube.cells + 2 * ext) as i64;
        if d >= len {
            return 0.0;
        }
        let from_edge = d.min(len - 1 - d) as f64;
        let ramp = if ext == 0 { 1.0 } else { ((from_edge + 1.0) / (ext as f64 + 1.0)).min(1.0) };
        w *= ramp;
    }
    w
}

/// Calderon-Zygmund splitting `f = g + sum b_i` at height `alpha` for `grad f` in `L^p`.
///
/// The open set is `{M(|grad f|^p) > alpha^p}` with the dyadic maximal
/// function. Its Whitney cubes (maximal dyadic cubes whose double lies in the
/// set) carry bumps extended by a quarter side; normalising them gives a
/// partition of unity `phi_i` on the set, and `b_i = (f - avg f) phi_i`.
pub fn sobolev_cz_decompose(f: &GridFunction, p: f64, alpha: f64) -> Result<SobolevCZDecomposition> {
    if !(p >= 1.0 && p.is_finite()) || !(alpha > 0.0) {
        return Err(LabError::InvalidParams(format!("need 1 <= p < inf and alpha > 0, got p={p}, alpha={alpha}")));
    }
    let grid = f.grid;
    let grad = gradient(f);
    let gp: Vec<f64> = grad.magnitude().iter().map(|v| v.powf(p)).collect();
    let maximal = dyadic_maximal(&grid, &gp);
    let set: Vec<bool> = maximal.iter().map(|&m| m > alpha.powf(p)).collect();
    let grad_norm = grad.lp_norm(p);
    let whitney = crate::tentspace::whitney_cubes(&grid, &set, 2.0);
    let bumps: Vec<(Cube, Vec<f64>)> = whitney
        .iter()
        .map(|q| {
            let ext = if q.cells >= grid.points { 0 } else { q.cells / 4 };
            let support = Cube::new(
                {
                    let mut c = [0; 3];
                    for k in 0..grid.dim {
                        c[k] = (q.corner[k] + grid.points - ext) % grid.points;
                    }
                    c
                },
                q.cells + 2 * ext,
            );
            let w = (0..grid.len()).map(|i| trapezoid(&grid, q, ext, i)).collect();
            (support, w)
        })
        .collect();
    let mut total = vec![0.0; grid.len()];
    for (_, w) in &bumps {
        for (t, v) in total.iter_mut().zip(w) {
            *t += v;
        }
    }
    let mut bad = Vec::with_capacity(bumps.len());
    let mut sum = vec![ZERO; grid.len()];
    for (support, w) in &bumps {
        let nodes: Vec<usize> = (0..grid.len()).filter(|&i| w[i] > 0.0).collect();
        let avg = nodes.iter().map(|&i| f.values[i]).sum::<C64>() / nodes.len() as f64;
        let values: Vec<C64> = (0..grid.len()).map(|i| if w[i] > 0.0 { (f.values[i] - avg) * (w[i] / total[i]) } else { ZERO }).collect();
        for (s, v) in sum.iter_mut().zip(&values) {
            *s += v;
        }
        bad.push((*support, GridFunction { grid, values }));
    }
    let good = GridFunction { grid, values: f.values.iter().zip(&sum).map(|(a, b)| a - b).collect() };

    let mut constants = CzConstants::default();
    if grad_norm > 0.0 {
        let gg = gradient(&good);
        constants.good_sup = gg.max_abs() / alpha;
        constants.good_lp = gg.lp_norm(p) / grad_norm;
        let measure: f64 = bad.iter().map(|(q, _)| q.measure(&grid)).sum();
        constants.measure = measure * alpha.powf(p) / grad_norm.powf(p);
        constants.bad_gradient = bad
            .iter()
            .map(|(q, b)| gradient(b).lp_norm(p) / (alpha * q.measure(&grid).powf(1.0 / p)))
            .fold(0.0, f64::max);
        let mut cover = vec![0usize; grid.len()];
        for (_, w) in &bumps {
            for (c, v) in cover.iter_mut().zip(w) {
                if *v > 0.0 {
                    *c += 1;
                }
            }
        }
        constants.overlap = cover.into_iter().max().unwrap_or(0);
    }
    Ok(SobolevCZDecomposition { good, bad, whitney, alpha, p, constants })
}

/// Littlewood-Paley bump `cos(pi/2 log2 r)` on `[1/2, 2]`.
pub fn lp_bump(r: f64) -> f64 {
    if !(0.5..=2.0).contains(&r) {
        return 0.0;
    }
    (std::f64::consts::FRAC_PI_2 * r.log2()).cos()
}

/// Physical frequency length `|k| / side` at a node index of the FFT layout.
fn frequency_length(grid: &Grid, index: usize) -> f64 {
    let k = signed_frequency(grid, index);
    let s: f64 = k.iter().take(grid.dim).map(|&v| (v * v) as f64).sum();
    s.sqrt() / grid.side
}

/// Band indices `i` whose bump meets the grid's frequencies.
pub fn lp_bands(grid: &Grid) -> std::ops::RangeInclusive<i32> {
    let lo = 1.0 / grid.side;
    let hi = (grid.dim as f64).sqrt() * (grid.points / 2) as f64 / grid.side;
    let i0 = (lo.log2() - 1.0).floor() as i32;
    let i1 = (hi.log2() + 1.0).ceil() as i32;
    i0..=i1
}

/// `|(sum_i (2^{is} |phi_i * f|)^2)^{1/2}|_p`, with `F phi_i(xi) = cos(pi/2 log2(2^{-i}|xi|))`.
pub fn triebel_lizorkin_norm(f: &GridFunction, s: f64, p: f64) -> Result<f64> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(LabError::InvalidParams(format!("p = {p}")));
    }
    let grid = f.grid;
    let mut hat = f.values.clone();
    fftn(&grid, &mut hat, false);
    let radii: Vec<f64> = (0..grid.len()).map(|i| frequency_length(&grid, i)).collect();
    let mut acc = vec![0.0; grid.len()];
    for i in lp_bands(&grid) {
        let scale = 2f64.powi(i);
        let mut band: Vec<C64> = hat.iter().zip(&radii).map(|(v, &r)| v * lp_bump(r / scale)).collect();
        if band.iter().all(|v| *v == ZERO) {
            continue;
        }
        fftn(&grid, &mut band, true);
        let w = scale.powf(s);
        for (a, v) in acc.iter_mut().zip(&band) {
            *a += (w * v.norm()).powi(2);
        }
    }
    Ok(lp_norm_values(&grid, acc.into_iter().map(f64::sqrt), p))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionVariant {
    R1,
    R2,
    R1OfL,
    R2OfL,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionPoint {
    pub s: f64,
    pub inv_p: f64,
}

/// Operator data for the operator-dependent regions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorRegionParams {
    pub p_minus: f64,
    pub p_minus_adj: f64,
    pub eps: f64,
    pub eps_adj: f64,
}

/// Closed-set comparisons absorb this much rounding.
const REGION_TOL: f64 = 1e-12;

/// Value at `s` of the chain through the given vertices (sorted by `s`).
fn chain(vertices: &[(f64, f64)], s: f64) -> f64 {
    for w in vertices.windows(2) {
        let ((s0, v0), (s1, v1)) = (w[0], w[1]);
        if s >= s0 - REGION_TOL && s <= s1 + REGION_TOL {
            if s1 == s0 {
                return v0.max(v1);
            }
            return v0 + (v1 - v0) * (s - s0) / (s1 - s0);
        }
    }
    f64::NAN
}

/// Membership of `(s, 1/p)` in the regions of bounded functional calculus.
pub fn region_contains(variant: RegionVariant, point: RegionPoint, n: usize, params: Option<&OperatorRegionParams>) -> Result<bool> {
    let RegionPoint { s, inv_p } = point;
    let nn = n as f64;
    match variant {
        RegionVariant::R1 | RegionVariant::R2 => {
            if n == 0 || (variant == RegionVariant::R1 && n < 4) || (variant == RegionVariant::R2 && n > 4) {
                return Err(LabError::InvalidDimension(n));
            }
            let lower = (s / nn + (nn - 2.0) / (2.0 * nn)).max(0.0);
            let upper = s / nn + (nn + 2.0) / (2.0 * nn);
            Ok(s >= -1.0 - REGION_TOL && s <= 1.0 + REGION_TOL && inv_p >= lower - REGION_TOL && inv_p <= upper + REGION_TOL)
        }
        RegionVariant::R1OfL | RegionVariant::R2OfL => {
            let o = params.ok_or_else(|| LabError::InvalidParams("operator regions need p_-(L), p_-(L*), eps(L), eps(L*)".into()))?;
            if n == 0 {
                return Err(LabError::InvalidDimension(n));
            }
            let (pm, pa) = (o.p_minus, o.p_minus_adj);
            let key = (nn + pa) / (nn * pa);
            let upper = [(-1.0, 1.0 - 1.0 / (2.0 + o.eps_adj)), (0.0, 1.0 / pm), (1.0, (nn + pm) / (nn * pm))];
            let lower: Vec<(f64, f64)> = match variant {
                RegionVariant::R1OfL => {
                    if key >= 1.0 {
                        return Err(LabError::InvalidParams(format!("(n + p_-(L*)) / (n p_-(L*)) = {key} >= 1 selects R2(L)")));
                    }
                    vec![(-1.0, 1.0 - key), (0.0, 1.0 - 1.0 / pa), (1.0, 1.0 / (2.0 + o.eps))]
                }
                _ => {
                    if key < 1.0 {
                        return Err(LabError::InvalidParams(format!("(n + p_-(L*)) / (n p_-(L*)) = {key} < 1 selects R1(L)")));
                    }
                    vec![(-1.0, 0.0), (nn / pa - nn, 0.0), (0.0, 1.0 - 1.0 / pa), (1.0, 1.0 / (2.0 + o.eps))]
                }
            };
            if !(-1.0..=1.0).contains(&s) {
                return Ok(false);
            }
            let (lo, hi) = (chain(&lower, s), chain(&upper, s));
            let on_side = variant == RegionVariant::R1OfL && (s == -1.0 || s == 1.0);
            Ok(if on_side { inv_p >= lo && inv_p <= hi } else { inv_p > lo && inv_p < hi && s > -1.0 && s < 1.0 })
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProbeRow {
    pub points: usize,
    pub symbol: String,
    pub estimate: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProbeReport {
    pub s: f64,
    pub p: f64,
    pub rows: Vec<ProbeRow>,
    /// Log-log slope of the largest estimate against `N`.
    pub slope: f64,
    pub r2: f64,
    pub growing: bool,
}

/// Growth flag used by all refinement sweeps: slope above 0.2 with `r^2 > 0.8`.
pub fn growth_flag(ns: &[f64], values: &[f64]) -> (f64, f64, bool) {
    if ns.len() < 2 {
        return (0.0, 1.0, false);
    }
    let xs: Vec<f64> = ns.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let (slope, _, r2) = linear_fit(&xs, &ys);
    let r2 = if r2.is_finite() { r2 } else { 1.0 };
    (slope, r2, ns.len() >= 3 && slope > 0.2 && r2 > 0.8)
}

/// Estimates `|psi(L)|` on `F^{p,2}_s` from trial functions along a refinement
/// sweep (one engine per resolution) and flags growth.
pub fn functional_calc_sobolev_probe(engines: &[SemigroupEngine], s: f64, p: f64, symbols: &[SymbolFunction], trials: usize) -> Result<ProbeReport> {
    let mut rows = Vec::new();
    let mut ns = Vec::new();
    let mut best = Vec::new();
    for engine in engines {
        let grid = engine.grid();
        let quad = ContourQuadrature::for_engine(engine);
        let mut starts: Vec<GridFunction> =
            adversarial_trials(&grid).into_iter().map(|v| GridFunction { grid, values: v }.mean_zero()).collect();
        for seed in 0..trials as u64 {
            starts.push(GridFunction::random_bumps(grid, 500 + seed, 3).mean_zero());
        }
        let mut top: f64 = 0.0;
        for psi in symbols {
            let mut est: f64 = 0.0;
            for f in &starts {
                let den = triebel_lizorkin_norm(f, s, p)?;
                if den == 0.0 {
                    continue;
                }
                let out = apply_symbol(engine, psi, &quad, f)?;
                est = est.max(triebel_lizorkin_norm(&out, s, p)? / den);
            }
            rows.push(ProbeRow { points: grid.points, symbol: psi.name(), estimate: est });
            top = top.max(est);
        }
        ns.push(grid.points as f64);
        best.push(top);
    }
    let (slope, r2, growing) = growth_flag(&ns, &best);
    Ok(ProbeReport { s, p, rows, slope, r2, growing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    #[test]
    fn gradient_of_sawtooth() {
        let g = build_grid(1, 8, 1.0).unwrap();
        let f = GridFunction::from_fn(g, |x| C64::new(x[0], 0.0));
        let d = gradient(&f);
        for i in 0..7 {
            assert!((d.components[0][i].re - 1.0).abs() < 1e-12);
        }
        assert!((d.components[0][7].re - (1.0 - 8.0)).abs() < 1e-9);
        assert_eq!(gradient(&GridFunction::constant(g, C64::new(2.0, 1.0))).max_abs(), 0.0);
    }

    #[test]
    fn bump_partition() {
        for r in [0.6, 0.9, 1.3, 1.9] {
            let a = lp_bump(r);
            let b = lp_bump(r * 2.0).max(lp_bump(r / 2.0));
            assert!((a * a + b * b - 1.0).abs() < 1e-14);
        }
        assert_eq!(lp_bump(2.5), 0.0);
    }

    #[test]
    fn region_vertices() {
        let on = |v, s, ip, n| region_contains(v, RegionPoint { s, inv_p: ip }, n, None).unwrap();
        assert!(on(RegionVariant::R1, 1.0, 0.9, 5));
        assert!(on(RegionVariant::R2, -0.5, 0.0, 3));
        assert!(on(RegionVariant::R1, 0.0, 0.5, 5));
        assert!(!on(RegionVariant::R1, 0.0, 0.8, 5));
        assert!(region_contains(RegionVariant::R1, RegionPoint { s: 0.0, inv_p: 0.5 }, 3, None).is_err());
    }
}
