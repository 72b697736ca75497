//! The Frehse coefficients and the refinement experiments built on them.
//!
//! For `u = x_1 |x|^gamma` with `gamma = -q + i lambda_F` and
//! `A = a I + beta x x^T / |x|^2`, `a = alpha + i`, one finds
//! `div(A grad u) = x_1 |x|^{gamma-2} [a gamma (gamma + n) + beta (1 + gamma)(gamma + n - 1)]`,
//! so `u` is a null solution away from the origin exactly when
//! `beta = -a gamma (gamma + n) / ((1 + gamma)(gamma + n - 1))`.

use crate::coeffs::{CoefficientDescriptor, CoefficientField};
use crate::error::{LabError, Result};
use crate::funcalc::fractional_power_apply;
use crate::grid::{build_grid, Grid, GridFunction};
use crate::operator::assemble_operator;
use crate::riesz::{gradient, growth_flag};
use crate::semigroup::{lp_opnorm_power, SemigroupEngine};
use crate::solve::MeanZeroSolver;
use crate::stats::nelder_mead_2d;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Parameters of the Frehse construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrehseConfig {
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default = "default_lambda")]
    pub lambda_f: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// `[re, im]`; solved numerically when absent.
    #[serde(default)]
    pub beta: Option<[f64; 2]>,
    #[serde(default = "default_n")]
    pub n: usize,
}

fn default_q() -> f64 {
    1.4
}
fn default_lambda() -> f64 {
    1.0
}
fn default_alpha() -> f64 {
    0.05
}
fn default_n() -> usize {
    3
}

impl Default for FrehseConfig {
    fn default() -> Self {
        Self { q: 1.4, lambda_f: 1.0, alpha: 0.05, beta: None, n: 3 }
    }
}

impl FrehseConfig {
    pub fn a(&self) -> C64 {
        C64::new(self.alpha, 1.0)
    }

    pub fn gamma(&self) -> C64 {
        C64::new(-self.q, self.lambda_f)
    }

    /// Supplied `beta`, or the continuum value.
    pub fn beta_value(&self) -> C64 {
        match self.beta {
            Some([re, im]) => C64::new(re, im),
            None => beta_closed_form(self.q, self.lambda_f, self.alpha, self.n),
        }
    }

    pub fn with_beta(&self, beta: C64) -> Self {
        Self { beta: Some([beta.re, beta.im]), ..self.clone() }
    }

    /// `u(x) = x_1 |x|^{-q} e^{i lambda_F ln|x|}`.
    pub fn u(&self, x: &[f64]) -> C64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        if r2 == 0.0 {
            return C64::new(0.0, 0.0);
        }
        let lr = 0.5 * r2.ln();
        x[0] * (self.gamma() * lr).exp()
    }
}

/// Continuum `beta(alpha, q, lambda_F)` making `u` a null solution in `R^n \ {0}`.
pub fn beta_closed_form(q: f64, lambda_f: f64, alpha: f64, n: usize) -> C64 {
    let a = C64::new(alpha, 1.0);
    let g = C64::new(-q, lambda_f);
    let nn = n as f64;
    -a * g * (g + nn) / ((1.0 + g) * (g + nn - 1.0))
}

/// `(alpha + i) I + beta x x^T / |x|^2`, with the radial average `beta I / n` at the origin.
pub fn frehse_matrix(alpha: f64, beta: C64, x: &[f64]) -> Vec<C64> {
    let n = x.len();
    let a = C64::new(alpha, 1.0);
    let r2: f64 = x.iter().map(|v| v * v).sum();
    let mut m = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            let proj = if r2 == 0.0 {
                if i == j { 1.0 / n as f64 } else { 0.0 }
            } else {
                x[i] * x[j] / r2
            };
            m[i * n + j] = beta * proj + if i == j { a } else { C64::new(0.0, 0.0) };
        }
    }
    m
}

/// Samples the Frehse matrix at the dual points of `grid` and checks ellipticity.
pub fn frehse_field(config: &FrehseConfig, grid: Grid) -> Result<CoefficientField> {
    if grid.dim != config.n {
        return Err(LabError::InvalidParams(format!("Frehse config is {}-dimensional, grid is {}", config.n, grid.dim)));
    }
    let field = CoefficientField::frehse(grid, config, config.beta_value());
    crate::coeffs::check_ellipticity(&field, 16)?;
    Ok(field)
}

/// `C^infinity` step: 0 for `x <= 0`, 1 for `x >= 1`.
pub fn smooth_step(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / x).exp();
    let b = (-1.0 / (1.0 - x)).exp();
    a / (a + b)
}

/// Radial cutoff equal to 1 for `r <= r0` and 0 for `r >= r1`.
pub fn radial_cutoff(r: f64, r0: f64, r1: f64) -> f64 {
    1.0 - smooth_step((r - r0) / (r1 - r0))
}

fn radius(x: &[f64; 3], dim: usize) -> f64 {
    x.iter().take(dim).map(|v| v * v).sum::<f64>().sqrt()
}

/// Inner and outer radii of the torus window, as fractions of the side.
pub const WINDOW: (f64, f64) = (0.25, 0.4);
/// Annulus on which `beta` is fitted.
pub const BETA_ANNULUS: (f64, f64) = (0.1, 0.4);
/// Resolution of the `beta` fit.
pub const BETA_POINTS: usize = 64;

/// `u` sampled at the nodes (the singularity sits on a cell corner, so never at a node).
pub fn sample_u(config: &FrehseConfig, grid: Grid) -> GridFunction {
    let n = grid.dim;
    GridFunction::from_fn(grid, |x| config.u(&x[..n]))
}

/// The fixed torus window `phi`.
pub fn window(grid: Grid) -> Vec<f64> {
    let (r0, r1) = (WINDOW.0 * grid.side, WINDOW.1 * grid.side);
    (0..grid.len()).map(|i| radial_cutoff(radius(&grid.position(i), grid.dim), r0, r1)).collect()
}

fn annulus_mask(grid: &Grid, r0: f64, r1: f64) -> Vec<f64> {
    (0..grid.len())
        .map(|i| {
            let r = radius(&grid.position(i), grid.dim);
            if r >= r0 && r <= r1 { 1.0 } else { 0.0 }
        })
        .collect()
}

/// `|(|x| L_h u)|_2` and `|grad u|_2` on a mask.
fn weighted_residual(grid: &Grid, lu: &[C64], u: &GridFunction, mask: &[f64]) -> (f64, f64) {
    let res: f64 = (0..grid.len())
        .map(|i| {
            let r = radius(&grid.position(i), grid.dim);
            mask[i] * (r * lu[i].norm()).powi(2)
        })
        .sum::<f64>()
        * grid.cell_volume();
    let grad = gradient(u);
    let g: f64 = grad.magnitude().iter().zip(mask).map(|(v, m)| m * v * v).sum::<f64>() * grid.cell_volume();
    (res.sqrt(), g.sqrt())
}

/// Residual of `u` on the fitting annulus as an affine function of `beta`:
/// `L_h(beta) u = v0 + beta v1` since `A` is affine in `beta`.
struct BetaProblem {
    v0: Vec<C64>,
    v1: Vec<C64>,
    weight: Vec<f64>,
    grad: f64,
}

impl BetaProblem {
    fn new(q: f64, lambda_f: f64, a: C64, grid: Grid) -> Result<Self> {
        let cfg = FrehseConfig { q, lambda_f, alpha: a.re, beta: None, n: grid.dim };
        let u = GridFunction::from_fn(grid, |x| {
            let r2: f64 = x.iter().take(grid.dim).map(|v| v * v).sum();
            x[0] * (C64::new(-q, lambda_f) * 0.5 * r2.ln()).exp()
        });
        let field = |beta: C64| {
            CoefficientField::from_fn(grid, |x| {
                let mut m = frehse_matrix(cfg.alpha, beta, &x[..grid.dim]);
                for k in 0..grid.dim {
                    m[k * grid.dim + k] += a - cfg.a();
                }
                m
            })
        };
        let v0 = apply_unchecked(field(ZERO), &u);
        let v1: Vec<C64> = apply_unchecked(field(C64::new(1.0, 0.0)), &u).iter().zip(&v0).map(|(a, b)| a - b).collect();
        let mask = annulus_mask(&grid, BETA_ANNULUS.0 * grid.side, BETA_ANNULUS.1 * grid.side);
        let weight: Vec<f64> = (0..grid.len()).map(|i| mask[i] * radius(&grid.position(i), grid.dim).powi(2) * grid.cell_volume()).collect();
        let (_, grad) = weighted_residual(&grid, &v0, &u, &mask);
        Ok(Self { v0, v1, weight, grad })
    }

    /// `|(|x| L_h u)|_2 / |grad u|_2` on the annulus.
    fn relative(&self, beta: C64) -> f64 {
        let s: f64 = self.v0.iter().zip(&self.v1).zip(&self.weight).map(|((a, b), w)| w * (a + beta * b).norm_sqr()).sum();
        s.sqrt() / self.grad
    }
}

/// `L_h u` for a field that need not be elliptic.
fn apply_unchecked(field: CoefficientField, u: &GridFunction) -> Vec<C64> {
    let grid = field.grid;
    crate::operator::apply_form(&grid, |c| {
        let m = field.at(c);
        let mut out = [ZERO; 9];
        out[..m.len()].copy_from_slice(m);
        out
    }, &u.values)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BetaFit {
    pub beta: [f64; 2],
    /// Relative annulus residual at the fitted `beta`.
    pub residual: f64,
    pub residual_at_zero: f64,
    /// Same `beta` on the grid of half the resolution.
    pub residual_coarse: f64,
}

impl BetaFit {
    pub fn value(&self) -> C64 {
        C64::new(self.beta[0], self.beta[1])
    }
}

/// `beta` minimising the discrete residual of `u` for `A = a I + beta x x^T / |x|^2`.
pub fn solve_beta_for(q: f64, lambda_f: f64, a: C64, n: usize, points: usize) -> Result<BetaFit> {
    if q == 0.0 || lambda_f == 0.0 {
        return Err(LabError::InvalidParams(format!("need q != 0 and lambda_F != 0, got q={q}, lambda_F={lambda_f}")));
    }
    let fine = BetaProblem::new(q, lambda_f, a, build_grid(n, points, 1.0)?)?;
    let coarse = BetaProblem::new(q, lambda_f, a, build_grid(n, points / 2, 1.0)?)?;
    let objective = |b: [f64; 2]| fine.relative(C64::new(b[0], b[1]));
    let (mut best, mut val) = nelder_mead_2d(objective, [0.0, 0.0], 1.0, 400);
    // Restart from the optimum to shed the simplex's memory of the start.
    for _ in 0..3 {
        let (b, v) = nelder_mead_2d(objective, best, 1e-3 * (1.0 + best[0].abs() + best[1].abs()), 400);
        if v >= val {
            break;
        }
        best = b;
        val = v;
    }
    let beta = C64::new(best[0], best[1]);
    let fit = BetaFit { beta: best, residual: val, residual_at_zero: fine.relative(ZERO), residual_coarse: coarse.relative(beta) };
    if !(fit.residual < fit.residual_coarse) {
        return Err(LabError::ResidualFloor(format!(
            "residual {:.3e} at N={} does not improve on {:.3e} at N={}",
            fit.residual,
            points,
            fit.residual_coarse,
            points / 2
        )));
    }
    Ok(fit)
}

/// `beta(q, lambda_F, alpha)` for `a = alpha + i`, fitted at `N = 64` in three dimensions.
pub fn solve_beta(q: f64, lambda_f: f64, alpha: f64) -> Result<C64> {
    Ok(solve_beta_for(q, lambda_f, C64::new(alpha, 1.0), 3, BETA_POINTS)?.value())
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct NullSolutionReport {
    /// `|L_h(u phi)|_2` between the singular ball and the window transition.
    pub residual: f64,
    /// `|grad(u phi)|_2` on the same region.
    pub gradient_norm: f64,
    /// `Lambda / h`, the size of `L_h` as a map from gradients to values.
    pub operator_scale: f64,
    /// `|(|x| L_h(u phi))|_2 / |grad(u phi)|_2`, the scale-invariant local ratio.
    pub local_relative: f64,
    /// Share of `|L_h(u phi)|^2` (outside the singular ball) lying where `grad phi != 0`.
    pub transition_fraction: f64,
}

impl NullSolutionReport {
    /// Normwise backward error `|L_h w| / (Lambda |grad w| / h)`.
    pub fn relative(&self) -> f64 {
        self.residual / (self.operator_scale * self.gradient_norm)
    }
}

/// Radius of the ball around the singularity excluded from null-solution checks.
pub const SINGULAR_BALL: f64 = 0.1;

/// Checks that `u phi` solves `L_h(u phi) = 0` away from the singularity and
/// the window transition, with the forcing concentrated in the transition.
pub fn verify_null_solution(config: &FrehseConfig, grid: Grid) -> Result<NullSolutionReport> {
    let field = frehse_field(config, grid)?;
    let op = assemble_operator(field)?;
    let phi = window(grid);
    let w = sample_u(config, grid).masked(&phi);
    let lw = op.apply_vec(&w.values);
    let h = grid.spacing;
    let (r_sing, r0, r1) = (SINGULAR_BALL * grid.side, WINDOW.0 * grid.side, WINDOW.1 * grid.side);
    // The stencil reaches one diagonal cell, so keep two cells clear of the transition.
    let inner = annulus_mask(&grid, r_sing, r0 - 2.0 * h);
    let (weighted, gradient_norm) = weighted_residual(&grid, &lw, &w, &inner);
    let residual = (lw.iter().zip(&inner).map(|(v, m)| m * v.norm_sqr()).sum::<f64>() * grid.cell_volume()).sqrt();
    let (mut total, mut transition) = (0.0, 0.0);
    for (i, v) in lw.iter().enumerate() {
        let r = radius(&grid.position(i), grid.dim);
        if r < r_sing {
            continue;
        }
        total += v.norm_sqr();
        if r >= r0 - 2.0 * h && r <= r1 + 2.0 * h {
            transition += v.norm_sqr();
        }
    }
    Ok(NullSolutionReport {
        residual,
        gradient_norm,
        operator_scale: op.big_lambda / h,
        local_relative: weighted / gradient_norm,
        transition_fraction: if total > 0.0 { transition / total } else { 1.0 },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlowupMode {
    Semigroup,
    Riesz,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GrowthRow {
    pub points: usize,
    pub p: f64,
    pub estimate: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GrowthReport {
    pub operator: String,
    pub mode: BlowupMode,
    pub p: f64,
    pub t: f64,
    pub rows: Vec<GrowthRow>,
    pub slope: f64,
    pub r2: f64,
    pub growing: bool,
}

impl GrowthReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("N,p,estimate\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{:.10e}\n", r.points, r.p, r.estimate));
        }
        s
    }
}

/// Trial inputs for the blow-up estimate: the windowed profile `u phi`, which
/// is not in `L^r` for `r > n/(q-1)` once the grid resolves the singularity.
pub fn blowup_trials(config: &FrehseConfig, grid: Grid) -> Vec<Vec<C64>> {
    vec![sample_u(config, grid).masked(&window(grid)).values]
}

/// Iterations of Boyd's power method per trial.
pub const BLOWUP_ITERATIONS: usize = 1;

/// Lower bounds for `|e^{-tL}|_{p -> p}` or `|grad L^{-1/2}|_{p -> p}` along a
/// refinement ladder, with the growth flag of their log-log fit.
pub fn blowup_experiment(
    coefficients: &CoefficientDescriptor,
    p: f64,
    ladder: &[usize],
    t: f64,
    mode: BlowupMode,
) -> Result<GrowthReport> {
    if !(p > 1.0 && p.is_finite()) || !(t > 0.0) {
        return Err(LabError::InvalidParams(format!("need 1 < p < inf and t > 0, got p={p}, t={t}")));
    }
    let profile = match coefficients {
        CoefficientDescriptor::Frehse(cfg) => cfg.clone(),
        _ => FrehseConfig::default(),
    };
    let dim = profile.n;
    let mut rows = Vec::new();
    for &points in ladder {
        let grid = build_grid(dim, points, 1.0)?;
        let op = assemble_operator(coefficients.build(grid)?)?;
        let engine = SemigroupEngine::new(op)?;
        let starts = blowup_trials(&profile, grid);
        let estimate = match mode {
            BlowupMode::Semigroup => {
                let adj = engine.adjoint();
                let z = C64::new(t, 0.0);
                lp_opnorm_power(&grid, p, &starts, BLOWUP_ITERATIONS, |x| engine.heat_vec(z, x), |x| adj.heat_vec(z, x))?
            }
            BlowupMode::Riesz => {
                let mut best: f64 = 0.0;
                for s in starts {
                    let f = GridFunction { grid, values: s }.mean_zero();
                    let den = f.lp_norm(p);
                    if den == 0.0 {
                        continue;
                    }
                    let r = gradient(&fractional_power_apply(&engine, 0.5, &f)?);
                    best = best.max(r.lp_norm(p) / den);
                }
                best
            }
        };
        rows.push(GrowthRow { points, p, estimate });
    }
    let ns: Vec<f64> = rows.iter().map(|r| r.points as f64).collect();
    let est: Vec<f64> = rows.iter().map(|r| r.estimate).collect();
    let (slope, r2, growing) = growth_flag(&ns, &est);
    Ok(GrowthReport { operator: coefficients.kind().to_string(), mode, p, t, rows, slope, r2, growing })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct NullSpaceCertificate {
    /// `|L_1 v|_2 / (Lambda |grad v|_2 / h)` inside the window, off the forcing annulus.
    pub residual: f64,
    pub v_lp: f64,
    pub v_l2: f64,
    pub w_l2: f64,
}

/// Radii of the construction, as fractions of the side: `eta` is 1 inside
/// `ETA.0` and 0 beyond `ETA.1`; `Phi` is 0 inside `CUT.0` and 1 beyond `CUT.1`.
pub const ETA: (f64, f64) = (0.025, 0.04);
pub const CUT: (f64, f64) = (0.05, 0.1);

/// Torus version of the global null solution: `w = u Phi phi`, `f = L_h w` on
/// the annulus where `grad Phi != 0`, `w_1 = L_1^{-1} f` and `v = w - w_1`.
/// `A_1 = eta I + (1 - eta) A` agrees with `A` wherever `w` lives.
pub fn null_space_construction(config: &FrehseConfig, coefficients: &CoefficientDescriptor, grid: Grid, p: f64) -> Result<(GridFunction, NullSpaceCertificate)> {
    let n = grid.dim as f64;
    if n > 2.0 && p <= 2.0 * n / (n - 2.0) {
        return Err(LabError::InvalidParams(format!("need p > 2n/(n-2) = {}, got {p}", 2.0 * n / (n - 2.0))));
    }
    let base = coefficients.build(grid)?;
    let side = grid.side;
    let a1 = CoefficientField::from_fn(grid, |x| {
        let c = base_at(&base, grid, x);
        let eta = radial_cutoff(radius(&x, grid.dim), ETA.0 * side, ETA.1 * side);
        let mut m: Vec<C64> = c.iter().map(|v| v * (1.0 - eta)).collect();
        for k in 0..grid.dim {
            m[k * grid.dim + k] += eta;
        }
        m
    });
    let op1 = assemble_operator(a1)?;
    let phi = window(grid);
    let profile: Vec<f64> = (0..grid.len())
        .map(|i| {
            let r = radius(&grid.position(i), grid.dim);
            (1.0 - radial_cutoff(r, CUT.0 * side, CUT.1 * side)) * phi[i]
        })
        .collect();
    let w = sample_u(config, grid).masked(&profile);
    let lw = op1.apply_vec(&w.values);
    let h = grid.spacing;
    let forcing = annulus_mask(&grid, CUT.0 * side - 2.0 * h, CUT.1 * side + 2.0 * h);
    let f = GridFunction { grid, values: lw.iter().zip(&forcing).map(|(v, m)| v * m).collect() }.mean_zero();
    let w1 = MeanZeroSolver::new(&op1)?.solve(&f)?;
    let v = w.sub(&w1);
    let lv = op1.apply_vec(&v.values);
    let interior = annulus_mask(&grid, 0.0, WINDOW.0 * side - 2.0 * h);
    let shell: Vec<f64> = interior.iter().zip(&forcing).map(|(a, b)| a * (1.0 - b)).collect();
    if shell.iter().all(|&m| m == 0.0) {
        return Err(LabError::InvalidResolution(grid.points));
    }
    let res = (0..grid.len()).map(|i| shell[i] * lv[i].norm_sqr()).sum::<f64>() * grid.cell_volume();
    let grad = gradient(&v).l2_norm();
    let certificate = NullSpaceCertificate {
        residual: res.sqrt() / (op1.big_lambda * grad / h),
        v_lp: v.lp_norm(p),
        v_l2: v.l2_norm(),
        w_l2: w.l2_norm(),
    };
    Ok((v, certificate))
}

/// Coefficient matrix of `field` at the dual point nearest `x`.
fn base_at(field: &CoefficientField, grid: Grid, x: [f64; 3]) -> Vec<C64> {
    let mut c = [0usize; 3];
    for k in 0..grid.dim {
        // Dual point `c` sits at `c h - side/2`.
        let j = ((x[k] + 0.5 * grid.side) / grid.spacing).round() as i64;
        c[k] = j.rem_euclid(grid.points as i64) as usize;
    }
    field.at(grid.index(c)).to_vec()
}
