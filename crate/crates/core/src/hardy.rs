//! Adapted Hardy norms, molecules, the molecular decomposition, `BMO_L` and
//! `Lambda^alpha_L` norms, and the sharp maximal operator.

use crate::error::{LabError, Result};
use crate::funcalc::{ContourQuadrature, SymbolFunction};
use crate::grid::{dyadic_slot, dyadic_sums, lp_norm_values, Cube, Grid, GridFunction};
use crate::semigroup::SemigroupEngine;
use crate::solve::MeanZeroSolver;
use crate::squarefun::{area_functional, q_psi, Cone, ScaleLadder};
use crate::tentspace::{atomic_decompose, calderon_constant, pi_ml, TentDecomposition};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

/// Molecules pass when every ring ratio is at most this.
pub const MOLECULE_TOLERANCE: f64 = 64.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardyParams {
    pub p: f64,
    pub m: u32,
    pub epsilon: f64,
    pub tolerance: f64,
}

impl HardyParams {
    /// `epsilon = 1` and the smallest admissible `M` plus one.
    pub fn new(p: f64, n: usize) -> Result<Self> {
        if !(p > 0.0 && p.is_finite()) {
            return Err(LabError::InvalidParams(format!("p = {p}")));
        }
        let need = 0.5 * n as f64 * (1.0 / p - 0.5);
        let m = need.max(0.0).ceil() as u32 + 1;
        Ok(Self { p, m, epsilon: 1.0, tolerance: MOLECULE_TOLERANCE })
    }

    pub fn with_m(self, m: u32) -> Self {
        Self { m, ..self }
    }

    /// `M > (n/2)(1/p - 1/2)`.
    pub fn molecule_admissible(&self, n: usize) -> bool {
        self.m as f64 > 0.5 * n as f64 * (1.0 / self.p - 0.5)
    }

    /// `(2^i l)^{n/2 - n/p} 2^{-i epsilon}`.
    pub fn ring_bound(&self, n: usize, side: f64, ring: usize) -> f64 {
        let r = (1u64 << ring) as f64;
        let nn = n as f64;
        (r * side).powf(0.5 * nn - nn / self.p) * r.powf(-self.epsilon)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzParams {
    pub alpha: f64,
    pub m: u32,
}

impl LipschitzParams {
    pub fn new(alpha: f64, m: u32, n: usize) -> Result<Self> {
        if !(alpha >= 0.0) || (m as f64) <= 0.5 * (alpha + 0.5 * n as f64) {
            return Err(LabError::InvalidParams(format!("need alpha >= 0 and M > (alpha + n/2)/2, got alpha={alpha}, M={m}")));
        }
        Ok(Self { alpha, m })
    }
}

/// Symbol used for `|f|_{H^p_L}`: `z e^{-z}` for `p <= 2`, and for `p > 2`
/// `z^M e^{-z} / (1+z)^M` with `M > n/4`.
pub fn hardy_symbol(p: f64, n: usize) -> SymbolFunction {
    if p <= 2.0 {
        SymbolFunction::psi0()
    } else {
        SymbolFunction::damped_power(n as u32 / 4 + 1)
    }
}

/// `|| (iint_Gamma |psi(t^2 L) f|^2 dy dt / t^{n+1})^{1/2} ||_p`.
pub fn hardy_norm(engine: &SemigroupEngine, f: &GridFunction, params: &HardyParams, ladder: &ScaleLadder, cone: &Cone) -> Result<f64> {
    let psi = hardy_symbol(params.p, engine.grid().dim);
    let quad = ContourQuadrature::for_engine(engine);
    // psi(0) = 0, so constants contribute nothing; drop them exactly.
    let field = q_psi(engine, &psi, &quad, ladder, &f.clone().mean_zero())?;
    Ok(area_functional(&field, cone, 0.0).lp_norm(params.p))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MoleculeReport {
    pub center: [f64; 3],
    pub side: f64,
    /// `ring_bounds[i][k] = |(l^{-2} L^{-1})^k m|_{L^2(S_i)}`.
    pub ring_bounds: Vec<Vec<f64>>,
    pub required: Vec<f64>,
    /// Largest ring admitted by the torus.
    pub ring_cap: usize,
    pub slack_factor: f64,
    /// `(i, k)` attaining the slack.
    pub worst: (usize, usize),
    pub pass: bool,
}

/// Evaluates the molecule conditions for `k = 0..=M` on every ring.
pub fn verify_molecule(engine: &SemigroupEngine, m: &GridFunction, cube: &Cube, params: &HardyParams) -> Result<MoleculeReport> {
    let solver = MeanZeroSolver::new(&engine.operator)?;
    verify_molecule_with(&solver, m, cube, params)
}

/// As [`verify_molecule`], reusing a factorisation of `L`.
pub fn verify_molecule_with(solver: &MeanZeroSolver, m: &GridFunction, cube: &Cube, params: &HardyParams) -> Result<MoleculeReport> {
    let grid = m.grid;
    let rel = m.relative_mean();
    if rel > 1e-10 {
        return Err(LabError::NullComponent(rel));
    }
    let side = cube.side(&grid);
    let cap = cube.max_ring(&grid);
    let rings: Vec<usize> = (0..grid.len()).map(|i| cube.ring_of(&grid, i)).collect();
    let hn = grid.cell_volume();
    let mut ring_bounds = vec![vec![0.0; params.m as usize + 1]; cap + 1];
    let mut v = m.clone().mean_zero();
    for k in 0..=params.m as usize {
        if k > 0 {
            v = solver.solve(&v)?.scale(C64::new(1.0 / (side * side), 0.0));
        }
        let mut acc = vec![0.0; cap + 1];
        for (x, &r) in v.values.iter().zip(&rings) {
            acc[r] += x.norm_sqr();
        }
        for i in 0..=cap {
            ring_bounds[i][k] = (acc[i] * hn).sqrt();
        }
    }
    let required: Vec<f64> = (0..=cap).map(|i| params.ring_bound(grid.dim, side, i)).collect();
    let mut slack = 0.0;
    let mut worst = (0, 0);
    for i in 0..=cap {
        for k in 0..=params.m as usize {
            let r = ring_bounds[i][k] / required[i];
            if r > slack {
                slack = r;
                worst = (i, k);
            }
        }
    }
    Ok(MoleculeReport {
        center: cube.center(&grid),
        side,
        ring_bounds,
        required,
        ring_cap: cap,
        slack_factor: slack,
        worst,
        pass: slack <= params.tolerance,
    })
}

#[derive(Clone, Debug)]
pub struct MolecularDecomposition {
    pub lambdas: Vec<f64>,
    pub molecules: Vec<GridFunction>,
    pub reports: Vec<MoleculeReport>,
    pub tent: TentDecomposition,
    /// `|f - sum lambda_j m_j|_2 / |f|_2`.
    pub reconstruction_error: f64,
}

impl MolecularDecomposition {
    pub fn coefficient_sum(&self) -> f64 {
        self.lambdas.iter().map(|l| l.powf(self.tent.p)).sum()
    }

    pub fn all_pass(&self) -> bool {
        self.reports.iter().all(|r| r.pass)
    }

    pub fn max_slack(&self) -> f64 {
        self.reports.iter().map(|r| r.slack_factor).fold(0.0, f64::max)
    }
}

/// `f = c_M pi_{M,L}(t^2 L e^{-t^2 L} f)`, with the tent field split into
/// atoms and each atom mapped to a molecule `m_j = c_M pi_{M,L}(a_j)`.
pub fn molecular_decompose(engine: &SemigroupEngine, f: &GridFunction, params: &HardyParams, ladder: &ScaleLadder) -> Result<MolecularDecomposition> {
    let p = params.p;
    if !(p > 0.0 && p <= 1.0) {
        return Err(LabError::UnsupportedExponent(p));
    }
    let rel = f.relative_mean();
    if rel > 1e-10 {
        return Err(LabError::NullComponent(rel));
    }
    let quad = ContourQuadrature::for_engine(engine);
    let field = q_psi(engine, &SymbolFunction::psi0(), &quad, ladder, f)?;
    let tent = atomic_decompose(&field, p)?;
    let c = C64::new(calderon_constant(params.m), 0.0);
    let solver = MeanZeroSolver::new(&engine.operator)?;
    let mut molecules = Vec::with_capacity(tent.atoms.len());
    let mut reports = Vec::with_capacity(tent.atoms.len());
    let mut sum = GridFunction::zeros(f.grid);
    for (atom, &lambda) in tent.atoms.iter().zip(&tent.coefficients) {
        let m = pi_ml(engine, params.m, &atom.field())?.scale(c).mean_zero();
        sum.axpy(C64::new(lambda, 0.0), &m);
        reports.push(verify_molecule_with(&solver, &m, &atom.cube, params)?);
        molecules.push(m);
    }
    let norm = f.l2_norm();
    let reconstruction_error = if norm == 0.0 { 0.0 } else { f.sub(&sum).l2_norm() / norm };
    Ok(MolecularDecomposition { lambdas: tent.coefficients.clone(), molecules, reports, tent, reconstruction_error })
}

/// Per dyadic level `m`, the cube means of `|h_m|^2` in the layout of [`dyadic_sums`].
fn cube_means(grid: &Grid, level: usize, h: &[C64]) -> Vec<f64> {
    let sq: Vec<f64> = h.iter().map(|v| v.norm_sqr()).collect();
    let cells = (1usize << level).pow(grid.dim as u32) as f64;
    dyadic_sums(grid, &sq)[level].iter().map(|s| s / cells).collect()
}

fn binomial(m: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (m - i) as f64 / (i + 1) as f64)
}

/// `(I - e^{-s L})^M g` on the mean-zero part (constants are annihilated exactly).
pub fn oscillation(engine: &SemigroupEngine, s: f64, m: u32, g: &GridFunction) -> Result<GridFunction> {
    let perp = g.clone().mean_zero();
    let terms: Vec<(C64, C64)> = (1..=m)
        .map(|k| {
            let sign = if k % 2 == 1 { -1.0 } else { 1.0 };
            (C64::new(k as f64 * s, 0.0), C64::new(sign * binomial(m, k), 0.0))
        })
        .collect();
    let mut v = if terms.is_empty() { vec![C64::new(0.0, 0.0); g.len()] } else { engine.heat_combination(&terms, &perp.values)? };
    for (a, b) in v.iter_mut().zip(&perp.values) {
        *a += b;
    }
    Ok(GridFunction { grid: g.grid, values: v })
}

/// Cube means of `|(I - e^{-l(Q)^2 L})^M g|^2` for every dyadic level.
fn oscillation_means(engine: &SemigroupEngine, g: &GridFunction, m: u32) -> Result<Vec<Vec<f64>>> {
    let grid = g.grid;
    (0..=grid.levels())
        .map(|level| {
            let side = (1usize << level) as f64 * grid.spacing;
            let h = oscillation(engine, side * side, m, g)?;
            Ok(cube_means(&grid, level, &h.values))
        })
        .collect()
}

/// `sup_Q |Q|^{-alpha/n} (|Q|^{-1} int_Q |(I - e^{-l(Q)^2 L})^M g|^2)^{1/2}` over dyadic cubes.
pub fn lambda_alpha_norm(engine: &SemigroupEngine, g: &GridFunction, params: &LipschitzParams) -> Result<f64> {
    let grid = g.grid;
    let means = oscillation_means(engine, g, params.m)?;
    let mut best: f64 = 0.0;
    for (level, avg) in means.iter().enumerate() {
        let side = (1usize << level) as f64 * grid.spacing;
        let w = side.powf(-params.alpha);
        for a in avg {
            best = best.max(w * a.sqrt());
        }
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PairingCheck {
    /// `|<g, m>|`.
    pub pairing: f64,
    /// `|g|_{Lambda^alpha_{L*}}` with `alpha = n (1/p - 1)`.
    pub lambda_norm: f64,
    pub molecule_slack: f64,
}

impl PairingCheck {
    pub fn ratio(&self) -> f64 {
        if self.pairing == 0.0 {
            0.0
        } else {
            self.pairing / self.lambda_norm
        }
    }
}

/// Pairing of `g` with a molecule against the `Lambda^alpha_{L*}` norm of `g`.
/// `engine_adj` wraps `L*`; the molecule is certified against `L`.
pub fn duality_pairing_check(
    engine_adj: &SemigroupEngine,
    g: &GridFunction,
    m: &GridFunction,
    cube: &Cube,
    params: &HardyParams,
) -> Result<PairingCheck> {
    let n = g.grid.dim;
    if !(params.p > 0.0 && params.p <= 1.0) || !params.molecule_admissible(n) {
        return Err(LabError::InvalidParams(format!("p = {}, M = {}", params.p, params.m)));
    }
    let alpha = n as f64 * (1.0 / params.p - 1.0);
    let lip = LipschitzParams::new(alpha, params.m, n)?;
    let forward = engine_adj.adjoint();
    let report = verify_molecule(&forward, m, cube, params)?;
    if !report.pass {
        return Err(LabError::InvalidParams(format!("not a molecule: slack {:.3e} at ring/power {:?}", report.slack_factor, report.worst)));
    }
    Ok(PairingCheck {
        pairing: g.inner(m).norm(),
        lambda_norm: lambda_alpha_norm(engine_adj, g, &lip)?,
        molecule_slack: report.slack_factor,
    })
}

fn dyadic_max(grid: &Grid, means: &[Vec<f64>]) -> GridFunction {
    let values = (0..grid.len())
        .map(|x| {
            let m = means.iter().enumerate().map(|(level, avg)| avg[dyadic_slot(grid, x, level)]).fold(0.0, f64::max);
            C64::new(m.sqrt(), 0.0)
        })
        .collect();
    GridFunction { grid: *grid, values }
}

/// `M#f(x) = max_{dyadic Q containing x} (|Q|^{-1} int_Q |(I - e^{-l(Q)^2 L})^M f|^2)^{1/2}`.
pub fn sharp_maximal(engine: &SemigroupEngine, f: &GridFunction, m: u32) -> Result<GridFunction> {
    if m < 1 {
        return Err(LabError::InvalidParams("M must be at least 1".into()));
    }
    let means = oscillation_means(engine, f, m)?;
    Ok(dyadic_max(&f.grid, &means))
}

/// `M_2 f(x) = max_{dyadic Q containing x} (|Q|^{-1} int_Q |f|^2)^{1/2}`.
pub fn hl_maximal_l2(f: &GridFunction) -> GridFunction {
    let grid = f.grid;
    let means: Vec<Vec<f64>> = (0..=grid.levels()).map(|level| cube_means(&grid, level, &f.values)).collect();
    dyadic_max(&grid, &means)
}

/// `(|f|_{H^p_L}, |M#_M f|_p)` for `p > 2`, `M > n/4`.
pub fn theorem61_comparison(engine: &SemigroupEngine, f: &GridFunction, p: f64, m: u32, ladder: &ScaleLadder, cone: &Cone) -> Result<(f64, f64)> {
    let n = f.grid.dim;
    if !(p > 2.0 && p.is_finite()) || (m as f64) <= 0.25 * n as f64 {
        return Err(LabError::InvalidParams(format!("need 2 < p < inf and M > n/4, got p={p}, M={m}")));
    }
    let params = HardyParams { p, m, epsilon: 1.0, tolerance: MOLECULE_TOLERANCE };
    let lhs = hardy_norm(engine, f, &params, ladder, cone)?;
    let sharp = sharp_maximal(engine, f, m)?;
    let rhs = lp_norm_values(&f.grid, sharp.values.iter().map(|v| v.re), p);
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::operator::DiscreteOperator;

    #[test]
    fn default_orders() {
        assert_eq!(HardyParams::new(1.0, 2).unwrap().m, 2);
        assert_eq!(HardyParams::new(0.5, 3).unwrap().m, 4);
        assert!(HardyParams::new(1.0, 2).unwrap().molecule_admissible(2));
        assert!(LipschitzParams::new(0.0, 1, 2).is_ok());
        assert!(LipschitzParams::new(1.0, 1, 2).is_err());
    }

    #[test]
    fn hl_maximal_of_a_cell() {
        let g = build_grid(2, 8, 1.0).unwrap();
        let y = g.index([2, 5, 0]);
        let m = hl_maximal_l2(&GridFunction::delta(g, y));
        let x = g.index([3, 5, 0]);
        // Smallest common dyadic cube of columns 2 and 3 has 2 cells per side.
        let delta = GridFunction::delta(g, y);
        let want = delta.values[y].norm() * (1.0f64 / 4.0).sqrt();
        assert!((m.values[x].re - want).abs() < 1e-12);
        assert!((m.values[y].re - delta.values[y].norm()).abs() < 1e-12);
    }

    #[test]
    fn constants_vanish() {
        let g = build_grid(2, 8, 1.0).unwrap();
        let e = SemigroupEngine::new(DiscreteOperator::identity_laplacian(g)).unwrap();
        let c = GridFunction::constant(g, C64::new(2.0, -1.0));
        assert_eq!(sharp_maximal(&e, &c, 2).unwrap().max_abs(), 0.0);
        let lip = LipschitzParams::new(0.0, 1, 2).unwrap();
        assert_eq!(lambda_alpha_norm(&e, &c, &lip).unwrap(), 0.0);
        let m = hl_maximal_l2(&c);
        assert!(m.values.iter().all(|v| (v.re - 5f64.sqrt()).abs() < 1e-12));
    }
}
