//! One runner per experiment name.

use crate::config::ExperimentConfig;
use crate::report::{fmt, Csv, Outcome};
use hardy_lab::coeffs::CoefficientDescriptor;
use hardy_lab::counterexamples::{
    blowup_experiment, null_space_construction, solve_beta_for, verify_null_solution, BlowupMode, FrehseConfig,
};
use hardy_lab::funcalc::{apply_symbol, builtin_symbols, fourier_oracle_for, relative_error, ContourQuadrature, SymbolFunction};
use hardy_lab::grid::{Cube, Grid, GridFunction};
use hardy_lab::hardy::{
    duality_pairing_check, hardy_norm, hl_maximal_l2, lambda_alpha_norm, molecular_decompose, sharp_maximal, theorem61_comparison,
    verify_molecule, HardyParams, LipschitzParams,
};
use hardy_lab::operator::assemble_operator;
use hardy_lab::riesz::{
    gradient, kato_check, region_contains, riesz_apply, s1_square_function, sobolev_cz_decompose, triebel_lizorkin_norm,
    OperatorRegionParams, RegionPoint, RegionVariant,
};
use hardy_lab::semigroup::{gaffney_probe, lp_lq_offdiag_probe, semigroup_lp_opnorm, SemigroupEngine};
use hardy_lab::squarefun::{conical_square_function, q_psi, Cone};
use hardy_lab::stats::{band, coefficient_of_variation};
use hardy_lab::tentspace::{atomic_decompose, tent_norm};
use hardy_lab::{LabError, C64};
use serde::Deserialize;

/// Why a run did not produce an outcome.
#[derive(Debug)]
pub enum RunError {
    /// Bad configuration; exit code 3.
    Config(String),
    /// The computation failed; exit code 2.
    Failure(String),
}

impl From<LabError> for RunError {
    fn from(e: LabError) -> Self {
        match e {
            LabError::InvalidDimension(_)
            | LabError::InvalidResolution(_)
            | LabError::InvalidGrid(_)
            | LabError::InvalidParams(_)
            | LabError::UnsupportedExponent(_)
            | LabError::EllipticityViolation { .. }
            | LabError::NonScalarOperator
            | LabError::AngleIncompatible(_)
            | LabError::DegenerateSets(_)
            | LabError::Config(_) => RunError::Config(e.to_string()),
            other => RunError::Failure(other.to_string()),
        }
    }
}

type Run = Result<Outcome, RunError>;

fn params<P: for<'de> Deserialize<'de>>(cfg: &ExperimentConfig) -> Result<P, RunError> {
    cfg.params().map_err(RunError::Config)
}

fn engine(cfg: &ExperimentConfig, grid: Grid) -> Result<SemigroupEngine, RunError> {
    let op = assemble_operator(cfg.operator.build(grid)?)?;
    Ok(SemigroupEngine::new(op)?)
}

fn battery(grid: Grid, seed: u64, count: usize) -> Vec<GridFunction> {
    (0..count as u64).map(|k| GridFunction::random_bumps(grid, seed * 1000 + k, 3).mean_zero()).collect()
}

pub fn quadrature(cfg: &ExperimentConfig, e: &SemigroupEngine) -> ContourQuadrature {
    let q = ContourQuadrature::for_engine(e);
    match cfg.quadrature_density {
        Some(d) => q.with_density(d),
        None => q,
    }
}

fn frehse_profile(cfg: &ExperimentConfig) -> FrehseConfig {
    match &cfg.operator {
        CoefficientDescriptor::Frehse(f) => f.clone(),
        _ => FrehseConfig::default(),
    }
}

fn is_identity(cfg: &ExperimentConfig) -> bool {
    matches!(cfg.operator, CoefficientDescriptor::Identity)
}

pub fn run(cfg: &ExperimentConfig) -> Run {
    match cfg.experiment.as_str() {
        "assemble-check" => assemble_check(cfg),
        "gaffney" => gaffney(cfg),
        "offdiag-pq" => offdiag_pq(cfg),
        "opnorm-sweep" => opnorm_sweep(cfg),
        "funcalc-accuracy" => funcalc_accuracy(cfg),
        "square-function" => square_function(cfg),
        "tent-decompose" => tent_decompose(cfg),
        "molecular-decompose" => molecular(cfg),
        "molecule-verify" => molecule_verify(cfg),
        "bmo-norm" => bmo_norm(cfg),
        "duality-pairing" => duality_pairing(cfg),
        "sharp-maximal" => sharp(cfg),
        "theorem61" => theorem61(cfg),
        "kato" => kato(cfg),
        "riesz-isometry" => riesz_isometry(cfg),
        "s1-compare" => s1_compare(cfg),
        "cz-decompose" => cz_decompose(cfg),
        "tl-norm" => tl_norm(cfg),
        "region" => region(cfg),
        "frehse-solve-beta" => frehse_solve_beta(cfg),
        "frehse-verify" => frehse_verify(cfg),
        "blowup" => blowup(cfg),
        "null-space" => null_space(cfg),
        other => Err(RunError::Config(format!("unknown experiment `{other}`"))),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NoParams {}

fn assemble_check(cfg: &ExperimentConfig) -> Run {
    let _: NoParams = params(cfg)?;
    let grid = cfg.grid()?;
    let op = assemble_operator(cfg.operator.build(grid)?)?;
    let one = GridFunction::constant(grid, C64::new(1.0, 0.0));
    let scale = op.big_lambda / (grid.spacing * grid.spacing);
    let constant_residual = op.apply(&one).max_abs() / scale;
    let f = GridFunction::random(grid, cfg.seed);
    let g = GridFunction::random(grid, cfg.seed + 1);
    let lhs = op.apply(&f).inner(&g);
    let rhs = f.inner(&op.adjoint().apply(&g));
    let adjoint_error = (lhs - rhs).norm() / lhs.norm();
    let mut out = Outcome::new("grid_core");
    out.metric("lambda", op.lambda).metric("big_lambda", op.big_lambda).metric("sector_angle", op.sector_angle);
    out.metric("constant_residual", constant_residual).metric("adjoint_error", adjoint_error);
    out.check("L annihilates constants", constant_residual < 1e-12);
    out.check("adjoint identity", adjoint_error < 1e-12);
    out.constant("lambda", op.lambda, 1e-12).constant("big_lambda", op.big_lambda, 1e-12);
    out.csv = out.metrics_csv();
    Ok(out)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OffDiagParams {
    #[serde(default = "slab_e")]
    e: [f64; 2],
    #[serde(default = "slab_f")]
    f: [f64; 2],
    #[serde(default)]
    times: Option<Vec<f64>>,
    #[serde(default = "two")]
    p: f64,
    #[serde(default = "two")]
    q: f64,
}

fn slab_e() -> [f64; 2] {
    [-0.1, 0.0]
}
fn slab_f() -> [f64; 2] {
    [0.2, 0.3]
}
fn two() -> f64 {
    2.0
}

fn slab(grid: &Grid, s: [f64; 2]) -> Vec<f64> {
    (0..grid.len())
        .map(|i| {
            let x = grid.position(i)[0] / grid.side;
            if x >= s[0] && x < s[1] { 1.0 } else { 0.0 }
        })
        .collect()
}

fn offdiag_run(cfg: &ExperimentConfig, gaussian_only: bool) -> Run {
    let pr: OffDiagParams = params(cfg)?;
    let grid = cfg.grid()?;
    let e = engine(cfg, grid)?;
    let s2 = grid.side * grid.side;
    let times = pr.times.clone().unwrap_or_else(|| vec![0.002 * s2, 0.004 * s2, 0.008 * s2, 0.016 * s2]);
    let (em, fm) = (slab(&grid, pr.e), slab(&grid, pr.f));
    let r = if gaussian_only { gaffney_probe(&e, &em, &fm, &times)? } else { lp_lq_offdiag_probe(&e, pr.p, pr.q, &em, &fm, &times)? };
    let module = "semigroup";
    let mut out = Outcome::new(module);
    out.metric("slope", r.slope).metric("r2", r.exponent_r2).metric("c", r.fitted_c).metric("big_c", r.fitted_big_c);
    out.check("negative slope", r.slope < 0.0);
    out.check("positive c", r.fitted_c > 0.0);
    if gaussian_only {
        out.check("r2 above 0.9", r.exponent_r2 > 0.9);
    }
    out.constant(if gaussian_only { "gaffney_c" } else { "offdiag_c" }, r.fitted_c, 0.05);
    out.csv = r.to_csv();
    out.plot = Some(("dist^2/t".into(), "ln ratio".into(), r.pairs.iter().filter(|x| x.2 > 0.0).map(|(d, t, v)| (d * d / t, v.ln())).collect()));
    Ok(out)
}

fn gaffney(cfg: &ExperimentConfig) -> Run {
    offdiag_run(cfg, true)
}

fn offdiag_pq(cfg: &ExperimentConfig) -> Run {
    offdiag_run(cfg, false)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OpnormParams {
    #[serde(default = "default_ps")]
    ps: Vec<f64>,
    #[serde(default = "default_trials")]
    trials: usize,
    #[serde(default = "default_t")]
    t: f64,
}

fn default_ps() -> Vec<f64> {
    vec![1.5, 2.0, 4.0, 8.0]
}
fn default_trials() -> usize {
    2
}
fn default_t() -> f64 {
    0.01
}

fn opnorm_sweep(cfg: &ExperimentConfig) -> Run {
    let pr: OpnormParams = params(cfg)?;
    let grid = cfg.grid()?;
    let e = engine(cfg, grid)?;
    let mut out = Outcome::new("semigroup");
    let mut csv = Csv::new(&["p", "t", "estimate"]);
    let mut pts = Vec::new();
    for &p in &pr.ps {
        let v = semigroup_lp_opnorm(&e, p, pr.trials, pr.t)?;
        csv.row(&[fmt(p), fmt(pr.t), fmt(v)]);
        pts.push((p, v));
        out.constant(&format!("opnorm_p{p}"), v, 0.05);
    }
    out.check("finite estimates", pts.iter().all(|x| x.1.is_finite()));
    out.metric("max_estimate", pts.iter().map(|x| x.1).fold(0.0, f64::max));
    out.csv = csv.finish();
    out.plot = Some(("p".into(), "estimate".into(), pts));
    Ok(out)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FuncalcParams {
    #[serde(default = "funcalc_tol")]
    tolerance: f64,
}

fn funcalc_tol() -> f64 {
    1e-5
}

fn funcalc_accuracy(cfg: &ExperimentConfig) -> Run {
    let pr: FuncalcParams = params(cfg)?;
    let grid = cfg.grid()?;
    let e = engine(cfg, grid)?;
    let quad = quadrature(cfg, &e);
    let f = GridFunction::random_bumps(grid, cfg.seed, 3).mean_zero();
    let mut csv = Csv::new(&["symbol", "relative_error"]);
    let mut out = Outcome::new("funcalc");
    let mut worst: f64 = 0.0;
    for psi in builtin_symbols() {
        let oracle = fourier_oracle_for(&e, &psi, &f)?;
        let got = apply_symbol(&e, &psi, &quad, &f)?;
        let err = relative_error(&got, &oracle);
        csv.row(&[psi.name(), fmt(err)]);
        out.metric(&format!("error_{}", psi.name()), err);
        worst = worst.max(err);
    }
    out.metric("worst", worst);
    out.check("contour matches the Fourier oracle", worst < pr.tolerance);
    out.meta("quadrature", serde_json::to_value(quad).unwrap());
    out.csv = csv.finish();
    Ok(out)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BatteryParams {
    #[serde(default = "default_battery")]
    battery: usize,
    #[serde(default = "one")]
    aperture: f64,
}

fn default_battery() -> usize {
    20
}
fn one() -> f64 {
    1.0
}

fn ratio_rows(out: &mut Outcome, header: &str, ratios: &[f64]) -> String {
    let mut csv = Csv::new(&["trial", header]);
    for (k, r) in ratios.iter().enumerate() {
        csv.row(&[k.to_string(), fmt(*r)]);
    }
    let (lo, hi) = band(ratios);
    out.metric("band_min", lo).metric("band_max", hi).metric("cv", coefficient_of_variation(ratios));
    csv.finish()
}

fn square_function(cfg: &ExperimentConfig) -> Run {
    let pr: BatteryParams = params(cfg)?;
    let grid = cfg.grid()?;
    let e = engine(cfg, grid)?;
    let ladder = cfg.ladder_for(&grid);
    let cone = Cone::new(pr.aperture);
    let mut ratios = Vec::new();
    for f in battery(grid, cfg.seed, pr.battery) {
        ratios.push(conical_square_function(&e, &f, &ladder, &cone)?.l2_norm() / f.l2_norm());
    }
    let mut out = Outcome::new("squarefun");
    out.csv = ratio_rows(&mut out, "ratio", &ratios);
    let (lo, hi) = band(&ratios);
    out.check("finite positive band", lo > 0.0 && hi.is_finite());
    if is_identity(cfg) {
        out.check("spectral identity: cv below 5%", coefficient_of_variation(&ratios) < 0.05);
    }
    out.constant("sf_band_min", lo, 0.2).constant("sf_band_max", hi, 0.2);
    out.meta("ladder", serde_json::to_value(&ladder).unwrap());
    Ok(out)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TentParams {
    #[serde(default = "one")]
    p: f64,
}

fn tent_decompose(cfg: &ExperimentConfig) -> Run {
    let pr: TentParams = params(cfg)?;
    let grid = cfg.grid()?;
    let e = engine(cfg, grid)?;
    let ladder = cfg.ladder_for(&grid);
    let f = GridFunction::random_bumps(grid, cfg.seed, 3).mean_zero();
    let quad = quadrature(cfg, &e);
    let field = q_psi(&e, &SymbolFunction::psi0(), &quad, &ladder, &f)?;
    let d = atomic_decompose(&field, pr.p)?;
    let norm = tent_norm(&field, pr.p, &Cone::default());
    let ratio = d.coefficient_sum() / norm.powf(pr.p);
    let error = d.reconstruction_error(&field);
    let mut out = Outcome::new("tentspace");
    out.metric("atoms", d.atoms.len() as f64).metric("reconstruction_error", error).metric("coefficient_ratio", ratio);
    out.check("exact reconstruction", error < 1e-12);
    out.check("atoms satisfy the size and support conditions", d.atoms.iter().all(|a| a.is_valid()));
    out.constant("coefficient_ratio", ratio, 0.2);
    out.meta("quadrature", serde_json::to_value(quad).unwrap());
    let mut csv = Csv::new(&["atom", "level", "cells", "lambda", "slack"]);
    for (j, a) in d.atoms.iter().enumerate() {
        csv.row(&[j.to_string(), d.levels[j].to_string(), a.cube.cells.to_string(), fmt(d.coefficients[j]), fmt(a.slack())]);
    }
    out.csv = csv.finish();
    out.meta("ladder", serde_json::to_value(&ladder).unwrap());
    Ok(out)
}

fn molecular(cfg: &ExperimentConfig) -> Run {
    let pr: TentParams = params(cfg)?;
    let grid = cfg.grid()?;
    let e = engine(cfg, grid)?;
    let ladder = cfg.ladder_for(&grid);
    let hp = HardyParams::new(pr.p, grid.dim)?;
    let f = GridFunction::random_bumps(grid, cfg.seed, 3).mean_zero();
    let d = molecular_decompose(&e, &f, &hp, &ladder)?;
    let norm = hardy_norm(&e, &f, &hp, &ladder, &Cone::default())?;
    let slacks: Vec<f64> = d.reports.iter().map(|r| r.slack_factor).collect();
    let (lo, hi) = band(&slacks);
    let ratio = d.coefficient_sum() / norm.powf(pr.p);
    let mut out = Outcome::new("hardy");
    out.metric("molecules", d.molecules.len() as f64).metric("reconstruction_error", d.reconstruction_error);
    out.metric("slack_min", lo).metric("slack_max", hi).metric("coefficient_ratio", ratio);
    out.check("every molecule verified", d.all_pass());
    out.check("reconstruction error below 5e-2", d.reconstruction_error < 5e-2);
    out.constant("coefficient_ratio", ratio, 0.25);
    let mut csv = Csv::new(&["molecule", "lambda", "side", "slack", "pass"]);
    for (j, r) in d.reports.iter().enumerate() {
        csv.row(&[j.to_string(), fmt(d.lambdas[j]), fmt(r.side), fmt(r.slack_factor), r.pass.to_string()]);
    }
    out.csv = csv.finish();
    out.meta("hardy_params", serde_json::to_value(hp).unwrap());
    out.meta("ladder", serde_json::to_value(&ladder).unwrap());
    Ok(out)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MoleculeParams {
    #[serde(default = "one")]
    p: f64,
    #[serde(default)]
    corner: Option<[usize; 3]>,
    #[serde(default)]
    cells: Option<usize>,
}

/// `(l^2 L)^M b` for a smooth bump `b` filling the cube, scaled so that `b` has
/// the atom normalisation `|b|_2 = |Q|^{1/2 - 1/p}`.
fn canonical_molecule(e: &SemigroupEngine, cube: &Cube, hp: &HardyParams) -> GridFunction {
    let grid = e.grid();
    let l = cube.side(&grid);
    let c = cube.center(&grid);
    let b = GridFunction::from_fn(grid, |x| {
        let mut v = 1.0;
        for k in 0..grid.dim {
            let d = grid.wrap(x[k] - c[k]) / (0.5 * l);
            v *= if d.abs() < 1.0 { (std::f64::consts::FRAC_PI_2 * d).cos().powi(2) } else { 0.0 };
        }
        C64::new(v, 0.0)
    });
    let target = cube.measure(&grid).powf(0.5 - 1.0 / hp.p);
    let mut m = b.clone().scale(C64::new(target / b.l2_norm(), 0.0));
    for _ in 0..hp.m {
        m = e.operator.apply(&m).scale(C64::new(l * l, 0.0));
    }
    m
}

fn molecule_verify(cfg: &ExperimentConfig) -> Run {
    let pr: MoleculeParams = params(cfg)?;
    let grid = cfg.grid()?;
    let e = engine(cfg, grid)?;
    let hp = HardyParams::new(pr.p, grid.dim)?;
    let cells = pr.cells.unwrap_or(grid.points / 8).max(2);
    let corner = pr.corner.unwrap_or([grid.points / 2 - cells / 2; 3]);
    let cube = Cube::new(corner, cells);
    let m = canonical_molecule(&e, &cube, &hp);
    let r = verify_molecule(&e, &m, &cube, &hp)?;
    let mut out = Outcome::new("hardy");
    out.metric("slack_factor", r.slack_factor).metric("ring_cap", r.ring_cap as f64);
    out.metric("worst_ring", r.worst.0 as f64).metric("worst_power", r.worst.1 as f64);
    out.check("molecule conditions", r.pass);
    out.constant("canonical_molecule_slack", r.slack_factor, 0.05);
    let mut csv = Csv::new(&["ring", "k", "bound", "required"]);
    for (i, row) in r.ring_bounds.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            csv.row(&[i.to_string(), k.to_string(), fmt(*v), fmt(r.required[i])]);
        }
    }
    out.csv = csv.finish();
    out.meta("hardy_params", serde_json::to_value(hp).unwrap());
    Ok(out)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BmoParams {
    #[serde(default)]
    alpha: f64,
    #[serde(default)]
    m: Option<u32>,
    #[serde(default = "five")]
    battery: usize,
}

fn five() -> usize {
    5
}

fn bmo_norm(cfg: &ExperimentConfig) -> Run {
    let pr: BmoParams = params(cfg)?;
    let grid = cfg.grid()?;
    let e = engine(cfg, grid)?;
    let n = grid.dim;
    let m = pr.m.unwrap_or(((pr.alpha + 0.5 * n as f64) / 2.0).floor() as u32 + 1);
    let lp = LipschitzParams::new(pr.alpha, m, n)?;
    let zero = lambda_alpha_norm(&e, &GridFunction::constant(grid, C64::new(1.0, 0.0)), &lp)?;
    let mut csv = Csv::new(&["trial", "norm", "sup"]);
    let mut worst_homog: f64 = 0.0;
    let mut ratios = Vec::new();
    for (k, g) in battery(grid, cfg.seed, pr.battery).into_iter().enumerate() {
        let a = lambda_alpha_norm(&e, &g, &lp)?;
        let b = lambda_alpha_norm(&e, &g.clone().scale(C64::new(0.0, 2.0)), &lp)?;
        worst_homog = worst_homog.max((b / a - 2.0).abs());
        csv.row(&[k.to_string(), fmt(a), fmt(g.max_abs())]);
        ratios.push(a / g.max_abs());
    }
    let mut out = Outcome::new("hardy");
    let (lo, hi) = band(&ratios);
    out.metric("constant_norm", zero).metric("homogeneity_error", worst_homog).metric("ratio_min", lo).metric("ratio_max", hi);
    out.check("vanishes on constants", zero == 0.0);
    out.check("absolutely homogeneous", worst_homog < 1e-10);
    out.constant("norm_over_sup_max", hi, 0.25);
    out.csv = csv.finish();
    Ok(out)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PairingParams {
    #[serde(default = "one")]
    p: f64,
    #[serde(default = "default_battery")]
    battery: usize,
}

fn duality_pairing(cfg: &ExperimentConfig) -> Run {
    let pr: PairingParams = params(cfg)?;
    let grid = cfg.grid()?;
    let e = engine(cfg, grid)?;
    let adj = e.adjoint();
    let ladder = cfg.ladder_for(&grid);
    let hp = HardyParams::new(pr.p, grid.dim)?;
    let f = GridFunction::random_bumps(grid, cfg.seed, 3).mean_zero();
    let d = molecular_decompose(&e, &f, &hp, &ladder)?;
    let gs = battery(grid, cfg.seed + 17, pr.battery);
    let mut csv = Csv::new(&["pair", "pairing", "lambda_norm", "ratio"]);
    let mut ratios = Vec::new();
    // Largest molecules first: they pair most strongly.
    let order = sorted_by_lambda(&d.lambdas);
    let count = pr.battery.min(order.len());
    for (k, &j) in order.iter().take(count).enumerate() {
        let c = duality_pairing_check(&adj, &gs[k], &d.molecules[j], &d.tent.atoms[j].cube, &hp)?;
        csv.row(&[k.to_string(), fmt(c.pairing), fmt(c.lambda_norm), fmt(c.ratio())]);
        ratios.push(c.ratio());
    }
    let mut out = Outcome::new("hardy");
    let (_, hi) = band(&ratios);
    out.metric("fitted_c", hi).metric("pairs", count as f64);
    out.check("finite pairing constant", hi.is_finite() && count > 0);
    out.constant("pairing_c", hi, 0.25);
    out.csv = csv.finish();
    Ok(out)
}

fn sorted_by_lambda(l: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..l.len()).collect();
    idx.sort_by(|&a, &b| l[b].partial_cmp(&l[a]).unwrap());
    idx
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SharpParams {
    #[serde(default = "two_u32")]
    m: u32,
    #[serde(default = "five")]
    battery: usize,
}

fn two_u32() -> u32 {
    2
}

fn sharp(cfg: &ExperimentConfig) -> Run {
    let pr: SharpParams = params(cfg)?;
    let grid = cfg.grid()?;
    let e = engine(cfg, grid)?;
    let mut csv = Csv::new(&["trial", "max_pointwise_ratio"]);
    let mut ratios = Vec::new();
    for (k, f) in battery(grid, cfg.seed, pr.battery).into_iter().enumerate() {
        let s = sharp_maximal(&e, &f, pr.m)?;
        let m2 = hl_maximal_l2(&f);
        let r = s.values.iter().zip(&m2.values).filter(|(_, b)| b.re > 0.0).map(|(a, b)| a.re / b.re).fold(0.0, f64::max);
        csv.row(&[k.to_string(), fmt(r)]);
        ratios.push(r);
    }
    let mut out = Outcome::new("hardy");
    let (_, hi) = band(&ratios);
    out.metric("fitted_c", hi);
    out.check("finite domination constant", hi.is_finite());
    out.constant(&format!("sharp_c_m{}", pr.m), hi, 0.25);
    out.csv = csv.finish();
    Ok(out)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Theorem61Params {
    #[serde(default = "four")]
    p: f64,
    #[serde(default)]
    m: Option<u32>,
    #[serde(default = "five")]
    battery: usize,
}

fn four() -> f64 {
    4.0
}

fn theorem61(cfg: &ExperimentConfig) -> Run {
    let pr: Theorem61Params = params(cfg)?;
    let grid = cfg.grid()?;
    let e = engine(cfg, grid)?;
    let ladder = cfg.ladder_for(&grid);
    let m = pr.m.unwrap_or((grid.dim as f64 / 4.0).floor() as u32 + 1);
    let mut csv = Csv::new(&["trial", "hardy_norm", "sharp_norm", "ratio"]);
    let mut ratios = Vec::new();
    for (k, f) in battery(grid, cfg.seed, pr.battery).into_iter().enumerate() {
        let (a, b) = theorem61_comparison(&e, &f, pr.p, m, &ladder, &Cone::default())?;
        csv.row(&[k.to_string(), fmt(a), fmt(b), fmt(a / b)]);
        ratios.push(a / b);
    }
    let mut out = Outcome::new("hardy");
    out.csv = ratio_rows(&mut out, "ratio", &ratios);
    let (lo, hi) = band(&ratios);
    out.check("two-sided band", lo > 0.0 && hi.is_finite());
    out.constant("theorem61_min", lo, 0.25).constant("theorem61_max", hi, 0.25);
    Ok(out)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KatoParams {
    #[serde(default = "default_battery")]
    battery: usize,
}

fn kato(cfg: &ExperimentConfig) -> Run {
    let pr: KatoParams = params(cfg)?;
    let grid = cfg.grid()?;
    let field = cfg.operator.build(grid)?;
    let hermitian = field.is_hermitian(1e-14);
    let e = SemigroupEngine::new(assemble_operator(field)?)?;
    let r = kato_check(&e, pr.battery)?;
    let mut out = Outcome::new("riesz");
    out.metric("ratio_min", r.ratio_min).metric("ratio_max", r.ratio_max);
    out.metric("energy_min", r.energy_min).metric("energy_max", r.energy_max);
    out.metric("lambda", r.lambda).metric("big_lambda", r.big_lambda);
    if is_identity(cfg) {
        out.check("ratio band within 1e-6 of 1", (r.ratio_min - 1.0).abs() < 1e-6 && (r.ratio_max - 1.0).abs() < 1e-6);
    }
    if hermitian {
        out.check("energy ratio within 1e-6 of 1", (r.energy_min - 1.0).abs() < 1e-6 && (r.energy_max - 1.0).abs() < 1e-6);
    }
    out.check("ellipticity sandwich widened by 10%", r.within_sandwich(0.1));
    out.constant("kato_min", r.ratio_min, 0.05).constant("kato_max", r.ratio_max, 0.05);
    out.csv = out.metrics_csv();
    Ok(out)
}

fn riesz_isometry(cfg: &ExperimentConfig) -> Run {
    let pr: KatoParams = params(cfg)?;
    let grid = cfg.grid()?;
    let e = engine(cfg, grid)?;
    let mut ratios = Vec::new();
    for f in battery(grid, cfg.seed, pr.battery) {
        ratios.push(riesz_apply(&e, &f)?.l2_norm() / f.l2_norm());
    }
    let mut out = Outcome::new("riesz");
    out.csv = ratio_rows(&mut out, "ratio", &ratios);
    let (lo, hi) = band(&ratios);
    if is_identity(cfg) {
        out.check("isometry within 1e-6", (lo - 1.0).abs() < 1e-6 && (hi - 1.0).abs() < 1e-6);
    }
    out.check("finite band", lo > 0.0 && hi.is_finite());
    out.constant("riesz_max", hi, 0.05);
    Ok(out)
}

fn s1_compare(cfg: &ExperimentConfig) -> Run {
    let pr: BatteryParams = params(cfg)?;
    let grid = cfg.grid()?;
    let e = engine(cfg, grid)?;
    let ladder = cfg.ladder_for(&grid);
    let cone = Cone::new(pr.aperture);
    let mut ratios = Vec::new();
    for f in battery(grid, cfg.seed, pr.battery) {
        let s1 = s1_square_function(&e, &f, &ladder, &cone)?;
        let s = conical_square_function(&e, &f, &ladder, &cone)?;
        ratios.push(s1.l2_norm() / s.l2_norm());
    }
    let mut out = Outcome::new("riesz");
    out.csv = ratio_rows(&mut out, "ratio", &ratios);
    let (lo, hi) = band(&ratios);
    out.check("two-sided band", lo > 0.0 && hi.is_finite());
    out.constant("s1_min", lo, 0.2).constant("s1_max", hi, 0.2);
    Ok(out)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CzParams {
    #[serde(default = "two")]
    p: f64,
    /// Heights as multiples of `|grad f|_p`.
    #[serde(default = "default_heights")]
    heights: Vec<f64>,
}

fn default_heights() -> Vec<f64> {
    vec![0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0]
}

fn cz_decompose(cfg: &ExperimentConfig) -> Run {
    let pr: CzParams = params(cfg)?;
    let grid = cfg.grid()?;
    let f = GridFunction::random_bumps(grid, cfg.seed, 3);
    let base = gradient(&f).lp_norm(pr.p);
    let mut csv = Csv::new(&["alpha", "cubes", "residual", "bad_gradient", "good_sup", "good_lp", "measure", "overlap"]);
    let mut out = Outcome::new("riesz");
    let mut worst_residual: f64 = 0.0;
    let mut pts = Vec::new();
    let mut maxes = [0.0f64; 4];
    for &h in &pr.heights {
        let alpha = h * base;
        let d = sobolev_cz_decompose(&f, pr.p, alpha)?;
        let c = d.constants;
        let res = d.residual(&f);
        worst_residual = worst_residual.max(res);
        for (m, v) in maxes.iter_mut().zip([c.bad_gradient, c.good_sup, c.good_lp, c.measure]) {
            *m = m.max(v);
        }
        csv.row(&[
            fmt(alpha),
            d.bad.len().to_string(),
            fmt(res),
            fmt(c.bad_gradient),
            fmt(c.good_sup),
            fmt(c.good_lp),
            fmt(c.measure),
            c.overlap.to_string(),
        ]);
        pts.push((alpha, c.measure));
    }
    out.metric("worst_residual", worst_residual);
    for (name, v) in ["bad_gradient", "good_sup", "good_lp", "measure"].iter().zip(maxes) {
        out.metric(&format!("max_{name}"), v);
        out.constant(&format!("cz_{name}"), v, 0.25);
    }
    out.check("exact decomposition", worst_residual < 1e-12);
    out.check("bounded constants", maxes.iter().all(|v| v.is_finite()));
    out.csv = csv.finish();
    out.plot = Some(("alpha".into(), "sum |Q| alpha^p / |grad f|_p^p".into(), pts));
    Ok(out)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TlParams {
    #[serde(default = "one")]
    s: f64,
    #[serde(default = "two")]
    p: f64,
    #[serde(default = "five")]
    battery: usize,
}

fn tl_norm(cfg: &ExperimentConfig) -> Run {
    let pr: TlParams = params(cfg)?;
    let grid = cfg.grid()?;
    let mut csv = Csv::new(&["trial", "plancherel_error", "tl_norm", "ratio_to_gradient"]);
    let mut worst: f64 = 0.0;
    let mut ratios = Vec::new();
    for (k, f) in battery(grid, cfg.seed, pr.battery).into_iter().enumerate() {
        let err = (triebel_lizorkin_norm(&f, 0.0, 2.0)? / f.l2_norm() - 1.0).abs();
        let tl = triebel_lizorkin_norm(&f, pr.s, pr.p)?;
        let r = tl / gradient(&f).lp_norm(pr.p);
        worst = worst.max(err);
        ratios.push(r);
        csv.row(&[k.to_string(), fmt(err), fmt(tl), fmt(r)]);
    }
    let mut out = Outcome::new("riesz");
    let (lo, hi) = band(&ratios);
    out.metric("plancherel_error", worst).metric("band_min", lo).metric("band_max", hi);
    out.check("Plancherel to 1e-8", worst < 1e-8);
    out.constant("tl_gradient_min", lo, 0.25).constant("tl_gradient_max", hi, 0.25);
    out.csv = csv.finish();
    Ok(out)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionParams {
    pub variant: RegionVariant,
    pub n: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub operator: Option<OperatorRegionParams>,
}

fn default_samples() -> usize {
    41
}

fn region(cfg: &ExperimentConfig) -> Run {
    let pr: RegionParams = params(cfg)?;
    let mut csv = Csv::new(&["s", "inv_p", "inside"]);
    let mut inside = 0usize;
    let k = pr.samples.max(2);
    for i in 0..k {
        for j in 0..k {
            let s = -1.0 + 2.0 * i as f64 / (k - 1) as f64;
            let ip = j as f64 / (k - 1) as f64;
            let v = region_contains(pr.variant, RegionPoint { s, inv_p: ip }, pr.n, pr.operator.as_ref())?;
            inside += v as usize;
            csv.row(&[fmt(s), fmt(ip), (v as u8).to_string()]);
        }
    }
    let mut out = Outcome::new("riesz");
    out.metric("inside_fraction", inside as f64 / (k * k) as f64);
    out.check("energy point (0, 1/2) inside", region_contains(pr.variant, RegionPoint { s: 0.0, inv_p: 0.5 }, pr.n, pr.operator.as_ref())?);
    out.csv = csv.finish();
    Ok(out)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BetaParams {
    #[serde(default = "default_points_64")]
    points: usize,
}

fn default_points_64() -> usize {
    64
}

fn frehse_solve_beta(cfg: &ExperimentConfig) -> Run {
    let pr: BetaParams = params(cfg)?;
    let f = frehse_profile(cfg);
    let fit = solve_beta_for(f.q, f.lambda_f, f.a(), f.n, pr.points)?;
    let closed = hardy_lab::counterexamples::beta_closed_form(f.q, f.lambda_f, f.alpha, f.n);
    let mut out = Outcome::new("counterexamples");
    out.metric("beta_re", fit.beta[0]).metric("beta_im", fit.beta[1]);
    out.metric("residual", fit.residual).metric("residual_at_zero", fit.residual_at_zero).metric("residual_coarse", fit.residual_coarse);
    out.metric("closed_form_distance", (fit.value() - closed).norm());
    out.check("residual at most 0.1x the beta = 0 residual", fit.residual <= 0.1 * fit.residual_at_zero);
    out.check("residual decreases under refinement", fit.residual < fit.residual_coarse);
    out.constant("beta_re", fit.beta[0], 1e-6).constant("beta_im", fit.beta[1], 1e-6);
    out.csv = out.metrics_csv();
    Ok(out)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifyParams {
    #[serde(default = "verify_ladder")]
    ladder: Vec<usize>,
}

fn verify_ladder() -> Vec<usize> {
    vec![32, 64]
}

fn frehse_verify(cfg: &ExperimentConfig) -> Run {
    let pr: VerifyParams = params(cfg)?;
    let f = frehse_profile(cfg);
    let mut csv = Csv::new(&["N", "relative", "local_relative", "transition_fraction"]);
    let mut out = Outcome::new("counterexamples");
    let mut rel = Vec::new();
    for &n in &pr.ladder {
        let grid = hardy_lab::grid::build_grid(f.n, n, 1.0)?;
        let r = verify_null_solution(&f, grid)?;
        csv.row(&[n.to_string(), fmt(r.relative()), fmt(r.local_relative), fmt(r.transition_fraction)]);
        out.check(&format!("mismatch concentrated in the transition at N={n}"), r.transition_fraction > 0.99);
        rel.push((n, r.relative()));
    }
    out.check("residual strictly decreasing", rel.windows(2).all(|w| w[1].1 < w[0].1));
    if let Some(&(n, r)) = rel.iter().find(|x| x.0 == 64) {
        out.check(&format!("relative residual below 1e-2 at N={n}"), r < 1e-2);
    }
    for (n, r) in &rel {
        out.metric(&format!("relative_N{n}"), *r);
    }
    out.csv = csv.finish();
    out.plot = Some(("N".into(), "relative residual".into(), rel.iter().map(|&(n, r)| (n as f64, r)).collect()));
    Ok(out)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BlowupParams {
    #[serde(default = "twenty")]
    p: f64,
    #[serde(default = "blowup_ladder")]
    ladder: Vec<usize>,
    #[serde(default = "blowup_t")]
    t: f64,
    #[serde(default = "semigroup_mode")]
    mode: BlowupMode,
    /// `growth` or `no-growth`; the verdict is checked against it when given.
    #[serde(default)]
    expect: Option<String>,
}

fn twenty() -> f64 {
    20.0
}
fn blowup_ladder() -> Vec<usize> {
    vec![16, 32, 64]
}
fn blowup_t() -> f64 {
    0.005
}
fn semigroup_mode() -> BlowupMode {
    BlowupMode::Semigroup
}

fn blowup(cfg: &ExperimentConfig) -> Run {
    let pr: BlowupParams = params(cfg)?;
    if let Some(e) = &pr.expect {
        if e != "growth" && e != "no-growth" {
            return Err(RunError::Config(format!("field `params.expect`: expected `growth` or `no-growth`, got `{e}`")));
        }
    }
    let r = blowup_experiment(&cfg.operator, pr.p, &pr.ladder, pr.t, pr.mode)?;
    let mut out = Outcome::new("counterexamples");
    out.verdict = if r.growing { "growth".into() } else { "no-growth".into() };
    out.metric("slope", r.slope).metric("r2", r.r2);
    if let Some(e) = &pr.expect {
        out.check(&format!("verdict is {e}"), &out.verdict == e);
    }
    out.csv = r.to_csv();
    out.plot = Some(("N".into(), "estimate".into(), r.rows.iter().map(|x| (x.points as f64, x.estimate)).collect()));
    Ok(out)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NullSpaceParams {
    #[serde(default = "twenty")]
    p: f64,
}

fn null_space(cfg: &ExperimentConfig) -> Run {
    let pr: NullSpaceParams = params(cfg)?;
    let grid = cfg.grid()?;
    let f = frehse_profile(cfg);
    let (_, c) = null_space_construction(&f, &cfg.operator, grid, pr.p)?;
    let mut out = Outcome::new("counterexamples");
    out.metric("residual", c.residual).metric("v_lp", c.v_lp).metric("v_l2", c.v_l2).metric("w_l2", c.w_l2);
    out.check("L_1 v vanishes inside the window", c.residual < 1e-2);
    out.check("v is nontrivial", c.v_l2 > 1e-2 * c.w_l2);
    out.csv = out.metrics_csv();
    Ok(out)
}
