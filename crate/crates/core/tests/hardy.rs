use hardy_lab::grid::{build_grid, lp_norm_values, Cube, GridFunction};
use hardy_lab::hardy::*;
use hardy_lab::operator::DiscreteOperator;
use hardy_lab::semigroup::SemigroupEngine;
use hardy_lab::squarefun::{Cone, ScaleLadder};
use hardy_lab::{LabError, C64};

fn laplacian(n: usize) -> SemigroupEngine {
    SemigroupEngine::new(DiscreteOperator::identity_laplacian(build_grid(2, n, 1.0).unwrap())).unwrap()
}

fn bump(g: hardy_lab::grid::Grid, c: [f64; 2], w: f64) -> GridFunction {
    GridFunction::from_fn(g, |x| {
        let r2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
        C64::new((-0.5 * r2 / (w * w)).exp(), 0.0)
    })
    .mean_zero()
}

#[test]
fn hardy_norm_vanishes_on_constants_and_is_homogeneous() {
    let e = laplacian(16);
    let g = e.grid();
    let ladder = ScaleLadder::default_for(&g);
    let cone = Cone::default();
    for p in [1.0, 2.0, 4.0] {
        let params = HardyParams::new(p, 2).unwrap();
        let c = GridFunction::constant(g, C64::new(1.0, 0.0));
        assert_eq!(hardy_norm(&e, &c, &params, &ladder, &cone).unwrap(), 0.0);
        let f = GridFunction::random_bumps(g, 3, 4).mean_zero();
        let a = hardy_norm(&e, &f, &params, &ladder, &cone).unwrap();
        let b = hardy_norm(&e, &f.clone().scale(C64::new(0.0, -3.0)), &params, &ladder, &cone).unwrap();
        assert!(a > 0.0 && (b / a - 3.0).abs() < 1e-10);
    }
}

#[test]
fn h1_norm_of_a_fixed_bump_is_stable_under_refinement() {
    let norms: Vec<f64> = [16, 32]
        .iter()
        .map(|&n| {
            let e = laplacian(n);
            let g = e.grid();
            let f = bump(g, [0.1, -0.2], 0.05);
            let f = f.clone().scale(C64::new(1.0 / f.lp_norm(1.0), 0.0));
            hardy_norm(&e, &f, &HardyParams::new(1.0, 2).unwrap(), &ScaleLadder::default_for(&g), &Cone::default()).unwrap()
        })
        .collect();
    assert!(norms.iter().all(|v| v.is_finite() && *v > 0.0));
    assert!((norms[1] / norms[0] - 1.0).abs() < 0.15, "{norms:?}");
}

#[test]
fn p_ladder_is_finite() {
    let e = laplacian(16);
    let g = e.grid();
    let f = GridFunction::random_bumps(g, 9, 3).mean_zero();
    for p in [0.8, 1.0, 1.5, 2.0] {
        let v = hardy_norm(&e, &f, &HardyParams::new(p, 2).unwrap(), &ScaleLadder::default_for(&g), &Cone::default()).unwrap();
        assert!(v.is_finite() && v > 0.0);
    }
}

#[test]
fn molecule_verifier() {
    let e = laplacian(32);
    let g = e.grid();
    let params = HardyParams::new(1.0, 2).unwrap();
    let cube = Cube::new([14, 14, 0], 2);
    let c = GridFunction::constant(g, C64::new(1.0, 0.0));
    assert!(matches!(verify_molecule(&e, &c, &cube, &params), Err(LabError::NullComponent(_))));

    // A strong dipole in the third annulus breaks the decay there.
    let mut far = GridFunction::zeros(g);
    far.values[g.index([21, 15, 0])] = C64::new(1e4, 0.0);
    far.values[g.index([21, 16, 0])] = C64::new(-1e4, 0.0);
    assert_eq!(cube.ring_of(&g, g.index([21, 15, 0])), 3);
    let r = verify_molecule(&e, &far, &cube, &params).unwrap();
    assert!(!r.pass);
    assert_eq!(r.worst.0, 3);
    assert_eq!(r.ring_cap, 4);
    assert_eq!(r.ring_bounds.len(), 5);
}

#[test]
fn molecular_decomposition_of_a_bump() {
    let e = laplacian(32);
    let g = e.grid();
    let f = bump(g, [0.1, -0.05], 0.05);
    let params = HardyParams::new(1.0, 2).unwrap();
    assert_eq!(params.m, 2);
    let ladder = ScaleLadder::default_for(&g);
    assert_eq!(ladder.levels, 64);
    let d = molecular_decompose(&e, &f, &params, &ladder).unwrap();
    assert!(d.reconstruction_error < 5e-2, "{}", d.reconstruction_error);
    assert!(d.all_pass(), "max slack {}", d.max_slack());
    assert!(d.molecules.len() > 1);
    let fine = molecular_decompose(&e, &f, &params, &ladder.refined()).unwrap();
    assert!(fine.reconstruction_error < 0.5 * d.reconstruction_error);

    let z = molecular_decompose(&e, &GridFunction::zeros(g), &params, &ladder).unwrap();
    assert!(z.molecules.is_empty());
    assert!(matches!(
        molecular_decompose(&e, &f, &HardyParams::new(1.5, 2).unwrap(), &ladder),
        Err(LabError::UnsupportedExponent(_))
    ));
}

#[test]
fn bmo_norm_properties() {
    let e = laplacian(16);
    let g = e.grid();
    let lip = LipschitzParams::new(0.0, 1, 2).unwrap();
    assert_eq!(lambda_alpha_norm(&e, &GridFunction::constant(g, C64::new(3.0, 1.0)), &lip).unwrap(), 0.0);
    for seed in 0..5 {
        let r = GridFunction::random(g, seed);
        let unit = GridFunction { grid: g, values: r.values.iter().map(|v| v / v.norm()).collect() };
        let v = lambda_alpha_norm(&e, &unit, &lip).unwrap();
        // e^{-tL} is an L^inf contraction fixing constants, so |(I - e^{-tL}) g|_inf <= 2 |g|_inf.
        assert!(v > 0.0 && v <= 2.0 * unit.max_abs() + 1e-12);
        let w = lambda_alpha_norm(&e, &unit.clone().scale(C64::new(2.0, 0.0)), &lip).unwrap();
        assert!((w / v - 2.0).abs() < 1e-12);
    }
}

#[test]
fn pairing_sanity() {
    let e = laplacian(16);
    let g = e.grid();
    let adj = e.adjoint();
    let params = HardyParams::new(1.0, 2).unwrap();
    let d = molecular_decompose(&e, &bump(g, [0.0, 0.0], 0.06), &params, &ScaleLadder::default_for(&g)).unwrap();
    let (m, cube) = (&d.molecules[0], d.tent.atoms[0].cube);
    let c = duality_pairing_check(&adj, &GridFunction::constant(g, C64::new(1.0, 0.0)), m, &cube, &params).unwrap();
    assert!(c.pairing < 1e-12 && c.lambda_norm == 0.0);
    let h = GridFunction::random_bumps(g, 4, 3);
    let a = duality_pairing_check(&adj, &h, m, &cube, &params).unwrap();
    let b = duality_pairing_check(&adj, &h, &m.clone().scale(C64::new(0.5, 0.0)), &cube, &params).unwrap();
    assert!((b.pairing / a.pairing - 0.5).abs() < 1e-12);
    assert_eq!(a.lambda_norm, b.lambda_norm);
    assert!(duality_pairing_check(&adj, &h, m, &cube, &HardyParams::new(1.0, 2).unwrap().with_m(0)).is_err());
}

#[test]
fn maximal_functions() {
    let e = laplacian(16);
    let g = e.grid();
    assert_eq!(sharp_maximal(&e, &GridFunction::constant(g, C64::new(1.0, 0.0)), 1).unwrap().max_abs(), 0.0);
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let f = GridFunction::random_bumps(g, seed, 3);
        let m2 = hl_maximal_l2(&f);
        let sharp = sharp_maximal(&e, &f, 1).unwrap();
        for (a, b) in sharp.values.iter().zip(&m2.values) {
            worst = worst.max(a.re / b.re);
        }
        // Doob's inequality for the dyadic maximal function at exponent 2.
        let lhs = lp_norm_values(&g, m2.values.iter().map(|v| v.re), 4.0);
        assert!(lhs <= 2f64.sqrt() * f.lp_norm(4.0) * (1.0 + 1e-12));
    }
    // Pointwise domination by M_2 with one fitted constant.
    assert!(worst.is_finite() && worst < 10.0, "{worst}");

    let node = g.index([5, 9, 0]);
    let f = bump(g, [(5.5 / 16.0) - 0.5, (9.5 / 16.0) - 0.5], 0.04);
    let s = sharp_maximal(&e, &f, 1).unwrap();
    let arg = (0..g.len()).max_by(|&a, &b| s.values[a].re.partial_cmp(&s.values[b].re).unwrap()).unwrap();
    assert!(g.torus_dist_inf(g.position(arg), g.position(node)) <= 2.0 * g.spacing + 1e-12);
}

#[test]
fn theorem61_sides() {
    let e = laplacian(16);
    let g = e.grid();
    let ladder = ScaleLadder::default_for(&g);
    let cone = Cone::default();
    let (l, r) = theorem61_comparison(&e, &GridFunction::constant(g, C64::new(1.0, 0.0)), 4.0, 1, &ladder, &cone).unwrap();
    assert_eq!((l, r), (0.0, 0.0));
    let f = GridFunction::random_bumps(g, 2, 3).mean_zero();
    let (l1, r1) = theorem61_comparison(&e, &f, 4.0, 1, &ladder, &cone).unwrap();
    let (l2, r2) = theorem61_comparison(&e, &f.clone().scale(C64::new(3.0, 0.0)), 4.0, 1, &ladder, &cone).unwrap();
    assert!((l2 / l1 - 3.0).abs() < 1e-9 && (r2 / r1 - 3.0).abs() < 1e-9);
    assert!(theorem61_comparison(&e, &f, 2.0, 1, &ladder, &cone).is_err());
}
