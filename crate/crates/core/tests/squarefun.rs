use hardy_lab::coeffs::CoefficientField;
use hardy_lab::funcalc::{ContourQuadrature, SymbolFunction};
use hardy_lab::grid::{build_grid, Grid, GridFunction};
use hardy_lab::operator::{assemble_operator, DiscreteOperator};
use hardy_lab::semigroup::SemigroupEngine;
use hardy_lab::squarefun::*;
use hardy_lab::stats::coefficient_of_variation;
use hardy_lab::C64;

fn laplacian(dim: usize, n: usize) -> SemigroupEngine {
    SemigroupEngine::new(DiscreteOperator::identity_laplacian(build_grid(dim, n, 1.0).unwrap())).unwrap()
}

fn smooth(dim: usize, n: usize) -> SemigroupEngine {
    SemigroupEngine::new(assemble_operator(CoefficientField::smooth(build_grid(dim, n, 1.0).unwrap(), 1.0)).unwrap()).unwrap()
}

fn rel(a: &GridFunction, b: &GridFunction) -> f64 {
    a.sub(b).l2_norm() / b.l2_norm().max(1e-300)
}

#[test]
fn q_psi_fast_path_and_constants() {
    let e = smooth(2, 16);
    let g = e.grid();
    let ladder = ScaleLadder::default_for(&g);
    let quad = ContourQuadrature::for_engine(&e);
    let f = GridFunction::random(g, 2);
    let field = q_psi(&e, &SymbolFunction::psi0(), &quad, &ladder, &f).unwrap();
    for j in [0, 20, 63] {
        let t = ladder.ts[j];
        let want = e.heat_derivative_apply(t * t, 1, &f).unwrap();
        assert!(rel(&field.level_function(j), &want) < 1e-10);
    }
    let ones = GridFunction::constant(g, C64::new(1.0, 0.0));
    let z = q_psi(&e, &SymbolFunction::resolvent2(), &quad, &ladder, &ones).unwrap();
    assert!(z.values.iter().all(|v| v.norm() < 1e-9));
}

#[test]
fn q_psi_single_mode() {
    let e = laplacian(2, 16);
    let g = e.grid();
    let ladder = ScaleLadder::default_for(&g);
    let quad = ContourQuadrature::for_engine(&e);
    let k = [2, 1, 0];
    let mode = GridFunction::fourier_mode(g, [2, 1, 0]);
    let mu = g.laplacian_symbol(k);
    let psi = SymbolFunction::resolvent2();
    let field = q_psi(&e, &psi, &quad, &ladder, &mode).unwrap();
    for j in [5, 30, 50] {
        let t = ladder.ts[j];
        let want = mode.clone().scale(psi.evaluate(C64::new(mu * t * t, 0.0)));
        assert!(rel(&field.level_function(j), &want) < 1e-6, "level {j}");
    }
}

#[test]
fn area_functional_closed_forms() {
    let g = build_grid(2, 16, 1.0).unwrap();
    let ladder = ScaleLadder::default_for(&g);
    let cone = Cone::default();
    let zero = SpaceTimeField::zeros(g, ladder.clone());
    assert!(area_functional(&zero, &cone, 0.0).max_abs() == 0.0);

    let y0 = g.index([5, 9, 0]);
    let j0 = 30;
    let mut single = SpaceTimeField::zeros(g, ladder.clone());
    single.level_mut(j0)[y0] = C64::new(1.0, 0.0);
    let a = area_functional(&single, &cone, 0.0);
    let t = ladder.ts[j0];
    let expected = (g.cell_volume() * ladder.weights[j0] / t.powi(2)).sqrt();
    for x in 0..g.len() {
        let d = g.torus_dist(g.position(x), g.position(y0));
        let want = if d < t { expected } else { 0.0 };
        assert!((a.values[x].re - want).abs() < 1e-12 * expected, "x={x} d={d} t={t}");
    }
}

#[test]
fn fubini_identity_on_random_fields() {
    let g = build_grid(2, 32, 1.0).unwrap();
    let ladder = ScaleLadder::default_for(&g);
    let cone = Cone::default();
    let c_n = cone.fubini_constant(&g, &ladder);
    for seed in 0..3 {
        let levels: Vec<Vec<C64>> = (0..ladder.levels).map(|j| GridFunction::random(g, 100 * seed + j as u64).values).collect();
        let f = SpaceTimeField::from_levels(g, ladder.clone(), levels).unwrap();
        let a = area_functional(&f, &cone, 0.0);
        let ratio = a.l2_norm().powi(2) / f.l2_norm_sq();
        assert!((ratio / c_n - 1.0).abs() < 0.05, "ratio {ratio} vs {c_n}");
    }
    // Mid-scale cross-sections approach the area of the unit disc.
    let consts = cone.level_constants(&g, &ladder);
    let mid = ladder.ts.iter().position(|&t| t > 8.0 * g.spacing).unwrap();
    assert!((consts[mid] / std::f64::consts::PI - 1.0).abs() < 0.1);
}

#[test]
fn aperture_monotone_and_homogeneous() {
    let g = build_grid(2, 16, 1.0).unwrap();
    let ladder = ScaleLadder::default_for(&g);
    let levels: Vec<Vec<C64>> = (0..ladder.levels).map(|j| GridFunction::random(g, j as u64).values).collect();
    let f = SpaceTimeField::from_levels(g, ladder, levels).unwrap();
    let a1 = area_functional(&f, &Cone::new(1.0), 0.0);
    let a2 = area_functional(&f, &Cone::new(2.0), 0.0);
    assert!(a1.values.iter().zip(&a2.values).all(|(x, y)| x.re <= y.re + 1e-12));
    let twice = area_functional(&f.clone().scale(C64::new(2.0, 0.0)), &Cone::new(1.0), 0.0);
    assert!(rel(&twice, &a1.scale(C64::new(2.0, 0.0))) < 1e-12);
}

fn carleson_brute(f: &SpaceTimeField, x: usize) -> f64 {
    let g: Grid = f.grid;
    let mut best: f64 = 0.0;
    for level in 0..=g.levels() {
        let q = hardy_lab::grid::Cube::dyadic_containing(&g, x, level);
        let side = q.side(&g);
        let mut s = 0.0;
        for y in q.nodes(&g) {
            for j in 0..f.ladder.levels {
                if f.ladder.ts[j] <= side * (1.0 + 1e-12) {
                    s += f.level(j)[y].norm_sqr() * g.cell_volume() * f.ladder.weights[j];
                }
            }
        }
        best = best.max(s / q.measure(&g));
    }
    best.sqrt()
}

#[test]
fn carleson_matches_brute_force() {
    let g = build_grid(2, 8, 1.0).unwrap();
    let ladder = ScaleLadder::default_for(&g);
    let mut f = SpaceTimeField::zeros(g, ladder.clone());
    f.level_mut(10)[g.index([3, 4, 0])] = C64::new(0.5, -1.0);
    let c = carleson_functional(&f);
    for x in 0..g.len() {
        assert!((c.values[x].re - carleson_brute(&f, x)).abs() < 1e-12);
    }
    let levels: Vec<Vec<C64>> = (0..ladder.levels).map(|j| GridFunction::random(g, j as u64).values).collect();
    let r = SpaceTimeField::from_levels(g, ladder, levels).unwrap();
    let c = carleson_functional(&r);
    for x in 0..g.len() {
        assert!((c.values[x].re - carleson_brute(&r, x)).abs() < 1e-10 * c.values[x].re);
    }
    let c2 = carleson_functional(&r.clone().scale(C64::new(2.0, 0.0)));
    assert!(rel(&c2, &c.scale(C64::new(2.0, 0.0))) < 1e-12);
}

#[test]
fn quadratic_estimate_at_identity() {
    let e = laplacian(2, 16);
    let g = e.grid();
    let ladder = ScaleLadder::default_for(&g);
    let cone = Cone::default();
    let ratios: Vec<f64> = (0..20)
        .map(|s| {
            let f = GridFunction::random_mean_zero(g, s);
            conical_square_function(&e, &f, &ladder, &cone).unwrap().l2_norm() / f.l2_norm()
        })
        .collect();
    assert!(coefficient_of_variation(&ratios) < 0.02, "{ratios:?}");
    // Exact Fourier-side value: |Sf|^2 = sum_k |f_k|^2 sum_j w_j c_j psi0(t_j^2 mu_k)^2.
    let f = GridFunction::random_mean_zero(g, 0);
    let consts = cone.level_constants(&g, &ladder);
    let mut hat = f.values.clone();
    hardy_lab::fft::fftn(&g, &mut hat, false);
    let norm = g.cell_volume() / g.len() as f64;
    let want: f64 = hat
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mu = hardy_lab::fft::laplacian_symbol_at(&g, i);
            let w: f64 = (0..ladder.levels)
                .map(|j| {
                    let s = ladder.ts[j].powi(2) * mu;
                    ladder.weights[j] * consts[j] * (s * (-s).exp()).powi(2)
                })
                .sum();
            c.norm_sqr() * norm * w
        })
        .sum::<f64>()
        .sqrt();
    assert!((ratios[0] * f.l2_norm() / want - 1.0).abs() < 1e-8);

    let mode = GridFunction::fourier_mode(g, [3, 1, 0]);
    let s = conical_square_function(&e, &mode, &ladder, &cone).unwrap();
    let (lo, hi) = s.values.iter().fold((f64::MAX, 0.0f64), |(a, b), v| (a.min(v.re), b.max(v.re)));
    assert!(hi / lo - 1.0 < 1e-6);
    let ones = GridFunction::constant(g, C64::new(1.0, 0.0));
    assert!(conical_square_function(&e, &ones, &ladder, &cone).unwrap().max_abs() < 1e-9);
}

#[test]
fn vertical_square_function_single_mode() {
    let e = laplacian(2, 16);
    let g = e.grid();
    let ladder = ScaleLadder::default_for(&g);
    let k = [1, 2, 0];
    let mode = GridFunction::fourier_mode(g, [1, 2, 0]);
    let mu = g.laplacian_symbol(k);
    let s = vertical_square_function(&e, &mode, &ladder).unwrap();
    let factor = ladder_symbol_energy(&SymbolFunction::psi0(), &ladder, C64::new(mu, 0.0)).sqrt();
    for (v, m) in s.values.iter().zip(&mode.values) {
        assert!((v.re - m.norm() * factor).abs() < 1e-9 * factor * m.norm().max(1e-3));
    }
}

#[test]
fn pi_psi_is_adjoint_of_q_psi() {
    let e = smooth(2, 16);
    let adj = e.adjoint();
    let g = e.grid();
    let ladder = ScaleLadder::new(g.spacing, 1.0, 24).unwrap();
    let quad = ContourQuadrature::for_engine(&e);
    let levels: Vec<Vec<C64>> = (0..ladder.levels).map(|j| GridFunction::random(g, 50 + j as u64).values).collect();
    let big_f = SpaceTimeField::from_levels(g, ladder.clone(), levels).unwrap();
    let h = GridFunction::random(g, 7);
    for psi in [SymbolFunction::psi0(), SymbolFunction::resolvent2()] {
        let lhs = pi_psi(&e, &psi, &quad, &big_f).unwrap().inner(&h);
        let rhs = big_f.inner(&q_psi(&adj, &psi.conjugate(), &quad, &ladder, &h).unwrap());
        assert!((lhs - rhs).norm() < 1e-7 * lhs.norm(), "{}: {lhs} vs {rhs}", psi.name());
    }
}

fn reproducing_error(e: &SemigroupEngine, ladder: &ScaleLadder, seed: u64) -> f64 {
    let f = GridFunction::random(e.grid(), seed);
    let quad = ContourQuadrature::for_engine(e);
    let psi = SymbolFunction::psi0();
    let r = calderon_reproduce(e, &psi, &psi, &quad, ladder, &f).unwrap();
    r.sub(&f.clone().mean_zero()).l2_norm() / f.l2_norm()
}

#[test]
fn reproducing_formula_converges() {
    for e in [laplacian(2, 16), smooth(2, 16)] {
        let g = e.grid();
        let ladder = ScaleLadder::new(g.spacing / 32.0, g.side, 64).unwrap();
        let e1 = reproducing_error(&e, &ladder, 3);
        let e2 = reproducing_error(&e, &ladder.refined(), 3);
        assert!(e1 < 1e-3, "{e1}");
        assert!(e2 <= e1 / 2.0, "{e1} -> {e2}");
    }
}
