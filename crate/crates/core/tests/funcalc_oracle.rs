use hardy_lab::coeffs::CoefficientField;
use hardy_lab::funcalc::*;
use hardy_lab::grid::{build_grid, GridFunction};
use hardy_lab::operator::assemble_operator;
use hardy_lab::semigroup::{Method, SemigroupEngine};
use hardy_lab::C64;

fn engine(points: usize, c: C64, method: Method) -> SemigroupEngine {
    let g = build_grid(2, points, 1.0).unwrap();
    let op = assemble_operator(CoefficientField::scalar(g, c)).unwrap();
    SemigroupEngine::with_method(op, method).unwrap()
}

#[test]
fn contour_matches_fft_for_every_builtin() {
    for c in [C64::new(1.0, 0.0), C64::new(1.0, 0.5)] {
        let e = engine(16, c, Method::Auto);
        let f = GridFunction::random_mean_zero(e.grid(), 11);
        let quad = ContourQuadrature::for_engine(&e);
        for psi in builtin_symbols() {
            let psi = psi.scaled(0.0025);
            let got = apply_symbol_contour(&e, &psi, &quad, &f).unwrap();
            let want = fourier_oracle_for(&e, &psi, &f).unwrap();
            let err = relative_error(&got, &want);
            assert!(err < 1e-6, "{} c={c}: {err:.3e}", psi.name());
        }
    }
}

#[test]
fn krylov_contour_matches_fft() {
    let e = engine(32, C64::new(1.0, 0.5), Method::Krylov);
    let f = GridFunction::random_mean_zero(e.grid(), 3);
    let quad = ContourQuadrature::for_engine(&e);
    let psi = SymbolFunction::resolvent2().scaled(0.0025);
    let got = apply_symbol_contour(&e, &psi, &quad, &f).unwrap();
    let want = fourier_oracle_for(&e, &psi, &f).unwrap();
    let err = relative_error(&got, &want);
    assert!(err < 1e-5, "{err:.3e}");
}

#[test]
fn constant_mode_and_null_component() {
    let e = engine(16, C64::new(1.0, 0.0), Method::Auto);
    let quad = ContourQuadrature::for_engine(&e);
    let f = GridFunction::random(e.grid(), 5);
    let heat = SymbolFunction::damped_power(0).scaled(0.01);
    let got = apply_symbol_contour(&e, &heat, &quad, &f).unwrap();
    let want = fourier_oracle_for(&e, &heat, &f).unwrap();
    assert!(relative_error(&got, &want) < 1e-6);
    let inv = SymbolFunction::power(-0.5);
    assert!(matches!(apply_symbol_contour(&e, &inv, &quad, &f), Err(hardy_lab::LabError::NullComponent(_))));
    assert!(matches!(fractional_power_apply(&e, 0.5, &f), Err(hardy_lab::LabError::NullComponent(_))));
}

#[test]
fn fractional_powers_and_sqrt() {
    let e = engine(16, C64::new(1.0, 0.5), Method::Auto);
    let f = GridFunction::random_mean_zero(e.grid(), 9);
    for alpha in [0.25, 0.5, 1.0] {
        let got = fractional_power_apply(&e, alpha, &f).unwrap();
        let want = fourier_oracle_for(&e, &SymbolFunction::power(-alpha), &f).unwrap();
        assert!(relative_error(&got, &want) < 1e-8, "alpha {alpha}");
    }
    let got = sqrt_apply(&e, &f).unwrap();
    let want = fourier_oracle_for(&e, &SymbolFunction::power(0.5), &f).unwrap();
    assert!(relative_error(&got, &want) < 1e-8);
    // sqrt(L) sqrt(L) = L on mean-zero data.
    let twice = sqrt_apply(&e, &got).unwrap();
    assert!(relative_error(&twice, &e.operator.apply(&f)) < 1e-7);
}

#[test]
fn oracle_rejects_matrix_coefficients() {
    let g = build_grid(2, 8, 1.0).unwrap();
    let op = assemble_operator(CoefficientField::smooth(g, 0.5)).unwrap();
    let e = SemigroupEngine::new(op).unwrap();
    let f = GridFunction::random(g, 1);
    assert!(matches!(fourier_oracle_for(&e, &SymbolFunction::heat(), &f), Err(hardy_lab::LabError::NonScalarOperator)));
}

#[test]
fn doubling_density_converges() {
    let e = engine(16, C64::new(1.0, 0.5), Method::Auto);
    let f = GridFunction::random_mean_zero(e.grid(), 21);
    for psi in [SymbolFunction::resolvent2().scaled(0.0025), SymbolFunction::psi0_m(2).scaled(0.0025)] {
        let errs: Vec<f64> = [4, 8, 16, 32]
            .iter()
            .map(|&d| {
                let quad = ContourQuadrature::for_engine(&e).with_density(d);
                let got = apply_symbol_contour(&e, &psi, &quad, &f).unwrap();
                relative_error(&got, &fourier_oracle_for(&e, &psi, &f).unwrap())
            })
            .collect();
        for w in errs.windows(2) {
            assert!(w[1] <= w[0] / 4.0 || w[1] < 1e-10, "{}: {errs:?}", psi.name());
        }
    }
}
