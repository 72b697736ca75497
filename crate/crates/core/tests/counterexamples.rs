use hardy_lab::coeffs::{check_ellipticity, CoefficientDescriptor};
use hardy_lab::counterexamples::*;
use hardy_lab::grid::build_grid;
use hardy_lab::{LabError, C64};

#[test]
fn frehse_field_shape_and_ellipticity() {
    let g = build_grid(3, 8, 1.0).unwrap();
    let plain = FrehseConfig::default().with_beta(C64::new(0.0, 0.0));
    let f = frehse_field(&plain, g).unwrap();
    for c in 0..g.len() {
        let m = f.at(c);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { C64::new(0.05, 1.0) } else { C64::new(0.0, 0.0) };
                assert!((m[i * 3 + j] - want).norm() < 1e-15);
            }
        }
    }

    let cfg = FrehseConfig::default();
    let f = frehse_field(&cfg, g).unwrap();
    for c in 0..g.len() {
        let x = g.dual_position(c);
        let mirror = frehse_matrix(cfg.alpha, cfg.beta_value(), &[-x[0], -x[1], -x[2]]);
        for (a, b) in f.at(c).iter().zip(&mirror) {
            assert!((a - b).norm() < 1e-14);
        }
    }
    let (lambda, big) = check_ellipticity(&f, 16).unwrap();
    assert!(lambda > 0.0 && big > lambda);
    assert!(frehse_field(&cfg, build_grid(2, 8, 1.0).unwrap()).is_err());
}

#[test]
fn solved_beta_beats_zero_and_refines() {
    let fit = solve_beta_for(1.4, 1.0, C64::new(0.05, 1.0), 3, 64).unwrap();
    assert!(fit.residual <= 0.1 * fit.residual_at_zero, "{fit:?}");
    assert!(fit.residual < fit.residual_coarse, "{fit:?}");
    let closed = beta_closed_form(1.4, 1.0, 0.05, 3);
    assert!((fit.value() - closed).norm() < 0.02 * closed.norm(), "{fit:?} vs {closed}");
    let cfg = FrehseConfig::default().with_beta(fit.value());
    assert!(frehse_field(&cfg, build_grid(3, 16, 1.0).unwrap()).is_ok());
}

#[test]
fn solved_beta_respects_conjugation() {
    // Conjugating the equation conjugates both u and the coefficient a = alpha + i.
    let a = C64::new(0.05, 1.0);
    let fit = solve_beta_for(1.4, 1.0, a, 3, 32).unwrap();
    let mirror = solve_beta_for(1.4, -1.0, a.conj(), 3, 32).unwrap();
    assert!((mirror.value() - fit.value().conj()).norm() < 1e-6 * fit.value().norm(), "{fit:?} vs {mirror:?}");
    assert!(matches!(solve_beta_for(1.4, 0.0, a, 3, 32), Err(LabError::InvalidParams(_))));
}

#[test]
fn u_phi_is_a_null_solution_away_from_the_transition() {
    let cfg = FrehseConfig::default();
    let reports: Vec<NullSolutionReport> = [32, 64].iter().map(|&n| verify_null_solution(&cfg, build_grid(3, n, 1.0).unwrap()).unwrap()).collect();
    assert!(reports[1].relative() < reports[0].relative(), "{reports:?}");
    assert!(reports[1].local_relative < 0.5 * reports[0].local_relative, "{reports:?}");
    assert!(reports[1].relative() < 1e-2, "{reports:?}");
    for r in &reports {
        assert!(r.transition_fraction > 0.99, "{r:?}");
    }
    let control = verify_null_solution(&cfg.with_beta(C64::new(0.0, 0.0)), build_grid(3, 32, 1.0).unwrap()).unwrap();
    assert!(control.local_relative > 0.5, "{control:?}");
    assert!(control.local_relative > 4.0 * reports[0].local_relative, "{control:?}");
}

#[test]
fn smooth_step_is_a_partition() {
    assert_eq!(smooth_step(-1.0), 0.0);
    assert_eq!(smooth_step(1.0), 1.0);
    for x in [0.1, 0.3, 0.5, 0.8] {
        assert!((smooth_step(x) + smooth_step(1.0 - x) - 1.0).abs() < 1e-14);
    }
    assert_eq!(radial_cutoff(0.2, 0.25, 0.4), 1.0);
    assert_eq!(radial_cutoff(0.41, 0.25, 0.4), 0.0);
}

#[test]
fn contractive_controls_do_not_grow() {
    let ladder = [8, 16];
    let id = blowup_experiment(&CoefficientDescriptor::Identity, 20.0, &ladder, 0.005, BlowupMode::Semigroup).unwrap();
    for r in &id.rows {
        assert!(r.estimate <= 1.0 + 1e-8, "{id:?}");
    }
    assert!(!id.growing);
    let fr = blowup_experiment(&CoefficientDescriptor::Frehse(FrehseConfig::default()), 2.0, &ladder, 0.005, BlowupMode::Semigroup).unwrap();
    for r in &fr.rows {
        assert!(r.estimate <= 1.0 + 1e-8, "{fr:?}");
    }
    let riesz = blowup_experiment(&CoefficientDescriptor::Identity, 2.0, &ladder, 1.0, BlowupMode::Riesz).unwrap();
    for r in &riesz.rows {
        assert!((r.estimate - 1.0).abs() < 1e-6, "{riesz:?}");
    }
    assert!(id.to_csv().starts_with("N,p,estimate\n8,20,"));
}

#[test]
fn null_space_certificate_separates_frehse_from_identity() {
    let cfg = FrehseConfig::default();
    let g = build_grid(3, 32, 1.0).unwrap();
    let (v, cert) = null_space_construction(&cfg, &CoefficientDescriptor::Frehse(cfg.clone()), g, 20.0).unwrap();
    assert!(cert.residual < 1e-2, "{cert:?}");
    assert!(cert.v_l2 > 1e-2 * cert.w_l2, "{cert:?}");
    assert!((v.lp_norm(20.0) - cert.v_lp).abs() < 1e-12 * cert.v_lp);
    let (_, control) = null_space_construction(&cfg, &CoefficientDescriptor::Identity, g, 20.0).unwrap();
    assert!(control.residual > 10.0 * cert.residual, "{control:?} vs {cert:?}");
    assert!(matches!(null_space_construction(&cfg, &CoefficientDescriptor::Identity, g, 4.0), Err(LabError::InvalidParams(_))));
}
