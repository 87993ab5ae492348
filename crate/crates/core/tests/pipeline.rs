use nalgebra::{DMatrix, DVector};
use trapping_core::certify::{verify, VerifyOptions};
use trapping_core::fixtures;
use trapping_core::linalg::{lambda_max, lambda_min};
use trapping_core::lossless::LosslessStructure;
use trapping_core::pipeline::*;
use trapping_core::System;

fn academic_fixed() -> PipelineConfig {
    PipelineConfig {
        fixed_shift: Some(vec![0.0, 0.0]),
        ..Default::default()
    }
}

fn contiguous(sweep: &[SweepPoint]) -> bool {
    let idx: Vec<usize> = sweep
        .iter()
        .enumerate()
        .filter(|(_, s)| s.feasible())
        .map(|(i, _)| i)
        .collect();
    !idx.is_empty() && idx.windows(2).all(|w| w[1] == w[0] + 1)
}

fn verify_opts(config: &PipelineConfig) -> VerifyOptions {
    VerifyOptions {
        epsilon: config.epsilon,
        ..Default::default()
    }
}

#[test]
fn shift_solution_invariants_on_mls() {
    let sys = fixtures::mls();
    let st = LosslessStructure::build(&sys);
    let config = PipelineConfig::default();
    let sol = optimize_shift(&sys, &st, &config).unwrap();
    assert!(sol.certifies());
    assert!(sol.m_star.norm() <= config.delta_m + 1e-9);
    let p = &sol.p_star;
    assert!(st.constraint_residual(p).norm() <= 1e-7 * p.norm());
    let l = sys.linear_part(&sol.m_star);
    let lhs = p * &l + l.transpose() * p;
    assert!(lambda_max(&lhs) <= sol.a_star + 1e-7);
    assert!((p.trace() - 4.0).abs() < 1e-6);
    assert_eq!(sol.restarts_used, 10);
}

#[test]
fn shift_on_stable_linear_system() {
    let sys = fixtures::linear(&-DMatrix::<f64>::identity(3, 3));
    let st = LosslessStructure::build(&sys);
    let sol = optimize_shift(&sys, &st, &PipelineConfig::default()).unwrap();
    assert!(sol.a_star <= -2.0 + 1e-6, "{}", sol.a_star);
    assert!((&sol.p_star - DMatrix::identity(3, 3)).amax() < 1e-4);
}

#[test]
fn shift_search_is_deterministic_under_seed() {
    let sys = fixtures::mls();
    let st = LosslessStructure::build(&sys);
    let config = PipelineConfig {
        restarts: 3,
        ..Default::default()
    };
    let a = optimize_shift(&sys, &st, &config).unwrap();
    let b = optimize_shift(&sys, &st, &config).unwrap();
    assert_eq!(a, b);
}

#[test]
fn ellipsoid_sdp_academic_examples() {
    let sys = fixtures::academic2d();
    let st = LosslessStructure::build(&sys);
    let config = PipelineConfig::default();
    let m = DVector::zeros(2);
    let fit = ellipsoid_sdp(&sys, &st, &m, 1.963, &config).unwrap();
    let alpha = fit.r / lambda_min(&fit.p).sqrt();
    assert!((alpha - 0.2905).abs() < 1e-2, "{alpha}");
    assert!(lambda_min(&fit.p) >= 1.0 - 1e-7);
    match ellipsoid_sdp(&sys, &st, &m, 10.0, &config) {
        None => {}
        Some(f) => assert!(f.r / lambda_min(&f.p).sqrt() > alpha),
    }
}

#[test]
fn sweeps_are_contiguous_for_all_fixtures() {
    let cases: Vec<(System, PipelineConfig)> = vec![
        (fixtures::academic2d(), academic_fixed()),
        (fixtures::mls(), PipelineConfig::default()),
        (
            fixtures::by_name("lorenz").unwrap(),
            PipelineConfig::default(),
        ),
    ];
    for (sys, config) in cases {
        let rep = run_pipeline(&sys, &config).unwrap();
        assert_eq!(rep.sweep.len(), 100);
        assert!(contiguous(&rep.sweep), "{:?}", rep.sweep);
    }
}

#[test]
fn academic_sweep_is_u_shaped_around_best() {
    let rep = run_pipeline(&fixtures::academic2d(), &academic_fixed()).unwrap();
    let alphas: Vec<(f64, f64)> = rep
        .sweep
        .iter()
        .filter_map(|s| s.alpha.map(|a| (s.chi, a)))
        .collect();
    let best = alphas
        .iter()
        .cloned()
        .fold((0.0, f64::INFINITY), |b, x| if x.1 < b.1 { x } else { b });
    assert!((best.0 - 1.963).abs() < 1e-3);
    for w in alphas.windows(2) {
        if w[1].0 <= best.0 {
            assert!(w[1].1 <= w[0].1 + 1e-9);
        } else if w[0].0 >= best.0 {
            assert!(w[1].1 >= w[0].1 - 1e-9);
        }
    }
}

#[test]
fn stage_monotonicity_and_soundness() {
    let cases: Vec<(System, PipelineConfig)> = vec![
        (fixtures::academic2d(), academic_fixed()),
        (fixtures::academic2d(), PipelineConfig::default()),
        (fixtures::mls(), PipelineConfig::default()),
        (
            fixtures::mls(),
            PipelineConfig {
                constraint_mode: ConstraintMode::Soft,
                ..Default::default()
            },
        ),
        (
            fixtures::by_name("lorenz").unwrap(),
            PipelineConfig::default(),
        ),
    ];
    for (sys, config) in cases {
        let rep = run_pipeline(&sys, &config).unwrap();
        assert!(rep.diagnosis.is_none());
        let grid = rep.grid.as_ref().unwrap();
        let gevp = rep.gevp.as_ref().unwrap();
        assert_eq!(grid.stage, Stage::Grid);
        assert_eq!(gevp.stage, Stage::Gevp);
        assert!(gevp.alpha <= grid.alpha + 1e-9);
        let fin = rep.final_certificate.as_ref().unwrap();
        assert!(containment_check(fin, gevp));
        for c in [Some(grid), Some(gevp), rep.local.as_ref(), Some(fin)]
            .into_iter()
            .flatten()
        {
            assert!(lambda_min(&c.p) >= 1.0 - 1e-7);
            assert!((c.alpha - c.r / lambda_min(&c.p).sqrt()).abs() <= 1e-10 * c.alpha);
            assert!((c.ultimate_bound - (c.alpha + c.m.norm())).abs() <= 1e-10 * c.ultimate_bound);
            let v = verify(&sys, c, &verify_opts(&config));
            assert!(v.pass, "{} {:?}", c.stage, v);
            assert!(v.checks.decrease || !v.checks.theta);
        }
        if config.constraint_mode == ConstraintMode::Soft {
            assert!(fin.residuals.lossless_max_abs <= 1e-7);
        }
    }
}

#[test]
fn gevp_is_idempotent() {
    let sys = fixtures::academic2d();
    let st = LosslessStructure::build(&sys);
    let config = academic_fixed();
    let rep = run_pipeline(&sys, &config).unwrap();
    let once = rep.gevp.unwrap();
    let twice = gevp_refine(&once, &sys, &st, &config);
    assert!((twice.r - once.r).abs() <= 1e-5 * once.r);
    assert!(twice.r <= once.r);
}

#[test]
fn local_search_at_equilibrium_does_not_move() {
    let sys = fixtures::academic2d();
    let st = LosslessStructure::build(&sys);
    let config = PipelineConfig::default();
    let eq = DVector::from_column_slice(&[0.0, 0.25]);
    let fit = ellipsoid_sdp(&sys, &st, &eq, 2.0, &config).unwrap();
    let cert =
        EllipsoidCertificate::new(&sys, &st, eq.clone(), fit.p, fit.r, 2.0, Stage::Gevp, 1e-6);
    let (sel, cand, _) = local_shift_search(&cert, &sys, &st, &config);
    if let Some(c) = cand {
        assert!((&c.m - &eq).norm() < 1e-6);
    }
    assert!((&sel.m - &eq).norm() < 1e-6);
}

#[test]
fn mls_local_search_gains_little() {
    let rep = run_pipeline(&fixtures::mls(), &PipelineConfig::default()).unwrap();
    let gevp = rep.gevp.unwrap();
    let fin = rep.final_certificate.unwrap();
    assert!((fin.alpha - gevp.alpha).abs() <= 1e-3 * gevp.alpha);
    assert!((&fin.m - &gevp.m).norm() <= 1e-3);
}

#[test]
fn unstable_linear_system_has_no_certificate() {
    let sys = fixtures::linear(&DMatrix::identity(2, 2));
    let rep = run_pipeline(&sys, &PipelineConfig::default()).unwrap();
    assert!(rep.final_certificate.is_none());
    let d = rep.diagnosis.unwrap();
    assert!(d.stage == "shift" || d.stage == "grid", "{d:?}");

    let st = LosslessStructure::build(&sys);
    let grid = grid_search(&sys, &st, &DVector::zeros(2), &PipelineConfig::default());
    assert!(grid.best.is_none());
    assert!(grid.sweep.iter().all(|s| !s.feasible()));
}

#[test]
fn stable_linear_system_shrinks_to_equilibrium() {
    let sys = fixtures::linear(&-DMatrix::<f64>::identity(2, 2));
    let rep = run_pipeline(
        &sys,
        &PipelineConfig {
            fixed_shift: Some(vec![0.0, 0.0]),
            ..Default::default()
        },
    )
    .unwrap();
    let fin = rep.final_certificate.unwrap();
    assert!(fin.r < 1e-2, "{}", fin.r);
}

#[test]
fn empty_lossless_space_is_diagnosed() {
    // y^T S Q(y) = 0 forces S = 0 for Q(y) = (y1^2, y2^2)
    let mut q = vec![DMatrix::zeros(2, 2); 2];
    q[0][(0, 0)] = 1.0;
    q[1][(1, 1)] = 1.0;
    let sys = System::new(-DMatrix::identity(2, 2), q, DVector::zeros(2)).unwrap();
    let rep = run_pipeline(&sys, &PipelineConfig::default()).unwrap();
    assert_eq!(rep.symmetric_dim, 0);
    assert_eq!(rep.diagnosis.unwrap().stage, "lossless");
}

#[test]
fn fixed_shift_dimension_is_checked() {
    let cfg = PipelineConfig {
        fixed_shift: Some(vec![0.0]),
        ..Default::default()
    };
    assert!(run_pipeline(&fixtures::academic2d(), &cfg).is_err());
}

#[test]
fn f32_pipeline_runs_on_academic() {
    let sys = fixtures::academic2d().cast::<f32>();
    let config = PipelineConfig {
        fixed_shift: Some(vec![0.0, 0.0]),
        chi_grid: log_grid(1.0, 3.0, 5),
        solver_accuracy: 1e-5,
        epsilon: 1e-4,
        ..Default::default()
    };
    let rep = run_pipeline(&sys, &config).unwrap();
    let grid = rep.grid.unwrap();
    assert!((grid.alpha - 0.29).abs() < 2e-2, "{}", grid.alpha);
}
