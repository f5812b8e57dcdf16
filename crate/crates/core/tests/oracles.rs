use gridmfg::config::{GameMode, TimeGrid};
use gridmfg::engine::simulate_mean_field;
use gridmfg::oracle::*;
use gridmfg::scenarios;
use gridmfg::solver::{scalar_riccati, Policy};

fn small_opts(corrupt: bool) -> SuiteOptions {
    SuiteOptions { paths: 40, corrupt_lambda: corrupt, skip_nash: true, ..Default::default() }
}

#[test]
fn riccati_reference_rejects_a_wrong_delta() {
    let cfg = scenarios::paper_base();
    let st = cfg.storage;
    let grid = TimeGrid::new(cfg.grid.horizon, 256);
    let delta = 1.0 / (st.c + cfg.regions[0].demand_charge);
    let reference = riccati_reference_scalar(st.a2, delta, st.b2, &grid);
    let err = |d: f64| (0..=256).map(|k| (scalar_riccati(st.a2, d, st.b2, grid.horizon, grid.time(k)) - reference[k]).abs()).fold(0.0, f64::max);
    assert!(err(delta) < 1e-8, "{}", err(delta));
    assert!(err(1.1 * delta) > 1e-3, "{}", err(1.1 * delta));
}

#[test]
fn coupling_detects_a_wrong_slope() {
    let cfg = scenarios::paper_base().with_grid_steps(128);
    for c in coupling_checks(&cfg, &small_opts(false)).unwrap() {
        assert!(c.pass, "{c}");
    }
    for c in coupling_checks(&cfg, &small_opts(true)).unwrap() {
        assert!(!c.pass, "{c}");
    }
}

#[test]
fn coupling_holds_for_two_zones() {
    let cfg = scenarios::two_zone().with_grid_steps(128);
    for c in coupling_checks(&cfg, &small_opts(false)).unwrap() {
        assert!(c.pass, "{c}");
    }
}

#[test]
fn qp_of_the_zero_scenario_is_zero() {
    let cfg = scenarios::zero().with_grid_steps(64);
    for mode in [GameMode::Mfg, GameMode::Mfc] {
        let opts = QpOptions { intervals: 256, ..Default::default() };
        let sol = deterministic_qp_reference(&cfg, mode, &opts).unwrap();
        assert!(sol.alpha.iter().flatten().all(|a| a.abs() < 1e-12));
    }
    assert_eq!(
        deterministic_qp_reference(&scenarios::paper_base(), GameMode::Mfc, &QpOptions::default()),
        Err(QpError::NotDeterministic)
    );
}

#[test]
fn qp_agrees_with_the_solver_and_rejects_a_wrong_slope() {
    let cfg = scenarios::paper_base().deterministic().with_grid_steps(1024);
    let opts = QpOptions { intervals: 4096, ..Default::default() };
    for mode in [GameMode::Mfg, GameMode::Mfc] {
        let reference = deterministic_qp_reference(&cfg, mode, &opts).unwrap();
        let err = |corrupt| {
            let policy = policy_for(&cfg, mode, corrupt).unwrap();
            let b = simulate_mean_field(&cfg, &policy, 1, 0).unwrap();
            relative_l2_error(&b.paths[0].alpha, &reference, &cfg.grid.times())
        };
        assert!(err(false) < 1e-2, "{mode}: {}", err(false));
        assert!(err(true) > 5e-2, "{mode}: {}", err(true));
    }
}

#[test]
fn nested_estimates_detect_corrupted_offsets() {
    let cfg = scenarios::paper_base().with_grid_steps(NESTED_STEPS);
    let mut policy = Policy::build(&cfg, GameMode::Mfc).unwrap();
    let outer = simulate_mean_field(&cfg, &policy, 1, 3).unwrap();
    let k = NESTED_STEPS / 2;
    let good = nested_mc_conditional(&policy, &outer.paths[0], k, NestedTarget::PsiBar, 300, 11);
    assert!(good.max_z() < 3.5, "{good:?}");
    for d in policy.d.iter_mut() {
        d.iter_mut().for_each(|v| *v = 1.05 * *v + 0.01);
    }
    for g in policy.g.iter_mut() {
        *g *= 1.05;
    }
    let bad = nested_mc_conditional(&policy, &outer.paths[0], k, NestedTarget::PsiBar, 300, 11);
    assert!(bad.max_z() > 5.0, "{bad:?}");
}

#[test]
fn nested_checks_pass_on_two_zones() {
    let cfg = scenarios::two_zone();
    for c in nested_checks(&cfg, &small_opts(false)).unwrap() {
        assert!(c.pass, "{c}");
    }
}

#[test]
fn gateaux_is_flat_at_the_optimum_and_exact_at_zero_step() {
    let cfg = scenarios::paper_base().with_grid_steps(4096);
    let dirs = Direction::random_family(3, 1, &cfg.grid, 5);
    for mode in [GameMode::Mfc, GameMode::Mfg] {
        let policy = Policy::build(&cfg, mode).unwrap();
        let est = gateaux_test(&cfg, mode, &policy, &dirs, &[0.0, 1e-2], 4, 1, true);
        for e in &est {
            assert_eq!(e.increases[0].1.mean, 0.0);
            assert!(e.slope.mean.abs() / e.norm < 0.05, "{mode}: {e:?}");
            assert!(e.increases[1].1.mean > 0.0);
        }
        let wrong = policy_for(&cfg, mode, true).unwrap();
        let est = gateaux_test(&cfg, mode, &wrong, &dirs, &[1e-2], 4, 1, true);
        let worst = est.iter().map(|e| e.slope.mean.abs() / e.norm).fold(0.0, f64::max);
        assert!(worst > 0.1, "{mode}: {worst}");
    }
}

#[test]
fn symmetric_regions_give_symmetric_policies() {
    let cfg = scenarios::two_identical().with_grid_steps(64);
    for mode in [GameMode::Mfg, GameMode::Mfc] {
        let policy = Policy::build(&cfg, mode).unwrap();
        for k in 0..=64 {
            let p = &policy.riccati.phi_bar[k];
            assert!((p[(0, 0)] - p[(1, 1)]).abs() <= 1e-12 * p[(0, 0)].abs().max(1.0));
            assert!((p[(0, 1)] - p[(1, 0)]).abs() <= 1e-12 * p[(0, 1)].abs().max(1.0));
        }
        let b = simulate_mean_field(&cfg, &policy, 5, 2).unwrap();
        for p in &b.paths {
            assert!(p.sbar[0].iter().zip(&p.sbar[1]).all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }
}

#[test]
fn price_of_anarchy_is_not_negative() {
    let cfg = scenarios::two_zone().with_grid_steps(128);
    let c = poa_check(&cfg, &small_opts(false)).unwrap();
    assert!(c.pass, "{c}");
}

#[test]
fn nash_gains_of_the_equilibrium_are_small() {
    let cfg = scenarios::paper_base().with_grid_steps(NASH_STEPS);
    let policy = Policy::build(&cfg, GameMode::Mfg).unwrap();
    let gains = nash_deviation_gain(&cfg, &policy, &[10, 200], &default_family(None), 60, 4).unwrap();
    assert_eq!(gains[0].gains.len(), 4);
    assert!(gains_non_increasing(&gains, 3.0), "{gains:?}");
    let (label, best) = gains[1].best();
    assert!(best.mean < 3.0 * best.se + 1e-4, "{label}: {best:?}");
    let (label, worst) = gains[1].gains.iter().find(|(l, _)| l == "scaled 1.05").map(|(l, e)| (l.clone(), *e)).unwrap();
    assert!(worst.mean < 0.0, "{label}: {worst:?}");
}

#[test]
fn report_formats() {
    let report = OracleReport {
        checks: vec![Check::below("a", 0.5, 1.0, "ctx, x".into()), Check::at_least("b", -4.0, -3.0, String::new())],
    };
    assert!(!report.all_passed());
    let csv = report.to_csv();
    assert!(csv.starts_with("check,statistic,tolerance,pass,context\n"));
    assert!(csv.contains("\"ctx, x\""));
    let text = report.to_string();
    assert!(text.contains("PASS a") && text.contains("FAIL b"));
}
