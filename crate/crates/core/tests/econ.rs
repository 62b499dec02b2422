mod oracles;

use induplex::econ::{
    ar_test, dependent_instrument_count, sargan_test, EstimatorRegistry, FixedEffects, GmmOptions, Regressor,
    RegressionSpec,
};
use induplex::panel::{assemble, AssembleOptions, GroupRule, GroupSpec, KeyedColumn};
use induplex::synthlab::{gen_ar1_panel, DgpSpec};
use induplex::Error;
use oracles::{dummy_oracle, two_way};

fn fe_spec(k: usize, weighted: bool) -> RegressionSpec {
    let mut s = RegressionSpec::new(
        "y",
        (1..=k).map(|j| Regressor::lagged(&format!("x{j}"), 0)).collect(),
        "fe_weighted",
    );
    if weighted {
        s.weights = Some("w".into());
    }
    s
}

#[test]
fn fe_recovers_exact_two_way_design() {
    let beta = [1.5, -0.7];
    let d = two_way(30, 6, &beta, 0.0, 1, 1.0);
    let reg = EstimatorRegistry::with_defaults();
    let res = reg.run(&fe_spec(2, true), &d.panel).unwrap();
    for (c, b) in res.regressors().iter().zip(beta) {
        assert!((c.estimate - b).abs() < 1e-8, "{} vs {b}", c.estimate);
    }
}

#[test]
fn fe_matches_dummy_variable_regression() {
    let reg = EstimatorRegistry::with_defaults();
    for seed in 0..5 {
        let d = two_way(25, 7, &[0.8, 0.2, -1.1], 1.0, 100 + seed, 0.8);
        let res = reg.run(&fe_spec(3, true), &d.panel).unwrap();
        let oracle = dummy_oracle(&d, 3, 25, 7, true);
        for (c, o) in res.regressors().iter().zip(&oracle) {
            assert!((c.estimate - o).abs() < 1e-6, "seed {seed}: {} vs {o}", c.estimate);
        }
        assert!(res.r2_proxy.unwrap() >= 0.0 && res.r2_proxy.unwrap() <= 1.0);
    }
}

fn within_slope(groups: &[usize], xs: &[f64], ys: &[f64]) -> f64 {
    let g = groups.iter().max().unwrap() + 1;
    let mut mx = vec![(0.0, 0.0, 0usize); g];
    for ((k, x), y) in groups.iter().zip(xs).zip(ys) {
        mx[*k].0 += x;
        mx[*k].1 += y;
        mx[*k].2 += 1;
    }
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for ((k, x), y) in groups.iter().zip(xs).zip(ys) {
        let (sx, sy, n) = mx[*k];
        let dx = x - sx / n as f64;
        sxy += dx * (y - sy / n as f64);
        sxx += dx * dx;
    }
    sxy / sxx
}

#[test]
fn fe_one_way_matches_within_oracle() {
    let reg = EstimatorRegistry::with_defaults();
    let d = two_way(30, 5, &[2.0], 1.0, 7, 1.0);
    let xs: Vec<f64> = d.panel.column("x1").unwrap().iter().map(|v| v.unwrap()).collect();
    let ys: Vec<f64> = d.panel.column("y").unwrap().iter().map(|v| v.unwrap()).collect();
    let by_ind: Vec<usize> = d.rows.iter().map(|r| r.0).collect();
    let mut spec = fe_spec(1, false);
    spec.fixed_effects = FixedEffects::Industry;
    let res = reg.run(&spec, &d.panel).unwrap();
    assert!((res.regressors()[0].estimate - within_slope(&by_ind, &xs, &ys)).abs() < 1e-8);

    // one period: a single time level, clustering falls back to industries
    let one = d
        .panel
        .subset(&GroupSpec {
            name: "first".into(),
            rule: GroupRule::PeriodWindow { first: 2000, last: 2000 },
        })
        .unwrap();
    spec.fixed_effects = FixedEffects::Time;
    let res = reg.run(&spec, &one).unwrap();
    let xs: Vec<f64> = one.column("x1").unwrap().iter().map(|v| v.unwrap()).collect();
    let ys: Vec<f64> = one.column("y").unwrap().iter().map(|v| v.unwrap()).collect();
    assert!((res.regressors()[0].estimate - within_slope(&vec![0; xs.len()], &xs, &ys)).abs() < 1e-8);
    assert!(res.regressors()[0].se.is_finite() && res.regressors()[0].se > 0.0);
}

#[test]
fn fe_ignores_constant_shift_in_y() {
    let d = two_way(20, 5, &[1.0, 2.0], 1.0, 3, 0.9);
    let reg = EstimatorRegistry::with_defaults();
    let base = reg.run(&fe_spec(2, true), &d.panel).unwrap();
    let mut shifted = d.panel.clone();
    let y: Vec<Option<f64>> = shifted.column("y").unwrap().iter().map(|v| v.map(|x| x + 10.0)).collect();
    shifted.set_column("y", y).unwrap();
    let moved = reg.run(&fe_spec(2, true), &shifted).unwrap();
    for (a, b) in base.regressors().iter().zip(moved.regressors()) {
        assert!((a.estimate - b.estimate).abs() < 1e-10);
    }
}

#[test]
fn fe_errors() {
    let mut d = two_way(10, 4, &[1.0], 1.0, 4, 1.0);
    let reg = EstimatorRegistry::with_defaults();
    let mut w: Vec<Option<f64>> = d.panel.column("w").unwrap().to_vec();
    w[3] = Some(0.0);
    let mut bad = d.panel.clone();
    bad.set_column("w", w).unwrap();
    assert!(matches!(reg.run(&fe_spec(1, true), &bad), Err(Error::NonPositiveWeight(_))));

    // a regressor constant within industries is absorbed by the fixed effects
    let codes: Vec<f64> = d.panel.keys.iter().map(|(i, _)| i[1..].parse::<f64>().unwrap()).collect();
    d.panel.set_column("x1", codes.into_iter().map(Some).collect()).unwrap();
    assert!(matches!(reg.run(&fe_spec(1, false), &d.panel), Err(Error::RankDeficient(_))));
}

fn ab_spec() -> RegressionSpec {
    RegressionSpec::new("y", vec![Regressor::DependentLag(1)], "ab_diff")
}

#[test]
fn ab_exact_on_noise_free_ar1() {
    let dgp = DgpSpec {
        n: 50,
        t: 6,
        rho: 0.6,
        fe_sd: 1.0,
        noise_sd: 0.0,
        burn_in: 0,
        init_sd: 1.0,
        seed: 9,
        ..Default::default()
    };
    let panel = gen_ar1_panel(&dgp).unwrap();
    let mut spec = ab_spec();
    spec.gmm.time_dummies = false;
    let res = EstimatorRegistry::with_defaults().run(&spec, &panel).unwrap();
    assert!((res.regressors()[0].estimate - 0.6).abs() < 1e-6);
    // level equations carry the fixed effect, so exactness needs fe_sd = 0
    let panel = gen_ar1_panel(&DgpSpec { fe_sd: 0.0, ..dgp }).unwrap();
    spec.estimator = "bb_sys".into();
    let res = EstimatorRegistry::with_defaults().run(&spec, &panel).unwrap();
    assert!((res.regressors()[0].estimate - 0.6).abs() < 1e-6);
}

#[test]
fn reported_instrument_count_matches_layout() {
    let dgp = DgpSpec {
        n: 60,
        t: 8,
        beta: vec![0.5],
        seed: 2,
        ..Default::default()
    };
    let panel = gen_ar1_panel(&dgp).unwrap();
    let reg = EstimatorRegistry::with_defaults();
    for collapsed in [false, true] {
        let mut spec = RegressionSpec::new("y", vec![Regressor::DependentLag(1), Regressor::lagged("x1", 0)], "ab_diff");
        spec.gmm.collapsed = collapsed;
        let res = reg.run(&spec, &panel).unwrap();
        let dep = dependent_instrument_count(8, &spec.gmm);
        // dependent lags + one exogenous column + one dummy per differenced period
        assert_eq!(res.n_instruments, dep + 1 + 6);
        spec.estimator = "bb_sys".into();
        let res = reg.run(&spec, &panel).unwrap();
        let level = if collapsed { 1 } else { 6 };
        assert_eq!(res.n_instruments, dep + level + 1 + 7);
    }
}

#[test]
fn gmm_invariant_to_relabeling_and_scaling() {
    let dgp = DgpSpec {
        n: 80,
        t: 7,
        rho: 0.5,
        beta: vec![1.0],
        seed: 5,
        ..Default::default()
    };
    let panel = gen_ar1_panel(&dgp).unwrap();
    let reg = EstimatorRegistry::with_defaults();
    let spec = RegressionSpec::new("y", vec![Regressor::DependentLag(1), Regressor::lagged("x1", 0)], "bb_sys");
    let base = reg.run(&spec, &panel).unwrap();

    // relabel industries in reverse order
    let mut cols: Vec<KeyedColumn> = Vec::new();
    for name in ["y", "x1"] {
        let mut c = KeyedColumn::new(name);
        for ((ind, t), v) in panel.keys.iter().zip(panel.column(name).unwrap()) {
            let n: usize = ind[1..].parse().unwrap();
            c.values.insert((format!("r{:04}", 999 - n), *t), v.unwrap());
        }
        cols.push(c);
    }
    let inds: Vec<String> = (0..80).map(|n| format!("r{:04}", 999 - n)).collect();
    let relabeled = assemble(&inds, &panel.periods, &cols, &AssembleOptions::default()).unwrap();
    let other = reg.run(&spec, &relabeled).unwrap();
    for (a, b) in base.coefficients.iter().zip(&other.coefficients) {
        assert!((a.estimate - b.estimate).abs() < 1e-9);
    }

    let mut scaled = panel.clone();
    let x: Vec<Option<f64>> = scaled.column("x1").unwrap().iter().map(|v| v.map(|x| x * 4.0)).collect();
    scaled.set_column("x1", x).unwrap();
    for steps in [1u8, 2] {
        let mut s = spec.clone();
        s.gmm.steps = steps;
        let a = reg.run(&s, &panel).unwrap();
        let b = reg.run(&s, &scaled).unwrap();
        let (ca, cb) = (&a.regressors()[1], &b.regressors()[1]);
        assert!((ca.estimate / 4.0 - cb.estimate).abs() < 1e-8);
        assert!((ca.estimate / ca.se - cb.estimate / cb.se).abs() < 1e-8);
    }
}

#[test]
fn sargan_refuses_just_identified_models() {
    let panel = gen_ar1_panel(&DgpSpec {
        n: 50,
        seed: 1,
        ..Default::default()
    })
    .unwrap();
    let mut spec = ab_spec();
    spec.gmm = GmmOptions {
        collapsed: true,
        max_instrument_lag: Some(2),
        time_dummies: false,
        ..Default::default()
    };
    let res = EstimatorRegistry::with_defaults().run(&spec, &panel).unwrap();
    assert_eq!(res.n_instruments, 1);
    assert!(matches!(sargan_test(&res), Err(Error::JustIdentified { .. })));
    assert!(res.sargan_p.is_none());
}

#[test]
fn ar1_detects_differencing_induced_correlation() {
    let panel = gen_ar1_panel(&DgpSpec {
        n: 400,
        t: 7,
        rho: 0.3,
        seed: 12,
        ..Default::default()
    })
    .unwrap();
    let res = EstimatorRegistry::with_defaults().run(&ab_spec(), &panel).unwrap();
    let (z, p) = ar_test(&res, 1).unwrap();
    assert!(z < 0.0 && p < 0.05, "z = {z}, p = {p}");
    let (_, p2) = ar_test(&res, 2).unwrap();
    assert!((0.0..=1.0).contains(&p2));
    assert!(matches!(ar_test(&res, 9), Err(Error::TooFewPeriodsForOrder(9))));
}

#[test]
fn windmeijer_inflates_two_step_errors() {
    let panel = gen_ar1_panel(&DgpSpec {
        n: 150,
        t: 7,
        rho: 0.5,
        seed: 4,
        ..Default::default()
    })
    .unwrap();
    let reg = EstimatorRegistry::with_defaults();
    let mut spec = ab_spec();
    spec.gmm.steps = 2;
    let plain = reg.run(&spec, &panel).unwrap();
    spec.gmm.windmeijer = true;
    let corrected = reg.run(&spec, &panel).unwrap();
    assert_eq!(plain.regressors()[0].estimate, corrected.regressors()[0].estimate);
    assert!(corrected.regressors()[0].se > plain.regressors()[0].se);
}

#[test]
fn ab_needs_three_periods() {
    let panel = gen_ar1_panel(&DgpSpec {
        n: 10,
        t: 2,
        ..Default::default()
    })
    .unwrap();
    assert!(matches!(
        EstimatorRegistry::with_defaults().run(&ab_spec(), &panel),
        Err(Error::InsufficientPeriods(_))
    ));
}
