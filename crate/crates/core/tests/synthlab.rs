use induplex::econ::{EstimatorRegistry, Regressor, RegressionSpec};
use induplex::synthlab::{
    gen_ar1_panel, gen_ar1_panel_with, gen_random_duplex, gen_random_duplex_inputs, montecarlo, replication_rng,
    DgpSpec, DuplexSpec,
};
use induplex::netcore::Layer;

#[test]
fn duplex_density_is_binomial() {
    let spec = DuplexSpec {
        n: 60,
        periods: vec![1977, 1982, 1987],
        density: 0.2,
        seed: 3,
    };
    let inputs = gen_random_duplex_inputs(&spec).unwrap();
    let pairs = (spec.n * spec.n) as f64;
    let (mean, sd) = (pairs * spec.density, (pairs * spec.density * (1.0 - spec.density)).sqrt());
    for edges in [&inputs.market_edges, &inputs.innovation_edges] {
        for &p in &spec.periods {
            let count = edges.iter().filter(|e| e.period == p).count() as f64;
            assert!((count - mean).abs() <= 3.0 * sd, "period {p}: {count} links, expected {mean} +- {sd}");
        }
    }
    let net = gen_random_duplex(&spec).unwrap();
    assert_eq!(net.n(), 60);
    assert_eq!(net.period_labels(), spec.periods);
    assert_eq!(net.periods[0].layer(Layer::Innovation).sizes.values.len(), 60);
}

#[test]
fn duplex_is_seeded() {
    let spec = DuplexSpec {
        n: 10,
        periods: vec![1, 2],
        density: 0.5,
        seed: 9,
    };
    assert_eq!(gen_random_duplex_inputs(&spec).unwrap(), gen_random_duplex_inputs(&spec).unwrap());
    let other = DuplexSpec { seed: 10, ..spec.clone() };
    assert_ne!(gen_random_duplex_inputs(&spec).unwrap(), gen_random_duplex_inputs(&other).unwrap());
}

#[test]
fn ar1_autocorrelation_matches_rho() {
    for rho in [0.2, 0.5, 0.8] {
        let spec = DgpSpec {
            n: 3000,
            t: 8,
            rho,
            fe_sd: 0.0,
            seed: 5,
            ..Default::default()
        };
        let p = gen_ar1_panel(&spec).unwrap();
        let y = p.column("y").unwrap();
        let lag = p.lag("y", 1).unwrap();
        let pairs: Vec<(f64, f64)> = y.iter().zip(&lag).filter_map(|(a, b)| Some(((*a)?, (*b)?))).collect();
        let all: Vec<f64> = y.iter().flatten().copied().collect();
        let m = all.iter().sum::<f64>() / all.len() as f64;
        let g0 = all.iter().map(|v| (v - m).powi(2)).sum::<f64>() / all.len() as f64;
        let g1 = pairs.iter().map(|(a, b)| (a - m) * (b - m)).sum::<f64>() / pairs.len() as f64;
        assert!((g1 / g0 - rho).abs() < 0.05, "rho {rho}: {}", g1 / g0);
    }
}

fn ab_spec() -> RegressionSpec {
    RegressionSpec::new("y", vec![Regressor::DependentLag(1)], "ab_diff")
}

#[test]
fn single_replication_equals_direct_run() {
    let reg = EstimatorRegistry::with_defaults();
    let est = reg.get("ab_diff").unwrap();
    let dgp = DgpSpec {
        n: 200,
        rho: 0.5,
        ..Default::default()
    };
    let mc = montecarlo(est, &ab_spec(), &dgp, "y_lag1", 0.5, 1, 77).unwrap();
    let panel = gen_ar1_panel_with(&dgp, &mut replication_rng(77, 0)).unwrap();
    let direct = est.estimate(&ab_spec(), &panel).unwrap();
    assert_eq!(mc.estimates, [direct.coefficient("y_lag1").unwrap().estimate]);
}

#[test]
fn more_replications_extend_the_sequence() {
    let reg = EstimatorRegistry::with_defaults();
    let est = reg.get("ab_diff").unwrap();
    let dgp = DgpSpec {
        n: 100,
        rho: 0.5,
        ..Default::default()
    };
    let a = montecarlo(est, &ab_spec(), &dgp, "y_lag1", 0.5, 8, 1).unwrap();
    let b = montecarlo(est, &ab_spec(), &dgp, "y_lag1", 0.5, 16, 1).unwrap();
    assert_eq!(a.estimates[..], b.estimates[..8]);
    let c = montecarlo(est, &ab_spec(), &dgp, "y_lag1", 0.5, 8, 2).unwrap();
    assert_ne!(a.estimates, c.estimates);
}
