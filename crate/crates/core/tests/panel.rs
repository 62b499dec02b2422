mod oracles;

use std::collections::BTreeSet;

use induplex::panel::{assemble, AssembleOptions, KeyedColumn, PanelDataset, TransformConfig, TransformOp};
use induplex::Error;
use oracles::quantile7;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PERIODS: [i32; 4] = [1977, 1982, 1987, 1992];

fn industries(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("ind{i:03}")).collect()
}

/// Lognormal-ish positive columns with a handful of extreme values.
fn raw_panel(rng: &mut ChaCha8Rng, n: usize) -> PanelDataset {
    let inds = industries(n);
    let mut cols: Vec<KeyedColumn> = ["size", "wage", "share"].iter().map(|c| KeyedColumn::new(*c)).collect();
    for ind in &inds {
        for &t in &PERIODS {
            let key = (ind.clone(), t);
            let z: f64 = rng.random_range(-1.0..1.0);
            let big = if rng.random::<f64>() < 0.01 { 1e9 } else { 1.0 };
            cols[0].values.insert(key.clone(), (3.0 * z).exp() * big);
            cols[1].values.insert(key.clone(), rng.random_range(10.0..20.0));
            cols[2].values.insert(key, rng.random_range(0.2..0.8));
        }
    }
    assemble(&inds, &PERIODS, &cols, &AssembleOptions::default()).unwrap()
}

fn bits(p: &PanelDataset) -> Vec<(String, Vec<Option<u64>>)> {
    p.columns
        .iter()
        .map(|(n, v)| (n.clone(), v.iter().map(|x| x.map(f64::to_bits)).collect()))
        .collect()
}

#[test]
fn replay_from_files_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for a in [5.0, 10.0, 30.0] {
        let raw = raw_panel(&mut rng, 80);
        let cols: Vec<String> = raw.column_names().iter().map(|s| s.to_string()).collect();
        let mut done = raw.clone();
        done.transform(&TransformConfig::standard(&cols, &["share"], a)).unwrap();
        assert_eq!(done.provenance.len(), 3 + 2 + 3);

        let mut raw_csv = Vec::new();
        raw.write_csv(&mut raw_csv).unwrap();
        let mut prov_csv = Vec::new();
        done.write_provenance(&mut prov_csv).unwrap();

        let raw_back = PanelDataset::read_csv(raw_csv.as_slice()).unwrap();
        let steps = PanelDataset::read_provenance(prov_csv.as_slice()).unwrap();
        assert_eq!(steps, done.provenance);
        let log = PanelDataset {
            provenance: steps,
            ..PanelDataset::default()
        };
        let again = log.replay(&raw_back).unwrap();
        assert_eq!(again.keys, done.keys);
        assert_eq!(bits(&again), bits(&done));
        assert_eq!(again.removals, done.removals);
    }
}

#[test]
fn iqr_removes_exactly_the_planted_outliers() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let inds = industries(100);
    for a in [5.0, 10.0, 30.0] {
        let mut col = KeyedColumn::new("x");
        let mut planted = BTreeSet::new();
        for (k, ind) in inds.iter().enumerate() {
            for &t in &PERIODS {
                let mut v = rng.random_range(0.0..1.0);
                if k % 37 == 5 && t == 1982 {
                    v = if k % 2 == 0 { 1e6 } else { -1e6 };
                    planted.insert((ind.clone(), t));
                }
                col.values.insert((ind.clone(), t), v);
            }
        }
        let values: Vec<f64> = col.values.values().copied().collect();
        let (q1, q3) = (quantile7(&values, 0.25), quantile7(&values, 0.75));
        let (lo, hi) = (q1 - a * (q3 - q1), q3 + a * (q3 - q1));
        let expected: BTreeSet<(String, i32)> =
            col.values.iter().filter(|(_, v)| **v < lo || **v > hi).map(|(k, _)| k.clone()).collect();
        assert_eq!(expected, planted);

        let mut p = assemble(&inds, &PERIODS, &[col], &AssembleOptions::default()).unwrap();
        let removed = p.remove_outliers_iqr("x", a).unwrap();
        let got: BTreeSet<(String, i32)> = removed.iter().map(|r| (r.industry.clone(), r.period)).collect();
        assert_eq!(got, planted);
        assert_eq!(p.len(), 400 - planted.len());
        match &p.provenance[0].op {
            TransformOp::IqrFilter { lower, upper, .. } => {
                assert!((lower - lo).abs() < 1e-12 && (upper - hi).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }
}

#[test]
fn iqr_needs_four_values() {
    let inds = industries(1);
    let mut col = KeyedColumn::new("x");
    for &t in &PERIODS[..3] {
        col.values.insert((inds[0].clone(), t), t as f64);
    }
    let mut p = assemble(&inds, &PERIODS[..3], &[col], &AssembleOptions::default()).unwrap();
    assert!(matches!(p.remove_outliers_iqr("x", 30.0), Err(Error::TooFewObservations { .. })));
}

#[test]
fn lag_steps_along_the_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = raw_panel(&mut rng, 5);
    let lagged = p.lag("wage", 1).unwrap();
    let lag2 = p.lag("wage", 2).unwrap();
    for (r, (ind, t)) in p.keys.iter().enumerate() {
        let want = if *t == PERIODS[0] { None } else { p.get(ind, t - 5, "wage").unwrap() };
        assert_eq!(lagged[r], want);
        let want2 = if *t <= PERIODS[1] { None } else { p.get(ind, t - 10, "wage").unwrap() };
        assert_eq!(lag2[r], want2);
    }
    assert!(p.lag("wage", 0).is_err());
}

#[test]
fn balanced_assembly_drops_incomplete_industries() {
    let inds = industries(3);
    let mut x = KeyedColumn::new("x");
    let mut y = KeyedColumn::new("y");
    for ind in &inds {
        for &t in &PERIODS {
            x.values.insert((ind.clone(), t), 1.0);
            y.values.insert((ind.clone(), t), 2.0);
        }
    }
    x.values.remove(&(inds[0].clone(), 1987));
    y.values.insert((inds[2].clone(), 1992), 0.0);
    let opts = AssembleOptions {
        balanced: true,
        positive_columns: vec!["y".into()],
    };
    let p = assemble(&inds, &PERIODS, &[x.clone(), y.clone()], &opts).unwrap();
    assert_eq!(p.industries(), [inds[1].clone()]);
    let loose = assemble(&inds, &PERIODS, &[x, y], &AssembleOptions::default()).unwrap();
    assert_eq!(loose.len(), 12);
    assert_eq!(loose.get(&inds[0], 1987, "x").unwrap(), None);
}
