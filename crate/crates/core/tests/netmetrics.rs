mod oracles;

use std::collections::BTreeMap;

use induplex::netcore::{input_shares, node_sizes, output_shares, DwVariant, Layer, ShareMatrix};
use induplex::netmetrics::{
    cosine_similarity, export_filtered_edges, network_stats, pagerank, top_k_ranking, BinarizeRule,
    CentralityRegistry,
};
use induplex::synthlab::{oracle_pagerank_dense, oracle_transition};
use induplex::Error;
use oracles::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn both_shares(f: &[Vec<f64>]) -> [ShareMatrix; 2] {
    let fm = flow_matrix(f, Layer::Market);
    [input_shares(&fm), output_shares(&fm, DwVariant::ColumnSum)]
}

#[test]
fn pagerank_matches_linear_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let n = rng.random_range(2..=50);
        let density = rng.random_range(0.02..0.6);
        let f = random_flows(&mut rng, n, density);
        for w in both_shares(&f) {
            let got = pagerank(&w, 0.85).unwrap().values;
            let want = oracle_pagerank_dense(&oracle_transition(&walk_edges(&w)), 0.85).unwrap();
            for k in 0..n {
                assert!((got[k] - want[k]).abs() <= 1e-10, "n={n} node {k}: {} vs {}", got[k], want[k]);
            }
            assert!((got.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }
}

#[test]
fn pagerank_on_complete_graph_is_uniform() {
    for n in [2, 3, 10, 31] {
        let f: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 0.0 } else { 1.0 }).collect()).collect();
        for w in both_shares(&f) {
            for v in pagerank(&w, 0.85).unwrap().values {
                assert!((v - 1.0 / n as f64).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn pagerank_follows_relabeling() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 25;
    let f = random_flows(&mut rng, n, 0.2);
    let mut perm: Vec<usize> = (0..n).collect();
    for k in (1..n).rev() {
        perm.swap(k, rng.random_range(0..=k));
    }
    let g: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f[perm[i]][perm[j]]).collect()).collect();
    for (a, b) in both_shares(&f).iter().zip(both_shares(&g).iter()) {
        let pa = pagerank(a, 0.85).unwrap().values;
        let pb = pagerank(b, 0.85).unwrap().values;
        for i in 0..n {
            assert!((pb[i] - pa[perm[i]]).abs() <= 1e-12);
        }
    }
}

#[test]
fn pagerank_rejects_bad_damping() {
    let w = &both_shares(&[vec![0.0, 1.0], vec![1.0, 0.0]])[0];
    assert!(matches!(pagerank(w, 1.0), Err(Error::InvalidParameter(_))));
    assert!(matches!(pagerank(w, 0.0), Err(Error::InvalidParameter(_))));
}

#[test]
fn stats_match_naive_graph_algorithms() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    while checked < 30 {
        let n = rng.random_range(2..=25);
        let density = rng.random_range(0.05..0.5);
        let f = random_flows(&mut rng, n, density);
        let fm = flow_matrix(&f, Layer::Market);
        let sizes = node_sizes(&fm, None).unwrap();
        for (w, threshold) in both_shares(&f).iter().zip([0.0, 0.05]) {
            let rule = BinarizeRule {
                threshold,
                percent: false,
            };
            let want = oracles::network_stats(&to_vecs(&w.matrix), &sizes.values, threshold);
            match network_stats(w, &sizes, &rule) {
                Ok(got) => {
                    for (k, (g, e)) in got.values().iter().zip(want).enumerate() {
                        assert!(close(*g, e, 1e-9), "stat {k}: {g} vs {e}");
                    }
                    checked += 1;
                }
                Err(Error::DegenerateGraph) => assert!(want[0] == 0.0),
                Err(e) => panic!("{e}"),
            }
        }
    }
}

#[test]
fn stats_of_directed_triangle() {
    // 0 supplies 1, 1 supplies 2, 2 supplies 0
    let f = vec![vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]];
    let w = input_shares(&flow_matrix(&f, Layer::Market));
    let sizes = node_sizes(&flow_matrix(&f, Layer::Market), None).unwrap();
    let s = network_stats(&w, &sizes, &BinarizeRule::default()).unwrap();
    assert_eq!(s.density, 0.5);
    assert_eq!(s.avg_degree, 1.0);
    assert_eq!(s.avg_weight, 1.0);
    assert_eq!(s.reciprocity, 0.0);
    assert_eq!(s.transitivity, 1.0);
    assert_eq!(s.diameter, 2.0);
    assert_eq!(s.mean_distance, 1.5);
    assert!(s.assortativity_by_degree.is_nan());
}

#[test]
fn stats_need_links_and_nodes() {
    let f = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
    let fm = flow_matrix(&f, Layer::Market);
    let sizes = node_sizes(&fm, None).unwrap();
    let w = input_shares(&fm);
    assert!(matches!(network_stats(&w, &sizes, &BinarizeRule::default()), Err(Error::DegenerateGraph)));
    let one = flow_matrix(&[vec![1.0]], Layer::Market);
    let s1 = node_sizes(&one, None).unwrap();
    assert!(matches!(
        network_stats(&input_shares(&one), &s1, &BinarizeRule::default()),
        Err(Error::InvalidParameter(_))
    ));
}

#[test]
fn cosine_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..30 {
        let n = rng.random_range(2..=40);
        let f = random_flows(&mut rng, n, 0.25);
        for w in both_shares(&f) {
            let got = cosine_similarity(&w).matrix;
            let vectors = match w.direction {
                induplex::netcore::Direction::Up => to_vecs(&w.matrix),
                induplex::netcore::Direction::Dw => to_vecs(&w.matrix.transpose()),
            };
            let want = cosine(&vectors);
            for a in 0..n {
                for b in 0..n {
                    assert!((got[(a, b)] - want[a][b]).abs() <= 1e-12);
                    assert_eq!(got[(a, b)], got[(b, a)]);
                }
                let zero = vectors[a].iter().all(|v| *v == 0.0);
                assert_eq!(got[(a, a)], if zero { 0.0 } else { 1.0 });
            }
        }
    }
}

#[test]
fn registry_selects_by_name() {
    let reg = CentralityRegistry::with_defaults(0.85);
    assert_eq!(reg.names(), ["pagerank", "degree", "strength"]);
    let w = &both_shares(&[vec![0.0, 2.0, 1.0], vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 0.0]])[0];
    assert_eq!(reg.get("degree").unwrap().compute(w).unwrap().values, [2.0, 1.0, 0.0]);
    assert!(reg.get("eigenvector").is_err());
}

#[test]
fn ranking_orders_and_reports_quartiles() {
    let f = vec![
        vec![0.0, 1.0, 0.0, 0.0],
        vec![3.0, 0.0, 0.0, 0.0],
        vec![2.0, 0.0, 0.0, 4.0],
        vec![0.0, 0.0, 0.0, 0.0],
    ];
    let sizes = node_sizes(&flow_matrix(&f, Layer::Market), None).unwrap();
    assert_eq!(sizes.values, [5.0, 1.0, 0.0, 4.0]);
    let mut labels = BTreeMap::new();
    labels.insert("c000".to_string(), "first".to_string());
    let t = top_k_ranking(&sizes, 2, &labels).unwrap();
    assert_eq!(t.rows[0].code, "c000");
    assert_eq!(t.rows[0].label, "first");
    assert_eq!(t.rows[1].code, "c003");
    assert_eq!(t.q1, quantile7(&sizes.values, 0.25));
    assert_eq!(t.median, 2.5);
    assert_eq!(t.q3, quantile7(&sizes.values, 0.75));
    assert!(top_k_ranking(&sizes, 5, &labels).is_err());
}

#[test]
fn filtered_edges_exceed_mean_plus_sd() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let n = 12;
    let all: Vec<ShareMatrix> = (0..3)
        .map(|p| {
            let mut w = input_shares(&flow_matrix(&random_flows(&mut rng, n, 0.4), Layer::Market));
            w.period = 2000 + p;
            w
        })
        .collect();
    let mut pooled = Vec::new();
    for w in &all {
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    pooled.push(w.matrix[(i, j)]);
                }
            }
        }
    }
    let m = pooled.iter().sum::<f64>() / pooled.len() as f64;
    let sd = (pooled.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (pooled.len() - 1) as f64).sqrt();
    let window = [2001, 2002];
    let got = export_filtered_edges(&all, &window).unwrap();
    let mut want = 0;
    for i in 0..n {
        for j in 0..n {
            let avg = (all[1].matrix[(i, j)] + all[2].matrix[(i, j)]) / 2.0;
            if i != j && avg > m + sd {
                want += 1;
                let e = got.iter().find(|e| e.target == codes(n)[i] && e.source == codes(n)[j]).unwrap();
                assert!((e.weight - avg).abs() < 1e-15);
            }
        }
    }
    assert_eq!(got.len(), want);
}
