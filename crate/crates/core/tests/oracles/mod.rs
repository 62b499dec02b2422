//! Naive reference implementations written from the definitions, with plain
//! nested loops over `Vec`s. Nothing here calls the library's numerical code.
#![allow(dead_code)]

use std::sync::Arc;

use induplex::netcore::{Direction, DwVariant, FlowMatrix, IndustryIndex, Layer, ShareMatrix};
use induplex::panel::{assemble, AssembleOptions, KeyedColumn, PanelDataset};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn codes(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("c{i:03}")).collect()
}

/// Sparse nonnegative flows `F[user][supplier]`, with exponential magnitudes
/// and an occasional empty row or column.
pub fn random_flows(rng: &mut ChaCha8Rng, n: usize, density: f64) -> Vec<Vec<f64>> {
    let mut f = vec![vec![0.0; n]; n];
    for row in f.iter_mut() {
        for v in row.iter_mut() {
            if rng.random::<f64>() < density {
                *v = -rng.random::<f64>().ln() * 10.0;
            }
        }
    }
    if n > 3 && rng.random::<f64>() < 0.3 {
        let k = rng.random_range(0..n);
        f[k].iter_mut().for_each(|v| *v = 0.0);
    }
    if n > 3 && rng.random::<f64>() < 0.3 {
        let k = rng.random_range(0..n);
        f.iter_mut().for_each(|r| r[k] = 0.0);
    }
    f
}

pub fn to_matrix(v: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(v.len(), v.first().map_or(0, Vec::len), |i, j| v[i][j])
}

pub fn to_vecs(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

pub fn flow_matrix(f: &[Vec<f64>], layer: Layer) -> FlowMatrix {
    let index = Arc::new(IndustryIndex::from_codes(codes(f.len())));
    FlowMatrix::new(2000, layer, index, to_matrix(f)).unwrap()
}

/// `W_up[i][j] = F[i][j] / sum_k F[i][k]`.
pub fn input_shares(f: &[Vec<f64>]) -> Vec<Vec<f64>> {
    f.iter()
        .map(|row| {
            let mut s = 0.0;
            for v in row {
                s += v;
            }
            row.iter().map(|v| if s > 0.0 { v / s } else { 0.0 }).collect()
        })
        .collect()
}

/// `W_dw[i][j] = F[i][j] / sum_k F[k][j]`.
pub fn output_shares(f: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = f.len();
    let mut out = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut s = 0.0;
        for row in f {
            s += row[j];
        }
        for i in 0..n {
            out[i][j] = if s > 0.0 { f[i][j] / s } else { 0.0 };
        }
    }
    out
}

/// Row `i` lists the weights of `i`'s partners: suppliers for up, customers
/// (as shares of `i`'s output) for down.
pub fn partner_weights(w: &ShareMatrix) -> Vec<Vec<f64>> {
    let n = w.matrix.nrows();
    let mut p = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            p[i][j] = match (w.direction, w.variant) {
                (Direction::Dw, DwVariant::ColumnSum) => w.matrix[(j, i)],
                _ => w.matrix[(i, j)],
            };
        }
    }
    p
}

/// `sum_{j != i} l_ij A_j` with `l_ij = 1(p_ij >= theta)`, or `p_ij` itself
/// when `theta` is `None`.
pub fn spillover(p: &[Vec<f64>], a: &[f64], theta: Option<f64>) -> Vec<f64> {
    let n = p.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..n {
            if j == i {
                continue;
            }
            let l = match theta {
                Some(t) => {
                    if p[i][j] >= t {
                        1.0
                    } else {
                        0.0
                    }
                }
                None => p[i][j],
            };
            s += l * a[j];
        }
        out[i] = s;
    }
    out
}

/// Random-walk edges `E[src][dst]`: input shares send weight from supplier
/// to user, output shares from user to supplier.
pub fn walk_edges(w: &ShareMatrix) -> Vec<Vec<f64>> {
    let n = w.matrix.nrows();
    let mut e = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            match w.direction {
                Direction::Up => e[j][i] = w.matrix[(i, j)],
                Direction::Dw => e[i][j] = w.matrix[(i, j)],
            }
        }
    }
    e
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for k in 0..x.len() {
        num += (x[k] - mx) * (y[k] - my);
        dx += (x[k] - mx).powi(2);
        dy += (y[k] - my).powi(2);
    }
    if dx == 0.0 || dy == 0.0 {
        return f64::NAN;
    }
    num / (dx * dy).sqrt()
}

/// The nine descriptive statistics of the directed graph with a link
/// `j -> i` wherever `w[i][j] > 0` (and `>= threshold`), `i != j`.
pub fn network_stats(w: &[Vec<f64>], sizes: &[f64], threshold: f64) -> [f64; 9] {
    let n = w.len();
    let mut adj = vec![vec![false; n]; n];
    let mut weights = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && w[i][j] > 0.0 && w[i][j] >= threshold {
                adj[j][i] = true;
                weights.push(w[i][j]);
            }
        }
    }
    let e = weights.len() as f64;
    let nf = n as f64;
    let mut mutual = 0.0;
    for s in 0..n {
        for t in 0..n {
            if adj[s][t] && adj[t][s] {
                mutual += 1.0;
            }
        }
    }
    // undirected projection
    let und = |a: usize, b: usize| a != b && (adj[a][b] || adj[b][a]);
    let mut triangles = 0.0;
    for a in 0..n {
        for b in (a + 1)..n {
            for c in (b + 1)..n {
                if und(a, b) && und(b, c) && und(a, c) {
                    triangles += 1.0;
                }
            }
        }
    }
    let mut triples = 0.0;
    for v in 0..n {
        let k = (0..n).filter(|&u| und(u, v)).count() as f64;
        triples += k * (k - 1.0) / 2.0;
    }
    let transitivity = if triples > 0.0 { 3.0 * triangles / triples } else { f64::NAN };

    // weak components by repeated label propagation
    let mut label: Vec<usize> = (0..n).collect();
    loop {
        let mut changed = false;
        for a in 0..n {
            for b in 0..n {
                if und(a, b) && label[b] < label[a] {
                    label[a] = label[b];
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut best: Option<(usize, usize)> = None; // (size, label)
    for l in 0..n {
        let members: Vec<usize> = (0..n).filter(|&v| label[v] == l).collect();
        if members.len() < 2 {
            continue;
        }
        if best.map_or(true, |(s, _)| members.len() > s) {
            best = Some((members.len(), l));
        }
    }
    // Floyd-Warshall on directed hops
    let inf = f64::INFINITY;
    let mut d = vec![vec![inf; n]; n];
    for a in 0..n {
        d[a][a] = 0.0;
        for b in 0..n {
            if adj[a][b] {
                d[a][b] = 1.0;
            }
        }
    }
    for k in 0..n {
        for a in 0..n {
            for b in 0..n {
                if d[a][k] + d[k][b] < d[a][b] {
                    d[a][b] = d[a][k] + d[k][b];
                }
            }
        }
    }
    let (mut diameter, mut total, mut pairs) = (0.0f64, 0.0, 0.0);
    if let Some((_, l)) = best {
        for a in 0..n {
            for b in 0..n {
                if a != b && label[a] == l && label[b] == l && d[a][b].is_finite() {
                    diameter = diameter.max(d[a][b]);
                    total += d[a][b];
                    pairs += 1.0;
                }
            }
        }
    }
    let (diameter, mean_distance) = if pairs > 0.0 { (diameter, total / pairs) } else { (f64::NAN, f64::NAN) };

    let outdeg: Vec<f64> = (0..n).map(|v| (0..n).filter(|&u| adj[v][u]).count() as f64).collect();
    let indeg: Vec<f64> = (0..n).map(|v| (0..n).filter(|&u| adj[u][v]).count() as f64).collect();
    let (mut ds, mut dt, mut ss, mut st) = (vec![], vec![], vec![], vec![]);
    for s in 0..n {
        for t in 0..n {
            if adj[s][t] {
                ds.push(outdeg[s]);
                dt.push(indeg[t]);
                ss.push(sizes[s]);
                st.push(sizes[t]);
            }
        }
    }
    [
        e / (nf * (nf - 1.0)),
        e / nf,
        weights.iter().sum::<f64>() / e,
        mutual / e,
        transitivity,
        diameter,
        mean_distance,
        pearson(&ds, &dt),
        pearson(&ss, &st),
    ]
}

/// Dense cosine similarity of rows; pairs involving a zero row are 0.
pub fn cosine(v: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = v.len();
    let norm = |r: &Vec<f64>| r.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut out = vec![vec![0.0; n]; n];
    for a in 0..n {
        for b in 0..n {
            let (na, nb) = (norm(&v[a]), norm(&v[b]));
            if na == 0.0 || nb == 0.0 {
                continue;
            }
            let dot: f64 = v[a].iter().zip(&v[b]).map(|(x, y)| x * y).sum();
            out[a][b] = dot / (na * nb);
        }
    }
    out
}

/// `k`-th order statistic interpolation (R type 7) on unsorted data.
pub fn quantile7(x: &[f64], p: f64) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (s.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    s[lo] + (h - lo as f64) * (s[(lo + 1).min(s.len() - 1)] - s[lo])
}

/// Closeness of two floats allowing both to be NaN.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a.is_nan() && b.is_nan()) || (a - b).abs() <= tol
}

pub struct Design {
    pub panel: PanelDataset,
    pub rows: Vec<(usize, usize)>,
}

/// Random two-way design; `keep` decides which cells exist.
pub fn two_way(n: usize, t: usize, beta: &[f64], noise: f64, seed: u64, keep: f64) -> Design {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alpha: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) * 3.0).collect();
    let gamma: Vec<f64> = (0..t).map(|_| rng.sample::<f64, _>(StandardNormal) * 2.0).collect();
    let mut cols: Vec<KeyedColumn> = ["y", "w"].iter().map(|c| KeyedColumn::new(*c)).collect();
    cols.extend((1..=beta.len()).map(|k| KeyedColumn::new(format!("x{k}"))));
    let mut rows = Vec::new();
    for i in 0..n {
        for s in 0..t {
            if rng.random::<f64>() >= keep && !(s == 0) {
                continue;
            }
            let key = (format!("g{i:03}"), 2000 + s as i32);
            let xs: Vec<f64> = (0..beta.len())
                .map(|_| rng.sample::<f64, _>(StandardNormal) + 0.3 * alpha[i])
                .collect();
            let e: f64 = rng.sample::<f64, _>(StandardNormal) * noise;
            let y = xs.iter().zip(beta).map(|(x, b)| x * b).sum::<f64>() + alpha[i] + gamma[s] + e;
            cols[0].values.insert(key.clone(), y);
            cols[1].values.insert(key.clone(), rng.random_range(0.5..3.0));
            for (k, x) in xs.iter().enumerate() {
                cols[2 + k].values.insert(key.clone(), *x);
            }
            rows.push((i, s));
        }
    }
    let inds: Vec<String> = (0..n).map(|i| format!("g{i:03}")).collect();
    let periods: Vec<i32> = (0..t as i32).map(|s| 2000 + s).collect();
    let panel = assemble(&inds, &periods, &cols, &AssembleOptions::default()).unwrap();
    Design { panel, rows }
}

/// Weighted least squares on regressors plus explicit industry and period
/// dummies (first period dropped).
pub fn dummy_oracle(d: &Design, k: usize, n: usize, t: usize, time: bool) -> Vec<f64> {
    let p = &d.panel;
    let cols = k + n + if time { t - 1 } else { 0 };
    let m = d.rows.len();
    let mut x = DMatrix::<f64>::zeros(m, cols);
    let mut y = DVector::<f64>::zeros(m);
    for (r, &(i, s)) in d.rows.iter().enumerate() {
        let code = format!("g{i:03}");
        let per = 2000 + s as i32;
        let w = p.get(&code, per, "w").unwrap().unwrap().sqrt();
        y[r] = w * p.get(&code, per, "y").unwrap().unwrap();
        for j in 0..k {
            x[(r, j)] = w * p.get(&code, per, &format!("x{}", j + 1)).unwrap().unwrap();
        }
        x[(r, k + i)] = w;
        if time && s > 0 {
            x[(r, k + n + s - 1)] = w;
        }
    }
    let sol = x.svd(true, true).solve(&y, 1e-12).unwrap();
    sol.iter().take(k).copied().collect()
}
