//! Centrality, similarity, aggregate network statistics and ranking tables.
//!
//! Centrality measures are strategies behind [`Centrality`] and are looked up
//! by name in a [`CentralityRegistry`], so the pipeline can select them from
//! configuration.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::netcore::{Direction, IndustryIndex, Layer, NodeSizeVector, ShareMatrix};
use crate::stats;

pub const DEFAULT_DAMPING: f64 = 0.85;
pub const PAGERANK_TOLERANCE: f64 = 1e-12;
pub const PAGERANK_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct CentralityVector {
    pub period: i32,
    pub layer: Layer,
    pub direction: Direction,
    pub kind: &'static str,
    pub values: Vec<f64>,
}

pub trait Centrality: Send + Sync {
    fn name(&self) -> &'static str;
    fn compute(&self, shares: &ShareMatrix) -> Result<CentralityVector>;
}

/// Name-keyed collection of centrality strategies.
pub struct CentralityRegistry {
    entries: Vec<Box<dyn Centrality>>,
}

impl CentralityRegistry {
    pub fn empty() -> Self {
        CentralityRegistry { entries: Vec::new() }
    }

    /// PageRank (with the given damping), degree and strength.
    pub fn with_defaults(damping: f64) -> Self {
        let mut r = CentralityRegistry::empty();
        r.register(Box::new(PageRank::new(damping)));
        r.register(Box::new(Degree { threshold: None }));
        r.register(Box::new(Strength));
        r
    }

    /// Registering a name twice replaces the earlier entry.
    pub fn register(&mut self, c: Box<dyn Centrality>) {
        self.entries.retain(|e| e.name() != c.name());
        self.entries.push(c);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Centrality> {
        self.entries
            .iter()
            .find(|e| e.name() == name)
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::UnknownStrategy {
                kind: "centrality",
                name: name.to_string(),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name()).collect()
    }
}

/// Weighted directed PageRank with uniform teleportation and uniform
/// redistribution of dangling mass.
#[derive(Debug, Clone, Copy)]
pub struct PageRank {
    pub damping: f64,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl PageRank {
    pub fn new(damping: f64) -> Self {
        PageRank {
            damping,
            tolerance: PAGERANK_TOLERANCE,
            max_iter: PAGERANK_MAX_ITER,
        }
    }
}

/// Edge-weight matrix `E[src][dst]` along which rank flows. Upstream rank
/// moves from supplier to customer weighted by the customer's input share;
/// downstream rank moves from customer to supplier weighted by the output share.
pub fn rank_flow_weights(shares: &ShareMatrix) -> DMatrix<f64> {
    match shares.direction {
        Direction::Up => shares.matrix.transpose(),
        Direction::Dw => shares.matrix.clone(),
    }
}

/// Power iteration on an edge-weight matrix `weights[(src, dst)]`.
pub fn pagerank_weights(weights: &DMatrix<f64>, pr: &PageRank) -> Result<Vec<f64>> {
    if !(pr.damping > 0.0 && pr.damping < 1.0) {
        return Err(Error::InvalidParameter(format!("damping {} outside (0, 1)", pr.damping)));
    }
    let n = weights.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let out_strength: Vec<f64> = weights.row_iter().map(|r| r.sum()).collect();
    // (src, dst, transition probability)
    let mut links = Vec::new();
    for src in 0..n {
        if out_strength[src] > 0.0 {
            for dst in 0..n {
                let w = weights[(src, dst)];
                if w > 0.0 {
                    links.push((src, dst, w / out_strength[src]));
                }
            }
        }
    }
    let dangling: Vec<usize> = (0..n).filter(|&i| !(out_strength[i] > 0.0)).collect();
    let nf = n as f64;
    let d = pr.damping;
    let mut x = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..pr.max_iter {
        let dangling_mass: f64 = dangling.iter().map(|&i| x[i]).sum();
        let base = (1.0 - d) / nf + d * dangling_mass / nf;
        next.iter_mut().for_each(|v| *v = base);
        for &(src, dst, p) in &links {
            next[dst] += d * p * x[src];
        }
        residual = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut x, &mut next);
        if residual < pr.tolerance {
            let total: f64 = x.iter().sum();
            return Ok(x.into_iter().map(|v| v / total).collect());
        }
    }
    Err(Error::NonConvergence {
        iterations: pr.max_iter,
        residual,
    })
}

pub fn pagerank(shares: &ShareMatrix, damping: f64) -> Result<CentralityVector> {
    PageRank::new(damping).compute(shares)
}

impl Centrality for PageRank {
    fn name(&self) -> &'static str {
        "pagerank"
    }

    fn compute(&self, shares: &ShareMatrix) -> Result<CentralityVector> {
        let values = pagerank_weights(&rank_flow_weights(shares), self)?;
        Ok(CentralityVector {
            period: shares.period,
            layer: shares.layer,
            direction: shares.direction,
            kind: self.name(),
            values,
        })
    }
}

/// Number of off-diagonal partners per row with weight above `threshold` (zero
/// when `None`), and the sum of off-diagonal weights per row.
pub fn degree_strength_rows(m: &DMatrix<f64>, threshold: Option<f64>) -> (Vec<f64>, Vec<f64>) {
    let cut = threshold.unwrap_or(0.0);
    let n = m.nrows();
    let mut degree = vec![0.0; n];
    let mut strength = vec![0.0; n];
    for i in 0..n {
        for j in 0..m.ncols() {
            if i == j {
                continue;
            }
            let w = m[(i, j)];
            if w > cut {
                degree[i] += 1.0;
            }
            strength[i] += w;
        }
    }
    (degree, strength)
}

/// Degree and strength of every industry in the direction of `shares`:
/// suppliers for upstream, customers for downstream.
pub fn degree_strength(shares: &ShareMatrix, threshold: Option<f64>) -> (CentralityVector, CentralityVector) {
    let (d, s) = degree_strength_rows(&shares.partner_view(), threshold);
    let make = |kind, values| CentralityVector {
        period: shares.period,
        layer: shares.layer,
        direction: shares.direction,
        kind,
        values,
    };
    (make("degree", d), make("strength", s))
}

#[derive(Debug, Clone, Copy)]
pub struct Degree {
    pub threshold: Option<f64>,
}

impl Centrality for Degree {
    fn name(&self) -> &'static str {
        "degree"
    }
    fn compute(&self, shares: &ShareMatrix) -> Result<CentralityVector> {
        Ok(degree_strength(shares, self.threshold).0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Strength;

impl Centrality for Strength {
    fn name(&self) -> &'static str {
        "strength"
    }
    fn compute(&self, shares: &ShareMatrix) -> Result<CentralityVector> {
        Ok(degree_strength(shares, None).1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub period: i32,
    pub layer: Layer,
    pub direction: Direction,
    pub matrix: DMatrix<f64>,
}

/// Cosine similarity between the row vectors of `vectors`, accumulated over
/// shared nonzero coordinates only. Zero vectors are similar to nothing.
pub fn cosine_rows(vectors: &DMatrix<f64>) -> DMatrix<f64> {
    let n = vectors.nrows();
    let dim = vectors.ncols();
    let norms: Vec<f64> = vectors.row_iter().map(|r| r.norm()).collect();
    // coordinate -> [(row, value)]
    let mut by_coord: Vec<Vec<(usize, f64)>> = vec![Vec::new(); dim];
    for i in 0..n {
        if norms[i] == 0.0 {
            continue;
        }
        for k in 0..dim {
            let v = vectors[(i, k)];
            if v != 0.0 {
                by_coord[k].push((i, v / norms[i]));
            }
        }
    }
    let mut sim = DMatrix::<f64>::zeros(n, n);
    for entries in &by_coord {
        for (a, &(i, vi)) in entries.iter().enumerate() {
            for &(j, vj) in &entries[a + 1..] {
                sim[(i, j)] += vi * vj;
            }
        }
    }
    for i in 0..n {
        if norms[i] > 0.0 {
            sim[(i, i)] = 1.0;
        }
        for j in (i + 1)..n {
            let v = sim[(i, j)].clamp(0.0, 1.0);
            sim[(i, j)] = v;
            sim[(j, i)] = v;
        }
    }
    sim
}

pub fn cosine_similarity(shares: &ShareMatrix) -> SimilarityMatrix {
    SimilarityMatrix {
        period: shares.period,
        layer: shares.layer,
        direction: shares.direction,
        matrix: cosine_rows(&shares.industry_vectors()),
    }
}

/// Which share entries count as links when binarizing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinarizeRule {
    /// A link needs a positive share of at least this value.
    pub threshold: f64,
    /// Report the average weight in percent.
    pub percent: bool,
}

impl Default for BinarizeRule {
    fn default() -> Self {
        BinarizeRule {
            threshold: 0.0,
            percent: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkStats {
    pub density: f64,
    pub avg_degree: f64,
    pub avg_weight: f64,
    pub reciprocity: f64,
    pub transitivity: f64,
    pub diameter: f64,
    pub mean_distance: f64,
    pub assortativity_by_degree: f64,
    pub assortativity_by_size: f64,
}

impl NetworkStats {
    pub const FIELDS: [&'static str; 9] = [
        "density",
        "avg_degree",
        "avg_weight",
        "reciprocity",
        "transitivity",
        "diameter",
        "mean_distance",
        "assortativity_by_degree",
        "assortativity_by_size",
    ];

    pub fn values(&self) -> [f64; 9] {
        [
            self.density,
            self.avg_degree,
            self.avg_weight,
            self.reciprocity,
            self.transitivity,
            self.diameter,
            self.mean_distance,
            self.assortativity_by_degree,
            self.assortativity_by_size,
        ]
    }
}

/// Directed link list `(supplier, user)` of the binarized share matrix,
/// excluding self-loops.
pub fn binarized_links(shares: &DMatrix<f64>, rule: &BinarizeRule) -> Vec<(usize, usize)> {
    let n = shares.nrows();
    let mut links = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let w = shares[(i, j)];
            if i != j && w > 0.0 && w >= rule.threshold {
                links.push((j, i));
            }
        }
    }
    links
}

/// Aggregate statistics of the binarized network. Undefined correlations
/// (zero variance of endpoint values) are reported as NaN.
pub fn network_stats(shares: &ShareMatrix, sizes: &NodeSizeVector, rule: &BinarizeRule) -> Result<NetworkStats> {
    let m = &shares.matrix;
    let n = m.nrows();
    if n < 2 {
        return Err(Error::InvalidParameter("network statistics need at least two nodes".into()));
    }
    if sizes.values.len() != n {
        return Err(Error::IndexMismatch("size vector length differs from network".into()));
    }
    let links = binarized_links(m, rule);
    if links.is_empty() {
        return Err(Error::DegenerateGraph);
    }
    let e = links.len() as f64;
    let nf = n as f64;

    let mut adj = vec![vec![false; n]; n];
    let mut out_deg = vec![0usize; n];
    let mut in_deg = vec![0usize; n];
    let mut weight_sum = 0.0;
    for &(s, t) in &links {
        adj[s][t] = true;
        out_deg[s] += 1;
        in_deg[t] += 1;
        weight_sum += m[(t, s)];
    }
    let scale = if rule.percent { 100.0 } else { 1.0 };
    let reciprocal = links.iter().filter(|&&(s, t)| adj[t][s]).count() as f64;

    // Undirected projection.
    let mut nbrs: Vec<Vec<usize>> = vec![Vec::new(); n];
    for s in 0..n {
        for t in (s + 1)..n {
            if adj[s][t] || adj[t][s] {
                nbrs[s].push(t);
                nbrs[t].push(s);
            }
        }
    }
    let und = |a: usize, b: usize| adj[a][b] || adj[b][a];
    let mut closed = 0usize;
    let mut triples = 0usize;
    for v in 0..n {
        let k = nbrs[v].len();
        triples += k * k.saturating_sub(1) / 2;
        for (x, &a) in nbrs[v].iter().enumerate() {
            for &b in &nbrs[v][x + 1..] {
                if und(a, b) {
                    closed += 1;
                }
            }
        }
    }
    let transitivity = if triples > 0 {
        closed as f64 / triples as f64
    } else {
        f64::NAN
    };

    let (diameter, mean_distance) = lcc_distances(&nbrs, &out_adjacency(&adj));

    let deg_src: Vec<f64> = links.iter().map(|&(s, _)| out_deg[s] as f64).collect();
    let deg_dst: Vec<f64> = links.iter().map(|&(_, t)| in_deg[t] as f64).collect();
    let size_src: Vec<f64> = links.iter().map(|&(s, _)| sizes.values[s]).collect();
    let size_dst: Vec<f64> = links.iter().map(|&(_, t)| sizes.values[t]).collect();

    Ok(NetworkStats {
        density: e / (nf * (nf - 1.0)),
        avg_degree: e / nf,
        avg_weight: scale * weight_sum / e,
        reciprocity: reciprocal / e,
        transitivity,
        diameter,
        mean_distance,
        assortativity_by_degree: stats::pearson(&deg_src, &deg_dst),
        assortativity_by_size: stats::pearson(&size_src, &size_dst),
    })
}

fn out_adjacency(adj: &[Vec<bool>]) -> Vec<Vec<usize>> {
    adj.iter()
        .map(|row| row.iter().enumerate().filter(|(_, &b)| b).map(|(j, _)| j).collect())
        .collect()
}

/// Directed hop distances restricted to the largest weakly connected
/// component (ties go to the component holding the lowest node id).
fn lcc_distances(undirected: &[Vec<usize>], out: &[Vec<usize>]) -> (f64, f64) {
    let n = undirected.len();
    let mut comp = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    for start in 0..n {
        if comp[start] != usize::MAX || undirected[start].is_empty() {
            continue;
        }
        let id = sizes.len();
        let mut count = 0;
        let mut queue = VecDeque::from([start]);
        comp[start] = id;
        while let Some(v) = queue.pop_front() {
            count += 1;
            for &w in &undirected[v] {
                if comp[w] == usize::MAX {
                    comp[w] = id;
                    queue.push_back(w);
                }
            }
        }
        sizes.push(count);
    }
    let Some(best) = (0..sizes.len()).max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a))) else {
        return (f64::NAN, f64::NAN);
    };
    let members: Vec<usize> = (0..n).filter(|&v| comp[v] == best).collect();
    let mut diameter = 0usize;
    let mut total = 0usize;
    let mut pairs = 0usize;
    let mut dist = vec![usize::MAX; n];
    for &s in &members {
        dist.iter_mut().for_each(|d| *d = usize::MAX);
        dist[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for &w in &out[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        for &t in &members {
            if t != s && dist[t] != usize::MAX {
                diameter = diameter.max(dist[t]);
                total += dist[t];
                pairs += 1;
            }
        }
    }
    if pairs == 0 {
        return (f64::NAN, f64::NAN);
    }
    (diameter as f64, total as f64 / pairs as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingRow {
    pub rank: usize,
    pub code: String,
    pub label: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingTable {
    pub period: i32,
    pub rows: Vec<RankingRow>,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

/// Top-`k` industries by size (descending, ties by code) plus the quartiles
/// of the full distribution. Sizes are expected to be mean-normalized.
pub fn top_k_ranking(sizes: &NodeSizeVector, k: usize, labels: &BTreeMap<String, String>) -> Result<RankingTable> {
    let n = sizes.values.len();
    if k > n {
        return Err(Error::KTooLarge { k, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        sizes.values[b]
            .total_cmp(&sizes.values[a])
            .then_with(|| sizes.index.code(a).cmp(sizes.index.code(b)))
    });
    let rows = order
        .iter()
        .take(k)
        .enumerate()
        .map(|(r, &i)| {
            let code = sizes.index.code(i).to_string();
            RankingRow {
                rank: r + 1,
                label: labels.get(&code).cloned().unwrap_or_default(),
                code,
                value: sizes.values[i],
            }
        })
        .collect();
    let mut sorted = sizes.values.clone();
    sorted.sort_by(f64::total_cmp);
    let (q1, median, q3) = if sorted.is_empty() {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        (
            stats::quantile_sorted(&sorted, 0.25),
            stats::quantile_sorted(&sorted, 0.5),
            stats::quantile_sorted(&sorted, 0.75),
        )
    };
    Ok(RankingTable {
        period: sizes.period,
        rows,
        q1,
        median,
        q3,
    })
}

/// Writes ranking rows followed by three trailing quartile records.
pub fn write_ranking_csv<W: Write>(out: W, tables: &[RankingTable], fmt: impl Fn(f64) -> String) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["period", "rank", "code", "label", "value"])?;
    for t in tables {
        for r in &t.rows {
            w.write_record([
                t.period.to_string(),
                r.rank.to_string(),
                r.code.clone(),
                r.label.clone(),
                fmt(r.value),
            ])?;
        }
    }
    for t in tables {
        for (name, v) in [("Q1", t.q1), ("median", t.median), ("Q3", t.q3)] {
            w.write_record([t.period.to_string(), name.to_string(), String::new(), String::new(), fmt(v)])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilteredEdge {
    /// Supplying industry.
    pub source: String,
    /// Using industry.
    pub target: String,
    pub weight: f64,
}

/// Off-diagonal pairs whose mean weight over `window` periods exceeds the
/// mean plus one standard deviation of all off-diagonal weights in `all`.
pub fn export_filtered_edges(all: &[ShareMatrix], window: &[i32]) -> Result<Vec<FilteredEdge>> {
    let selected: Vec<&ShareMatrix> = all.iter().filter(|s| window.contains(&s.period)).collect();
    if selected.is_empty() {
        return Err(Error::InvalidParameter("window selects no period".into()));
    }
    let index: &Arc<IndustryIndex> = &selected[0].index;
    let n = index.len();
    if all.iter().any(|s| s.matrix.nrows() != n) {
        return Err(Error::IndexMismatch("share matrices differ in size".into()));
    }
    let pooled: Vec<f64> = all
        .iter()
        .flat_map(|s| {
            (0..n).flat_map(move |i| (0..n).filter(move |&j| j != i).map(move |j| s.matrix[(i, j)]))
        })
        .collect();
    let cutoff = stats::mean(&pooled) + stats::sample_sd(&pooled);
    let mut out = Vec::new();
    for j in 0..n {
        for i in 0..n {
            if i == j {
                continue;
            }
            let mean = selected.iter().map(|s| s.matrix[(i, j)]).sum::<f64>() / selected.len() as f64;
            if mean > cutoff {
                out.push(FilteredEdge {
                    source: index.code(j).to_string(),
                    target: index.code(i).to_string(),
                    weight: mean,
                });
            }
        }
    }
    Ok(out)
}

/// Pairwise Pearson correlations between named centrality (or size) vectors.
pub fn correlation_matrix(vectors: &[(&str, &[f64])]) -> DMatrix<f64> {
    let k = vectors.len();
    DMatrix::from_fn(k, k, |a, b| {
        if a == b {
            1.0
        } else {
            stats::pearson(vectors[a].1, vectors[b].1)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::{input_shares, output_shares, DwVariant, FlowMatrix};

    fn flows(rows: &[&[f64]]) -> FlowMatrix {
        let n = rows.len();
        let index = Arc::new(IndustryIndex::from_codes((0..n).map(|i| format!("c{i:02}"))));
        FlowMatrix::new(1, Layer::Market, index, DMatrix::from_fn(n, n, |i, j| rows[i][j])).unwrap()
    }

    fn sizes_of(f: &FlowMatrix, v: Vec<f64>) -> NodeSizeVector {
        NodeSizeVector {
            period: f.period,
            layer: f.layer,
            index: Arc::clone(&f.index),
            values: v,
            normalization: Default::default(),
        }
    }

    #[test]
    fn complete_graph_pagerank_is_uniform() {
        let f = flows(&[&[0.0, 1.0, 1.0, 1.0], &[1.0, 0.0, 1.0, 1.0], &[1.0, 1.0, 0.0, 1.0], &[1.0, 1.0, 1.0, 0.0]]);
        for s in [input_shares(&f), output_shares(&f, DwVariant::ColumnSum)] {
            let pr = pagerank(&s, DEFAULT_DAMPING).unwrap();
            for v in pr.values {
                assert!((v - 0.25).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn two_cycle_pagerank() {
        let f = flows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let pr = pagerank(&input_shares(&f), 0.85).unwrap();
        assert!((pr.values[0] - 0.5).abs() < 1e-15);
        assert!((pr.values[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dangling_and_bad_damping() {
        let f = flows(&[&[0.0, 0.0], &[1.0, 0.0]]);
        let pr = pagerank(&input_shares(&f), 0.85).unwrap();
        assert!((pr.values.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // rank flows from supplier 0 to user 1
        assert!(pr.values[1] > pr.values[0]);
        assert!(matches!(pagerank(&input_shares(&f), 1.0), Err(Error::InvalidParameter(_))));
        let capped = PageRank {
            max_iter: 1,
            ..PageRank::new(0.85)
        };
        assert!(matches!(capped.compute(&input_shares(&f)), Err(Error::NonConvergence { .. })));
    }

    #[test]
    fn star_degree_and_strength() {
        // industry 0 buys from 1..=4
        let f = flows(&[
            &[0.0, 1.0, 1.0, 1.0, 1.0],
            &[0.0; 5],
            &[0.0; 5],
            &[0.0; 5],
            &[0.0; 5],
        ]);
        let (d, s) = degree_strength(&input_shares(&f), None);
        assert_eq!(d.values[0], 4.0);
        assert!((s.values[0] - 1.0).abs() < 1e-15);
        let (d_dw, _) = degree_strength(&output_shares(&f, DwVariant::ColumnSum), None);
        assert_eq!(d_dw.values, [0.0, 1.0, 1.0, 1.0, 1.0]);

        let g = flows(&[&[0.0, 0.2, 0.3], &[0.0; 3], &[0.0; 3]]);
        let (_, s) = degree_strength_rows(&g.matrix, None);
        assert!((s[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn registry_lookup() {
        let reg = CentralityRegistry::with_defaults(0.85);
        assert_eq!(reg.names(), ["pagerank", "degree", "strength"]);
        assert!(reg.get("pagerank").is_ok());
        assert!(matches!(reg.get("katz"), Err(Error::UnknownStrategy { .. })));
    }

    #[test]
    fn cosine_basic_cases() {
        let v = DMatrix::from_row_slice(4, 3, &[1.0, 2.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0]);
        let s = cosine_rows(&v);
        assert!((s[(0, 1)] - 1.0).abs() < 1e-15);
        assert_eq!(s[(0, 2)], 0.0);
        assert_eq!(s[(3, 3)], 0.0);
        assert_eq!(s[(2, 2)], 1.0);
        assert_eq!(s, s.transpose());
    }

    #[test]
    fn k3_statistics() {
        let f = flows(&[&[0.0, 1.0, 1.0], &[1.0, 0.0, 1.0], &[1.0, 1.0, 0.0]]);
        let st = network_stats(&input_shares(&f), &sizes_of(&f, vec![1.0, 2.0, 3.0]), &BinarizeRule::default()).unwrap();
        assert_eq!(st.density, 1.0);
        assert_eq!(st.reciprocity, 1.0);
        assert_eq!(st.transitivity, 1.0);
        assert_eq!(st.diameter, 1.0);
        assert_eq!(st.mean_distance, 1.0);
        assert_eq!(st.avg_degree, 2.0);
        assert!((st.avg_weight - 0.5).abs() < 1e-15);
    }

    #[test]
    fn directed_cycle_has_no_reciprocity() {
        let f = flows(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0]]);
        let st = network_stats(&input_shares(&f), &sizes_of(&f, vec![1.0; 3]), &BinarizeRule::default()).unwrap();
        assert_eq!(st.reciprocity, 0.0);
        assert_eq!(st.diameter, 2.0);
        assert_eq!(st.transitivity, 1.0);
    }

    #[test]
    fn empty_graph_is_degenerate() {
        let f = flows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert!(matches!(
            network_stats(&input_shares(&f), &sizes_of(&f, vec![1.0; 2]), &BinarizeRule::default()),
            Err(Error::DegenerateGraph)
        ));
    }

    #[test]
    fn ranking_and_quartiles() {
        let f = flows(&[&[0.0; 3], &[0.0; 3], &[0.0; 3]]);
        let s = sizes_of(&f, vec![3.0, 1.0, 2.0]);
        let t = top_k_ranking(&s, 2, &BTreeMap::from([("c00".into(), "Alpha".into())])).unwrap();
        assert_eq!(t.rows.iter().map(|r| r.code.as_str()).collect::<Vec<_>>(), ["c00", "c02"]);
        assert_eq!(t.rows[0].label, "Alpha");
        assert!(matches!(top_k_ranking(&s, 4, &BTreeMap::new()), Err(Error::KTooLarge { .. })));
        let c = sizes_of(&f, vec![1.0; 3]);
        let t = top_k_ranking(&c, 3, &BTreeMap::new()).unwrap();
        assert_eq!((t.q1, t.median, t.q3), (1.0, 1.0, 1.0));
        // ties broken by code
        assert_eq!(t.rows[0].code, "c00");
    }

    #[test]
    fn filtered_edges() {
        let eq = flows(&[&[0.0, 1.0, 1.0], &[1.0, 0.0, 1.0], &[1.0, 1.0, 0.0]]);
        let s = input_shares(&eq);
        assert!(export_filtered_edges(&[s.clone()], &[1]).unwrap().is_empty());

        // self-flows dominate numerically but are never exported
        let dom = flows(&[&[50.0, 10.0, 0.1, 0.1], &[0.1, 50.0, 0.1, 0.1], &[0.1, 0.1, 50.0, 0.1], &[0.1, 0.1, 0.1, 50.0]]);
        let raw = ShareMatrix {
            matrix: dom.matrix.clone(),
            ..input_shares(&dom)
        };
        let out = export_filtered_edges(&[raw], &[1]).unwrap();
        assert_eq!(out, vec![FilteredEdge { source: "c01".into(), target: "c00".into(), weight: 10.0 }]);
    }
}
