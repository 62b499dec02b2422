//! Synthetic data with known ground truth, and reference implementations
//! written independently of the production kernels.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::distr::{Bernoulli, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;

use crate::econ::{Estimator, RegressionSpec};
use crate::error::{Error, Result};
use crate::ingest::{aux_columns, AuxPanelRow, FlowEdge};
use crate::netcore::{DuplexPanelNetwork, DwVariant, IndustryIndex};
use crate::panel::{assemble, AssembleOptions, KeyedColumn, PanelDataset};
use crate::stats;

/// Dynamic panel design `y_it = rho y_i,t-1 + beta'x_it + mu_i + e_it`.
#[derive(Debug, Clone, PartialEq)]
pub struct DgpSpec {
    pub n: usize,
    pub t: usize,
    pub rho: f64,
    pub fe_sd: f64,
    pub noise_sd: f64,
    /// One coefficient per iid standard normal regressor `x1`, `x2`, ...
    pub beta: Vec<f64>,
    pub seed: u64,
    /// Periods simulated and discarded before the first recorded period.
    pub burn_in: usize,
    /// Extra dispersion of the starting value around its stationary mean.
    pub init_sd: f64,
    pub allow_nonstationary: bool,
    pub first_period: i32,
}

impl Default for DgpSpec {
    fn default() -> Self {
        DgpSpec {
            n: 100,
            t: 8,
            rho: 0.5,
            fe_sd: 1.0,
            noise_sd: 1.0,
            beta: Vec::new(),
            seed: 0,
            burn_in: 50,
            init_sd: 0.0,
            allow_nonstationary: false,
            first_period: 1,
        }
    }
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.t == 0 {
            return Err(Error::InvalidParameter("empty panel design".into()));
        }
        if self.rho.abs() >= 1.0 && !self.allow_nonstationary {
            return Err(Error::InvalidParameter(format!("|rho| = {} needs allow_nonstationary", self.rho.abs())));
        }
        if self.fe_sd < 0.0 || self.noise_sd < 0.0 || self.init_sd < 0.0 {
            return Err(Error::InvalidParameter("negative dispersion".into()));
        }
        Ok(())
    }

    pub fn periods(&self) -> Vec<i32> {
        (0..self.t as i32).map(|k| self.first_period + k).collect()
    }
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn industry_code(i: usize) -> String {
    format!("i{i:04}")
}

/// Panel with columns `y`, `x1`, ... drawn from `rng`.
pub fn gen_ar1_panel_with<R: Rng>(spec: &DgpSpec, rng: &mut R) -> Result<PanelDataset> {
    spec.validate()?;
    let periods = spec.periods();
    let k = spec.beta.len();
    let mut y_col = KeyedColumn::new("y");
    let mut x_cols: Vec<KeyedColumn> = (1..=k).map(|j| KeyedColumn::new(format!("x{j}"))).collect();
    let stationary = spec.rho.abs() < 1.0;
    let signal_var: f64 = spec.beta.iter().map(|b| b * b).sum::<f64>() + spec.noise_sd * spec.noise_sd;
    for i in 0..spec.n {
        let code = industry_code(i);
        let mu = spec.fe_sd * normal(rng);
        let (centre, spread) = if stationary {
            (
                mu / (1.0 - spec.rho),
                (signal_var / (1.0 - spec.rho * spec.rho) + spec.init_sd * spec.init_sd).sqrt(),
            )
        } else {
            (0.0, spec.init_sd)
        };
        let mut y = centre + spread * normal(rng);
        let draw = |rng: &mut R| -> (Vec<f64>, f64) {
            let xs: Vec<f64> = (0..k).map(|_| normal(rng)).collect();
            (xs, spec.noise_sd * normal(rng))
        };
        let step = |y: f64, xs: &[f64], e: f64| spec.rho * y + spec.beta.iter().zip(xs).map(|(b, x)| b * x).sum::<f64>() + mu + e;
        for _ in 0..spec.burn_in {
            let (xs, e) = draw(rng);
            y = step(y, &xs, e);
        }
        for (s, &period) in periods.iter().enumerate() {
            let (xs, e) = draw(rng);
            // without burn-in the starting draw is the first observation
            if s > 0 || spec.burn_in > 0 {
                y = step(y, &xs, e);
            }
            let key = (code.clone(), period);
            for (c, x) in x_cols.iter_mut().zip(&xs) {
                c.values.insert(key.clone(), *x);
            }
            y_col.values.insert(key, y);
        }
    }
    let industries: Vec<String> = (0..spec.n).map(industry_code).collect();
    let mut sources = vec![y_col];
    sources.extend(x_cols);
    assemble(&industries, &periods, &sources, &AssembleOptions::default())
}

pub fn gen_ar1_panel(spec: &DgpSpec) -> Result<PanelDataset> {
    gen_ar1_panel_with(spec, &mut ChaCha8Rng::seed_from_u64(spec.seed))
}

/// Raw synthetic inputs for both layers, in ingest formats.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDuplex {
    pub codes: Vec<String>,
    pub periods: Vec<i32>,
    pub market_edges: Vec<FlowEdge>,
    pub innovation_edges: Vec<FlowEdge>,
    /// Innovation-layer sizes per period.
    pub stocks: BTreeMap<i32, BTreeMap<String, f64>>,
    pub aux: Vec<AuxPanelRow>,
}

impl SyntheticDuplex {
    pub fn network(&self, variant: DwVariant) -> Result<DuplexPanelNetwork> {
        let index = Arc::new(IndustryIndex::from_codes(self.codes.iter().cloned()));
        DuplexPanelNetwork::build(index, &self.periods, &self.market_edges, &self.innovation_edges, &self.stocks, variant)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DuplexSpec {
    pub n: usize,
    pub periods: Vec<i32>,
    pub density: f64,
    pub seed: u64,
}

/// Independent Bernoulli(density) support for every ordered pair in each
/// period and layer, with unit-mean exponential magnitudes. Auxiliary
/// controls are positive lognormal draws; the production-labor share lies in
/// (0, 1).
pub fn gen_random_duplex_inputs(spec: &DuplexSpec) -> Result<SyntheticDuplex> {
    if !(spec.density > 0.0 && spec.density <= 1.0) {
        return Err(Error::InvalidParameter(format!("density {} outside (0, 1]", spec.density)));
    }
    let support = Bernoulli::new(spec.density).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let codes: Vec<String> = (0..spec.n).map(industry_code).collect();
    let mut market_edges = Vec::new();
    let mut innovation_edges = Vec::new();
    let mut stocks = BTreeMap::new();
    let mut aux = Vec::new();
    for &p in &spec.periods {
        for edges in [&mut market_edges, &mut innovation_edges] {
            for s in &codes {
                for t in &codes {
                    if support.sample(&mut rng) {
                        let v: f64 = rng.sample(Exp1);
                        edges.push(FlowEdge {
                            source_code: s.clone(),
                            target_code: t.clone(),
                            value: v,
                            period: p,
                        });
                    }
                }
            }
        }
        let mut st = BTreeMap::new();
        for c in &codes {
            let v: f64 = rng.sample(Exp1);
            st.insert(c.clone(), v * 10.0);
        }
        stocks.insert(p, st);
        for c in &codes {
            let mut values = BTreeMap::new();
            for col in aux_columns::ALL {
                let v = match col {
                    aux_columns::PROD_LABOR_SHARE => rng.random_range(0.3..0.9),
                    _ => (0.5 * normal(&mut rng)).exp(),
                };
                values.insert(col.to_string(), v);
            }
            aux.push(AuxPanelRow {
                industry: c.clone(),
                period: p,
                values,
            });
        }
    }
    Ok(SyntheticDuplex {
        codes,
        periods: spec.periods.clone(),
        market_edges,
        innovation_edges,
        stocks,
        aux,
    })
}

pub fn gen_random_duplex(spec: &DuplexSpec) -> Result<DuplexPanelNetwork> {
    gen_random_duplex_inputs(spec)?.network(DwVariant::ColumnSum)
}

/// Column-stochastic transition matrix `M[dst][src]` from edge weights
/// `w[src][dst]`; sources without out-weight jump uniformly.
pub fn oracle_transition(w: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = w.len();
    let mut m = vec![vec![0.0; n]; n];
    for src in 0..n {
        let mut out = 0.0;
        for dst in 0..n {
            out += w[src][dst];
        }
        for dst in 0..n {
            m[dst][src] = if out > 0.0 { w[src][dst] / out } else { 1.0 / n as f64 };
        }
    }
    m
}

/// Solves `(I - d M) x = (1 - d)/N` by Gaussian elimination with partial
/// pivoting and normalizes `x` to sum to one.
pub fn oracle_pagerank_dense(m: &[Vec<f64>], damping: f64) -> Result<Vec<f64>> {
    let n = m.len();
    if n > 200 {
        return Err(Error::InvalidParameter(format!("dense oracle limited to 200 nodes, got {n}")));
    }
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).map(|j| if i == j { 1.0 } else { 0.0 } - damping * m[i][j]).collect();
            row.push((1.0 - damping) / n as f64);
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))
            .unwrap();
        if a[piv][col].abs() < 1e-300 {
            return Err(Error::SingularSystem);
        }
        a.swap(col, piv);
        for r in (col + 1)..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..=n {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = a[i][n];
        for j in (i + 1)..n {
            s -= a[i][j] * x[j];
        }
        x[i] = s / a[i][i];
    }
    let total: f64 = x.iter().sum();
    Ok(x.into_iter().map(|v| v / total).collect())
}

/// Generator for replication `rep` under `master_seed`.
pub fn replication_rng(master_seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(rep);
    rng
}

/// Runs `f` on `reps` independently generated panels, in parallel, and
/// returns the outcomes in replication order.
pub fn replicate<T, F>(dgp: &DgpSpec, reps: usize, master_seed: u64, f: F) -> Result<Vec<Result<T>>>
where
    T: Send,
    F: Fn(&PanelDataset) -> Result<T> + Sync,
{
    if reps == 0 {
        return Err(Error::InvalidParameter("at least one replication required".into()));
    }
    dgp.validate()?;
    Ok((0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let panel = gen_ar1_panel_with(dgp, &mut replication_rng(master_seed, r))?;
            f(&panel)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSummary {
    pub mean: f64,
    pub sd: f64,
    /// Share of successful replications whose 95% interval covers the truth.
    pub coverage: f64,
    pub estimates: Vec<f64>,
    pub errors: usize,
    pub first_error: Option<String>,
}

/// Distribution of the estimate of `parameter` across replications.
pub fn montecarlo(
    estimator: &dyn Estimator,
    spec: &RegressionSpec,
    dgp: &DgpSpec,
    parameter: &str,
    truth: f64,
    reps: usize,
    master_seed: u64,
) -> Result<MonteCarloSummary> {
    let outcomes = replicate(dgp, reps, master_seed, |panel| {
        let res = estimator.estimate(spec, panel)?;
        let c = res
            .coefficient(parameter)
            .ok_or_else(|| Error::UnknownPanelColumn(parameter.to_string()))?;
        Ok((c.estimate, c.se))
    })?;
    let mut estimates = Vec::new();
    let mut covered = 0usize;
    let mut errors = 0usize;
    let mut first_error = None;
    for o in outcomes {
        match o {
            Ok((b, se)) => {
                if (b - truth).abs() <= 1.96 * se {
                    covered += 1;
                }
                estimates.push(b);
            }
            Err(e) => {
                errors += 1;
                first_error.get_or_insert_with(|| e.to_string());
            }
        }
    }
    Ok(MonteCarloSummary {
        mean: stats::mean(&estimates),
        sd: stats::sample_sd(&estimates),
        coverage: if estimates.is_empty() {
            f64::NAN
        } else {
            covered as f64 / estimates.len() as f64
        },
        estimates,
        errors,
        first_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_recursion() {
        let spec = DgpSpec {
            n: 3,
            t: 5,
            rho: 0.5,
            fe_sd: 0.0,
            noise_sd: 0.0,
            burn_in: 0,
            init_sd: 1.0,
            ..Default::default()
        };
        let p = gen_ar1_panel(&spec).unwrap();
        for code in p.industries() {
            let y0 = p.get(&code, 1, "y").unwrap().unwrap();
            for t in 1..=5 {
                let y = p.get(&code, t, "y").unwrap().unwrap();
                assert_eq!(y, 0.5f64.powi(t - 1) * y0);
            }
        }
    }

    #[test]
    fn seeded_determinism() {
        let spec = DgpSpec {
            beta: vec![0.3],
            ..Default::default()
        };
        assert_eq!(gen_ar1_panel(&spec).unwrap(), gen_ar1_panel(&spec).unwrap());
        let other = DgpSpec { seed: 1, ..spec.clone() };
        assert_ne!(gen_ar1_panel(&spec).unwrap().columns, gen_ar1_panel(&other).unwrap().columns);
    }

    #[test]
    fn nonstationary_needs_flag() {
        let spec = DgpSpec {
            rho: 1.02,
            ..Default::default()
        };
        assert!(gen_ar1_panel(&spec).is_err());
        let ok = DgpSpec {
            allow_nonstationary: true,
            init_sd: 1.0,
            burn_in: 0,
            ..spec
        };
        assert!(gen_ar1_panel(&ok).is_ok());
    }

    #[test]
    fn dense_oracle_two_cycle() {
        let m = oracle_transition(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let x = oracle_pagerank_dense(&m, 0.85).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-15 && (x[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn complete_duplex() {
        let d = gen_random_duplex_inputs(&DuplexSpec {
            n: 4,
            periods: vec![1, 2],
            density: 1.0,
            seed: 3,
        })
        .unwrap();
        assert_eq!(d.market_edges.len(), 32);
        assert_eq!(d.innovation_edges.len(), 32);
        let net = d.network(DwVariant::ColumnSum).unwrap();
        assert_eq!(net.periods.len(), 2);
    }
}
