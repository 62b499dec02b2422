//! Panel estimators and their diagnostics.
//!
//! Three estimators share one [`Estimator`] trait and are selected by name
//! through an [`EstimatorRegistry`]: weighted two-way fixed effects
//! (`fe_weighted`), difference GMM (`ab_diff`) and system GMM (`bb_sys`).

mod fe;
mod gmm;
mod linalg;

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::panel::PanelDataset;

pub use fe::FeWeighted;
pub use gmm::{
    ar_test, dependent_instrument_count, sargan_test, AbDiff, BbSys, GmmFit, InstrumentLayout, SarganOutcome,
};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Regressor {
    /// The dependent variable `k` periods back.
    DependentLag(usize),
    /// Another panel column, `lag` periods back.
    Column { name: String, lag: usize },
}

impl Regressor {
    pub fn lagged(name: &str, lag: usize) -> Self {
        Regressor::Column {
            name: name.to_string(),
            lag,
        }
    }

    pub fn label(&self, dependent: &str) -> String {
        match self {
            Regressor::DependentLag(k) => format!("{dependent}_lag{k}"),
            Regressor::Column { name, lag: 0 } => name.clone(),
            Regressor::Column { name, lag } => format!("{name}_lag{lag}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FixedEffects {
    Industry,
    Time,
    #[default]
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SeKind {
    /// Sandwich for GMM, two-way clustered for FE.
    #[default]
    Robust,
    /// Homoskedastic one-step GMM variance.
    Classical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmOptions {
    /// Deepest lag of the dependent variable used as an instrument; `None` uses all.
    pub max_instrument_lag: Option<usize>,
    /// Shallowest instrument lag. Values below 2 make the instruments invalid
    /// under serially uncorrelated errors.
    pub min_instrument_lag: usize,
    pub collapsed: bool,
    pub steps: u8,
    pub windmeijer: bool,
    pub time_dummies: bool,
}

impl Default for GmmOptions {
    fn default() -> Self {
        GmmOptions {
            max_instrument_lag: None,
            min_instrument_lag: 2,
            collapsed: false,
            steps: 1,
            windmeijer: false,
            time_dummies: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSpec {
    pub dependent: String,
    pub regressors: Vec<Regressor>,
    pub estimator: String,
    pub weights: Option<String>,
    pub fixed_effects: FixedEffects,
    pub gmm: GmmOptions,
    pub se: SeKind,
}

impl RegressionSpec {
    pub fn new(dependent: &str, regressors: Vec<Regressor>, estimator: &str) -> Self {
        RegressionSpec {
            dependent: dependent.to_string(),
            regressors,
            estimator: estimator.to_string(),
            weights: None,
            fixed_effects: FixedEffects::Both,
            gmm: GmmOptions::default(),
            se: SeKind::Robust,
        }
    }

    pub fn validate(&self, needs_dependent_lag: bool) -> Result<()> {
        if self.regressors.is_empty() {
            return Err(Error::InvalidSpec("no regressors".into()));
        }
        for r in &self.regressors {
            match r {
                Regressor::Column { name, lag: 0 } if *name == self.dependent => {
                    return Err(Error::InvalidSpec("dependent variable used as a contemporaneous regressor".into()))
                }
                Regressor::DependentLag(0) => return Err(Error::InvalidSpec("dependent lag of order 0".into())),
                _ => {}
            }
        }
        let mut seen = self.regressors.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.regressors.len() {
            return Err(Error::InvalidSpec("duplicate regressor".into()));
        }
        if needs_dependent_lag && !self.regressors.iter().any(|r| matches!(r, Regressor::DependentLag(_))) {
            return Err(Error::InvalidSpec("GMM estimators need a lagged dependent variable".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub p_value: f64,
    pub code: &'static str,
}

#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub estimator: String,
    pub dependent: String,
    /// Regressors first, then nuisance parameters such as time dummies.
    pub coefficients: Vec<Coefficient>,
    pub n_regressors: usize,
    pub vcov: DMatrix<f64>,
    pub ar1_p: Option<f64>,
    pub ar2_p: Option<f64>,
    pub sargan_p: Option<f64>,
    pub r2_proxy: Option<f64>,
    pub n_obs: usize,
    pub n_groups: usize,
    pub n_instruments: usize,
    /// Rank of the weighting matrix when a pseudo-inverse was needed.
    pub weight_rank: Option<usize>,
    pub gmm: Option<GmmFit>,
}

impl EstimationResult {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    pub fn regressors(&self) -> &[Coefficient] {
        &self.coefficients[..self.n_regressors]
    }

    pub fn write_coefficients_csv<W: Write>(&self, out: W, fmt: impl Fn(f64) -> String) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["regressor", "coef", "se", "p", "code"])?;
        for c in &self.coefficients {
            w.write_record([c.name.clone(), fmt(c.estimate), fmt(c.se), fmt(c.p_value), c.code.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_diagnostics_csv<W: Write>(&self, out: W, fmt: impl Fn(f64) -> String) -> Result<()> {
        let opt = |v: Option<f64>| v.map(&fmt).unwrap_or_else(|| "NA".into());
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["ar1_p", "ar2_p", "sargan_p", "r2", "n_obs", "n_groups", "n_instruments"])?;
        w.write_record([
            opt(self.ar1_p),
            opt(self.ar2_p),
            opt(self.sargan_p),
            opt(self.r2_proxy),
            self.n_obs.to_string(),
            self.n_groups.to_string(),
            self.n_instruments.to_string(),
        ])?;
        w.flush()?;
        Ok(())
    }
}

/// `***` below 0.001, `**` below 0.01, `*` below 0.05, `.` below 0.1.
pub fn significance_code(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else if p < 0.1 {
        "."
    } else {
        ""
    }
}

pub fn two_sided_p(z: f64) -> f64 {
    if !z.is_finite() {
        return f64::NAN;
    }
    let n = Normal::standard();
    (2.0 * n.sf(z.abs())).clamp(0.0, 1.0)
}

/// Fills p-values and codes from estimates and standard errors.
pub fn significance_codes(result: &mut EstimationResult) {
    for c in &mut result.coefficients {
        c.p_value = two_sided_p(c.estimate / c.se);
        c.code = if c.p_value.is_finite() { significance_code(c.p_value) } else { "" };
    }
}

pub(crate) fn make_coefficients(names: &[String], beta: &[f64], vcov: &DMatrix<f64>) -> Vec<Coefficient> {
    names
        .iter()
        .enumerate()
        .map(|(k, n)| {
            let se = vcov[(k, k)].max(0.0).sqrt();
            let p = two_sided_p(beta[k] / se);
            Coefficient {
                name: n.clone(),
                estimate: beta[k],
                se,
                p_value: p,
                code: if p.is_finite() { significance_code(p) } else { "" },
            }
        })
        .collect()
}

pub trait Estimator: Send + Sync {
    fn name(&self) -> &'static str;
    fn estimate(&self, spec: &RegressionSpec, panel: &PanelDataset) -> Result<EstimationResult>;
}

pub struct EstimatorRegistry {
    entries: Vec<Box<dyn Estimator>>,
}

impl EstimatorRegistry {
    pub fn empty() -> Self {
        EstimatorRegistry { entries: Vec::new() }
    }

    pub fn with_defaults() -> Self {
        let mut r = EstimatorRegistry::empty();
        r.register(Box::new(FeWeighted));
        r.register(Box::new(AbDiff));
        r.register(Box::new(BbSys));
        r
    }

    pub fn register(&mut self, e: Box<dyn Estimator>) {
        self.entries.retain(|x| x.name() != e.name());
        self.entries.push(e);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Estimator> {
        self.entries
            .iter()
            .find(|e| e.name() == name)
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::UnknownStrategy {
                kind: "estimator",
                name: name.to_string(),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name()).collect()
    }

    /// Runs the estimator named in the spec.
    pub fn run(&self, spec: &RegressionSpec, panel: &PanelDataset) -> Result<EstimationResult> {
        self.get(&spec.estimator)?.estimate(spec, panel)
    }
}

/// Panel reshaped to per-industry series on the period grid.
pub(crate) struct Prepared {
    pub periods: Vec<i32>,
    /// `[group][t]`
    pub y: Vec<Vec<Option<f64>>>,
    /// `[k][group][t]`, already shifted by the regressor's lag.
    pub x: Vec<Vec<Vec<Option<f64>>>>,
    pub weights: Option<Vec<Vec<Option<f64>>>>,
    pub names: Vec<String>,
}

impl Prepared {
    pub fn from_panel(spec: &RegressionSpec, panel: &PanelDataset) -> Result<Self> {
        let periods = panel.periods.clone();
        if periods.len() > 1 {
            let step = periods[1] - periods[0];
            if step <= 0 || periods.windows(2).any(|w| w[1] - w[0] != step) {
                return Err(Error::GridMismatch("period grid is not evenly spaced".into()));
            }
        }
        let pos: BTreeMap<i32, usize> = periods.iter().enumerate().map(|(k, p)| (*p, k)).collect();
        let mut groups: BTreeMap<&str, usize> = BTreeMap::new();
        for (ind, _) in &panel.keys {
            let n = groups.len();
            groups.entry(ind.as_str()).or_insert(n);
        }
        let g = groups.len();
        let t = periods.len();
        let grid = |name: &str| -> Result<Vec<Vec<Option<f64>>>> {
            let col = panel.column(name)?;
            let mut out = vec![vec![None; t]; g];
            for (r, (ind, per)) in panel.keys.iter().enumerate() {
                let p = *pos
                    .get(per)
                    .ok_or_else(|| Error::GridMismatch(format!("period {per} is not on the grid")))?;
                out[groups[ind.as_str()]][p] = col[r].filter(|v| v.is_finite());
            }
            Ok(out)
        };
        let y = grid(&spec.dependent)?;
        let shift = |series: &Vec<Vec<Option<f64>>>, lag: usize| -> Vec<Vec<Option<f64>>> {
            series
                .iter()
                .map(|s| (0..t).map(|k| if k >= lag { s[k - lag] } else { None }).collect())
                .collect()
        };
        let mut x = Vec::new();
        let mut names = Vec::new();
        for r in &spec.regressors {
            names.push(r.label(&spec.dependent));
            x.push(match r {
                Regressor::DependentLag(k) => shift(&y, *k),
                Regressor::Column { name, lag } => shift(&grid(name)?, *lag),
            });
        }
        let weights = match &spec.weights {
            Some(w) => Some(grid(w)?),
            None => None,
        };
        Ok(Prepared {
            periods,
            y,
            x,
            weights,
            names,
        })
    }

    pub fn n_groups(&self) -> usize {
        self.y.len()
    }

    pub fn n_periods(&self) -> usize {
        self.periods.len()
    }

    /// y and every regressor observed at (g, t).
    pub fn complete(&self, g: usize, t: usize) -> bool {
        self.y[g][t].is_some() && self.x.iter().all(|x| x[g][t].is_some())
    }

    pub fn xrow(&self, g: usize, t: usize) -> Vec<f64> {
        self.x.iter().map(|x| x[g][t].unwrap()).collect()
    }
}
