//! Difference and system GMM for dynamic panels, with serial-correlation and
//! overidentification tests.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::linalg::{psd_pinv, quad, spd_inverse};
use super::{make_coefficients, two_sided_p, EstimationResult, Estimator, GmmOptions, Prepared, Regressor, RegressionSpec, SeKind};
use crate::error::{Error, Result};
use crate::panel::PanelDataset;

/// First-differenced equations instrumented by lagged levels.
#[derive(Debug, Clone, Copy, Default)]
pub struct AbDiff;

/// Differenced and level equations stacked; levels are instrumented by
/// lagged differences.
#[derive(Debug, Clone, Copy, Default)]
pub struct BbSys;

/// Number of instrument columns by source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct InstrumentLayout {
    /// Lagged levels of the dependent variable (difference equations).
    pub dependent: usize,
    /// Lagged differences of the dependent variable (level equations).
    pub level: usize,
    pub exogenous: usize,
    pub time: usize,
}

impl InstrumentLayout {
    pub fn total(&self) -> usize {
        self.dependent + self.level + self.exogenous + self.time
    }
}

/// Grid positions (0-based) of the first and last equation period.
const FIRST_EQ: usize = 2;

/// `(equation period or None when collapsed, lag depth)` for each
/// dependent-variable instrument column.
fn dependent_columns(n_periods: usize, opts: &GmmOptions) -> Vec<(Option<usize>, usize)> {
    let lo = opts.min_instrument_lag.max(1);
    let cap = opts.max_instrument_lag.unwrap_or(usize::MAX);
    let mut cols = Vec::new();
    if n_periods <= FIRST_EQ {
        return cols;
    }
    if opts.collapsed {
        let deepest = cap.min(n_periods - 1);
        for d in lo..=deepest {
            cols.push((None, d));
        }
    } else {
        for t in FIRST_EQ..n_periods {
            for d in lo..=cap.min(t) {
                cols.push((Some(t), d));
            }
        }
    }
    cols
}

/// Dependent-variable instrument count in the difference equations for a
/// panel with `n_periods` periods.
pub fn dependent_instrument_count(n_periods: usize, opts: &GmmOptions) -> usize {
    dependent_columns(n_periods, opts).len()
}

#[derive(Debug, Clone)]
pub(crate) struct GroupBlock {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub z: DMatrix<f64>,
    /// Equation period for difference rows, `None` for level rows.
    pub diff_t: Vec<Option<usize>>,
}

impl GroupBlock {
    fn h(&self) -> DMatrix<f64> {
        let n = self.diff_t.len();
        DMatrix::from_fn(n, n, |r, s| match (self.diff_t[r], self.diff_t[s]) {
            (Some(a), Some(b)) if a == b => 2.0,
            (Some(a), Some(b)) if a.abs_diff(b) == 1 => -1.0,
            (None, None) if r == s => 1.0,
            _ => 0.0,
        })
    }
}

/// Everything needed to compute post-estimation tests.
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub(crate) groups: Vec<GroupBlock>,
    pub beta: DVector<f64>,
    pub vcov: DMatrix<f64>,
    pub(crate) w: DMatrix<f64>,
    pub(crate) a_inv: DMatrix<f64>,
    pub(crate) resid: Vec<DVector<f64>>,
    /// Overidentification statistic and its degrees of freedom.
    pub(crate) hansen: Option<(f64, usize)>,
    pub layout: InstrumentLayout,
    pub n_instruments: usize,
    pub n_params: usize,
    pub weight_rank: usize,
}

fn build(prep: &Prepared, spec: &RegressionSpec, system: bool) -> Result<(Vec<GroupBlock>, Vec<String>, InstrumentLayout)> {
    let opts = &spec.gmm;
    let tn = prep.n_periods();
    if tn < 3 {
        return Err(Error::InsufficientPeriods(format!("{tn} periods, need at least 3")));
    }
    let k0 = prep.x.len();
    let exog: Vec<usize> = spec
        .regressors
        .iter()
        .enumerate()
        .filter(|(_, r)| matches!(r, Regressor::Column { .. }))
        .map(|(k, _)| k)
        .collect();
    let dep_cols = dependent_columns(tn, opts);
    let level_cols: Vec<Option<usize>> = if !system {
        Vec::new()
    } else if opts.collapsed {
        vec![None]
    } else {
        (FIRST_EQ..tn).map(Some).collect()
    };
    // candidate time-dummy periods
    let dummy_periods: Vec<usize> = if !opts.time_dummies {
        Vec::new()
    } else if system {
        (1..tn).collect()
    } else {
        (FIRST_EQ..tn).collect()
    };
    let dummy = |t: usize, s: usize, level: bool| -> f64 {
        if level || !system {
            (t == s) as u8 as f64
        } else {
            (t == s) as u8 as f64 - (t - 1 == s) as u8 as f64
        }
    };

    // rows: (group, period, is_level)
    let mut rows_by_group: Vec<Vec<(usize, bool)>> = Vec::new();
    for g in 0..prep.n_groups() {
        let mut rows = Vec::new();
        for t in FIRST_EQ..tn {
            if prep.complete(g, t) && prep.complete(g, t - 1) {
                rows.push((t, false));
            }
        }
        if system {
            for t in FIRST_EQ..tn {
                if prep.complete(g, t) {
                    rows.push((t, true));
                }
            }
        }
        rows_by_group.push(rows);
    }
    if !rows_by_group.iter().flatten().any(|(_, lvl)| !lvl) {
        return Err(Error::InsufficientPeriods("no group has a usable differenced equation".into()));
    }
    let used_dummies: Vec<usize> = dummy_periods
        .into_iter()
        .filter(|&s| {
            rows_by_group
                .iter()
                .flatten()
                .any(|&(t, lvl)| dummy(t, s, lvl) != 0.0)
        })
        .collect();

    let kx = k0 + used_dummies.len();
    let layout = InstrumentLayout {
        dependent: dep_cols.len(),
        level: level_cols.len(),
        exogenous: exog.len(),
        time: used_dummies.len(),
    };
    let nz = layout.total();
    let mut names = prep.names.clone();
    names.extend(used_dummies.iter().map(|&s| format!("time_{}", prep.periods[s])));

    let mut blocks = Vec::new();
    for (g, rows) in rows_by_group.iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        let n = rows.len();
        let y_at = |t: usize| prep.y[g][t];
        let mut x = DMatrix::<f64>::zeros(n, kx);
        let mut y = DVector::<f64>::zeros(n);
        let mut z = DMatrix::<f64>::zeros(n, nz);
        let mut diff_t = Vec::with_capacity(n);
        for (r, &(t, lvl)) in rows.iter().enumerate() {
            let xt = prep.xrow(g, t);
            if lvl {
                y[r] = y_at(t).unwrap();
                for k in 0..k0 {
                    x[(r, k)] = xt[k];
                }
                diff_t.push(None);
            } else {
                let xp = prep.xrow(g, t - 1);
                y[r] = y_at(t).unwrap() - y_at(t - 1).unwrap();
                for k in 0..k0 {
                    x[(r, k)] = xt[k] - xp[k];
                }
                diff_t.push(Some(t));
            }
            for (c, &s) in used_dummies.iter().enumerate() {
                x[(r, k0 + c)] = dummy(t, s, lvl);
            }
            let mut col = 0;
            for &(tc, d) in &dep_cols {
                if !lvl && tc.is_none_or(|tc| tc == t) && t >= d {
                    if let Some(v) = y_at(t - d) {
                        z[(r, col)] = v;
                    }
                }
                col += 1;
            }
            for &tc in &level_cols {
                if lvl && tc.is_none_or(|tc| tc == t) {
                    if let (Some(a), Some(b)) = (y_at(t - 1), y_at(t - 2)) {
                        z[(r, col)] = a - b;
                    }
                }
                col += 1;
            }
            for &k in &exog {
                z[(r, col)] = x[(r, k)];
                col += 1;
            }
            for c in 0..used_dummies.len() {
                z[(r, col)] = x[(r, k0 + c)];
                col += 1;
            }
        }
        blocks.push(GroupBlock { x, y, z, diff_t });
    }
    Ok((blocks, names, layout))
}

struct Moments {
    szx: DMatrix<f64>,
    szy: DVector<f64>,
}

fn moments(groups: &[GroupBlock]) -> Moments {
    let l = groups[0].z.ncols();
    let k = groups[0].x.ncols();
    let mut szx = DMatrix::zeros(l, k);
    let mut szy = DVector::zeros(l);
    for g in groups {
        szx += g.z.transpose() * &g.x;
        szy += g.z.transpose() * &g.y;
    }
    Moments { szx, szy }
}

fn residuals(groups: &[GroupBlock], beta: &DVector<f64>) -> Vec<DVector<f64>> {
    groups.iter().map(|g| &g.y - &g.x * beta).collect()
}

fn omega(groups: &[GroupBlock], resid: &[DVector<f64>]) -> DMatrix<f64> {
    let l = groups[0].z.ncols();
    let mut om = DMatrix::zeros(l, l);
    for (g, u) in groups.iter().zip(resid) {
        let zu = g.z.transpose() * u;
        om += &zu * zu.transpose();
    }
    om
}

/// `(beta, A^-1)` for weighting matrix `w`.
fn solve(m: &Moments, w: &DMatrix<f64>, names: &[String]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let xzw = m.szx.transpose() * w;
    let a = &xzw * &m.szx;
    let a_inv = spd_inverse(&a, names)?;
    let beta = &a_inv * (xzw * &m.szy);
    Ok((beta, a_inv))
}

fn fit(groups: Vec<GroupBlock>, names: &[String], layout: InstrumentLayout, opts: &GmmOptions, se: SeKind) -> Result<GmmFit> {
    let m = moments(&groups);
    let l = m.szx.nrows();
    let k = m.szx.ncols();
    let mut szhz = DMatrix::zeros(l, l);
    for g in &groups {
        szhz += g.z.transpose() * g.h() * &g.z;
    }
    let (w1, rank1) = psd_pinv(&szhz);
    if rank1 == 0 {
        return Err(Error::SingularWeightingMatrix);
    }
    let (beta1, a1_inv) = solve(&m, &w1, names)?;
    let u1 = residuals(&groups, &beta1);
    let om1 = omega(&groups, &u1);
    let sandwich = |a_inv: &DMatrix<f64>, w: &DMatrix<f64>| {
        let b = a_inv * m.szx.transpose() * w;
        &b * &om1 * b.transpose()
    };
    let v1r = sandwich(&a1_inv, &w1);

    let (w2, rank2) = psd_pinv(&om1);
    let two_step = if rank2 > 0 { solve(&m, &w2, names).ok() } else { None };
    let hansen = two_step.as_ref().map(|(b2, _)| {
        let u2 = residuals(&groups, b2);
        let mut g = DVector::zeros(l);
        for (grp, u) in groups.iter().zip(&u2) {
            g += grp.z.transpose() * u;
        }
        (quad(&g, &w2), rank2.min(l).saturating_sub(k))
    });

    let (beta, vcov, w, a_inv, weight_rank) = if opts.steps >= 2 {
        let (b2, a2_inv) = two_step.ok_or(Error::SingularWeightingMatrix)?;
        let mut v = a2_inv.clone();
        if opts.windmeijer {
            let u2 = residuals(&groups, &b2);
            let mut zu2 = DVector::zeros(l);
            for (g, u) in groups.iter().zip(&u2) {
                zu2 += g.z.transpose() * u;
            }
            let lead = &a2_inv * m.szx.transpose() * &w2;
            let tail = &w2 * zu2;
            let mut d = DMatrix::zeros(k, k);
            for c in 0..k {
                let mut dk = DMatrix::zeros(l, l);
                for (g, u) in groups.iter().zip(&u1) {
                    let zx = g.z.transpose() * g.x.column(c);
                    let zu = g.z.transpose() * u;
                    dk += &zx * zu.transpose() + &zu * zx.transpose();
                }
                d.set_column(c, &(&lead * dk * &tail));
            }
            v = &v + &d * &v + &v * d.transpose() + &d * &v1r * d.transpose();
        }
        (b2, v, w2, a2_inv, rank2)
    } else {
        let v = match se {
            SeKind::Robust => v1r,
            SeKind::Classical => {
                let (mut ss, mut nd) = (0.0, 0usize);
                for (g, u) in groups.iter().zip(&u1) {
                    for (r, t) in g.diff_t.iter().enumerate() {
                        if t.is_some() {
                            ss += u[r] * u[r];
                            nd += 1;
                        }
                    }
                }
                let s2 = ss / (2.0 * (nd as f64 - k as f64));
                &a1_inv * s2
            }
        };
        (beta1, v, w1, a1_inv, rank1)
    };
    let resid = residuals(&groups, &beta);
    Ok(GmmFit {
        groups,
        beta,
        vcov,
        w,
        a_inv,
        resid,
        hansen,
        layout,
        n_instruments: l,
        n_params: k,
        weight_rank,
    })
}

fn estimate(spec: &RegressionSpec, panel: &PanelDataset, system: bool, name: &str) -> Result<EstimationResult> {
    spec.validate(true)?;
    if spec.weights.is_some() {
        return Err(Error::InvalidSpec("GMM estimators take no regression weights".into()));
    }
    if !(1..=2).contains(&spec.gmm.steps) {
        return Err(Error::InvalidSpec(format!("steps must be 1 or 2, got {}", spec.gmm.steps)));
    }
    let prep = Prepared::from_panel(spec, panel)?;
    let (groups, names, layout) = build(&prep, spec, system)?;
    let n_obs = groups
        .iter()
        .flat_map(|g| g.diff_t.iter())
        .filter(|t| t.is_some() != system)
        .count();
    let n_groups = groups.len();
    let fit = fit(groups, &names, layout, &spec.gmm, spec.se)?;
    let mut result = EstimationResult {
        estimator: name.to_string(),
        dependent: spec.dependent.clone(),
        coefficients: make_coefficients(&names, fit.beta.as_slice(), &fit.vcov),
        n_regressors: prep.x.len(),
        vcov: fit.vcov.clone(),
        ar1_p: None,
        ar2_p: None,
        sargan_p: None,
        r2_proxy: None,
        n_obs,
        n_groups,
        n_instruments: fit.n_instruments,
        weight_rank: (fit.weight_rank < fit.n_instruments).then_some(fit.weight_rank),
        gmm: Some(fit),
    };
    result.ar1_p = ar_test(&result, 1).ok().map(|(_, p)| p);
    result.ar2_p = ar_test(&result, 2).ok().map(|(_, p)| p);
    result.sargan_p = sargan_test(&result).ok().map(|s| s.p_value);
    result.r2_proxy = Some(r2_proxy(result.gmm.as_ref().unwrap()));
    Ok(result)
}

/// Squared correlation between observed and fitted values of the estimated
/// equations (level rows for the system estimator).
fn r2_proxy(fit: &GmmFit) -> f64 {
    let system = fit.groups.iter().any(|g| g.diff_t.iter().any(Option::is_none));
    let (mut obs, mut fitted) = (Vec::new(), Vec::new());
    for (g, u) in fit.groups.iter().zip(&fit.resid) {
        for (r, t) in g.diff_t.iter().enumerate() {
            if t.is_none() == system {
                obs.push(g.y[r]);
                fitted.push(g.y[r] - u[r]);
            }
        }
    }
    let c = crate::stats::pearson(&obs, &fitted);
    if c.is_finite() {
        c * c
    } else {
        0.0
    }
}

impl Estimator for AbDiff {
    fn name(&self) -> &'static str {
        "ab_diff"
    }
    fn estimate(&self, spec: &RegressionSpec, panel: &PanelDataset) -> Result<EstimationResult> {
        estimate(spec, panel, false, self.name())
    }
}

impl Estimator for BbSys {
    fn name(&self) -> &'static str {
        "bb_sys"
    }
    fn estimate(&self, spec: &RegressionSpec, panel: &PanelDataset) -> Result<EstimationResult> {
        estimate(spec, panel, true, self.name())
    }
}

/// Arellano-Bond test for order-`m` autocorrelation in the differenced
/// residuals. Returns `(z, two-sided p)`.
pub fn ar_test(result: &EstimationResult, m: usize) -> Result<(f64, f64)> {
    let fit = result
        .gmm
        .as_ref()
        .ok_or_else(|| Error::InvalidSpec("serial-correlation test needs a GMM result".into()))?;
    if m == 0 {
        return Err(Error::TooFewPeriodsForOrder(m));
    }
    let k = fit.n_params;
    let l = fit.n_instruments;
    let mut pairs = 0usize;
    let mut num = 0.0;
    let mut s2 = 0.0;
    let mut wx = DVector::<f64>::zeros(k);
    let mut zus = DVector::<f64>::zeros(l);
    for (g, u) in fit.groups.iter().zip(&fit.resid) {
        let n = u.len();
        let mut w = DVector::<f64>::zeros(n);
        for (r, t) in g.diff_t.iter().enumerate() {
            let Some(t) = t else { continue };
            if *t < m {
                continue;
            }
            if let Some(q) = g.diff_t.iter().position(|s| *s == Some(t - m)) {
                w[r] = u[q];
                pairs += 1;
            }
        }
        let s = w.dot(u);
        num += s;
        s2 += s * s;
        wx += g.x.transpose() * &w;
        zus += (g.z.transpose() * u) * s;
    }
    if pairs == 0 {
        return Err(Error::TooFewPeriodsForOrder(m));
    }
    let xzw = (&fit.a_inv * fit.sandwich_lead()) * zus;
    let var = s2 - 2.0 * wx.dot(&xzw) + quad(&wx, &fit.vcov);
    if !(var > 0.0) {
        return Err(Error::SingularSystem);
    }
    let z = num / var.sqrt();
    Ok((z, two_sided_p(z)))
}

impl GmmFit {
    /// `X'Z W`
    fn sandwich_lead(&self) -> DMatrix<f64> {
        let l = self.n_instruments;
        let k = self.n_params;
        let mut szx = DMatrix::zeros(l, k);
        for g in &self.groups {
            szx += g.z.transpose() * &g.x;
        }
        szx.transpose() * &self.w
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SarganOutcome {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Overidentification test evaluated at the two-step efficient estimate.
pub fn sargan_test(result: &EstimationResult) -> Result<SarganOutcome> {
    let fit = result
        .gmm
        .as_ref()
        .ok_or_else(|| Error::InvalidSpec("overidentification test needs a GMM result".into()))?;
    if fit.n_instruments <= fit.n_params {
        return Err(Error::JustIdentified {
            instruments: fit.n_instruments,
            params: fit.n_params,
        });
    }
    let (stat, df) = fit.hansen.ok_or(Error::SingularWeightingMatrix)?;
    if df == 0 {
        return Err(Error::JustIdentified {
            instruments: fit.n_instruments,
            params: fit.n_params,
        });
    }
    let chi = ChiSquared::new(df as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(SarganOutcome {
        statistic: stat,
        df,
        p_value: chi.sf(stat.max(0.0)).clamp(0.0, 1.0),
    })
}
