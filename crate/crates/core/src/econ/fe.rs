use nalgebra::{DMatrix, DVector};

use super::linalg::spd_inverse;
use super::{make_coefficients, EstimationResult, Estimator, FixedEffects, Prepared, RegressionSpec};
use crate::error::{Error, Result};
use crate::stats;

const DEMEAN_TOL: f64 = 1e-10;
const DEMEAN_MAX_ITER: usize = 100_000;

/// Weighted least squares after absorbing industry and/or time effects, with
/// standard errors clustered by industry and by period.
#[derive(Debug, Clone, Copy, Default)]
pub struct FeWeighted;

struct Sample {
    group: Vec<usize>,
    time: Vec<usize>,
    w: Vec<f64>,
    /// Column 0 is the dependent variable.
    data: DMatrix<f64>,
}

fn collect(prep: &Prepared) -> Result<Sample> {
    let (mut group, mut time, mut w, mut rows) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for g in 0..prep.n_groups() {
        for t in 0..prep.n_periods() {
            if !prep.complete(g, t) {
                continue;
            }
            let weight = match &prep.weights {
                Some(ws) => match ws[g][t] {
                    Some(v) if v > 0.0 => v,
                    Some(v) => return Err(Error::NonPositiveWeight(v)),
                    None => continue,
                },
                None => 1.0,
            };
            group.push(g);
            time.push(t);
            w.push(weight);
            let mut r = vec![prep.y[g][t].unwrap()];
            r.extend(prep.xrow(g, t));
            rows.push(r);
        }
    }
    let k = prep.x.len() + 1;
    let data = DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]);
    Ok(Sample { group, time, w, data })
}

/// Subtracts weighted means within the levels of `ids`; returns the largest
/// absolute adjustment.
fn sweep(data: &mut DMatrix<f64>, ids: &[usize], w: &[f64], levels: usize) -> f64 {
    let k = data.ncols();
    let mut sums = DMatrix::<f64>::zeros(levels, k);
    let mut wsum = vec![0.0; levels];
    for (r, &g) in ids.iter().enumerate() {
        wsum[g] += w[r];
        for c in 0..k {
            sums[(g, c)] += w[r] * data[(r, c)];
        }
    }
    let mut biggest = 0.0f64;
    for (r, &g) in ids.iter().enumerate() {
        for c in 0..k {
            let m = sums[(g, c)] / wsum[g];
            data[(r, c)] -= m;
            biggest = biggest.max(m.abs());
        }
    }
    biggest
}

/// Weighted within transformation by alternating projections.
fn demean(s: &Sample, fe: FixedEffects, n_groups: usize, n_periods: usize) -> Result<DMatrix<f64>> {
    let mut d = s.data.clone();
    let scale = 1.0 + d.amax();
    match fe {
        FixedEffects::Industry => {
            sweep(&mut d, &s.group, &s.w, n_groups);
        }
        FixedEffects::Time => {
            sweep(&mut d, &s.time, &s.w, n_periods);
        }
        FixedEffects::Both => {
            let mut last = f64::INFINITY;
            for _ in 0..DEMEAN_MAX_ITER {
                let a = sweep(&mut d, &s.group, &s.w, n_groups);
                let b = sweep(&mut d, &s.time, &s.w, n_periods);
                last = a.max(b);
                if last < DEMEAN_TOL * scale {
                    return Ok(d);
                }
            }
            return Err(Error::NonConvergence {
                iterations: DEMEAN_MAX_ITER,
                residual: last,
            });
        }
    }
    Ok(d)
}

fn cluster_meat(scores: &DMatrix<f64>, ids: &[usize], levels: usize) -> (DMatrix<f64>, usize) {
    let k = scores.ncols();
    let mut sums = DMatrix::<f64>::zeros(levels, k);
    let mut used = vec![false; levels];
    for (r, &g) in ids.iter().enumerate() {
        used[g] = true;
        for c in 0..k {
            sums[(g, c)] += scores[(r, c)];
        }
    }
    let n_used = used.iter().filter(|u| **u).count();
    (sums.transpose() * sums, n_used)
}

impl Estimator for FeWeighted {
    fn name(&self) -> &'static str {
        "fe_weighted"
    }

    fn estimate(&self, spec: &RegressionSpec, panel: &crate::panel::PanelDataset) -> Result<EstimationResult> {
        spec.validate(false)?;
        let prep = Prepared::from_panel(spec, panel)?;
        let s = collect(&prep)?;
        let n = s.w.len();
        let k = prep.x.len();
        if n <= k {
            return Err(Error::RankDeficient(format!("{n} observations for {k} regressors")));
        }
        let d = demean(&s, spec.fixed_effects, prep.n_groups(), prep.n_periods())?;
        let y = d.column(0).into_owned();
        let x = d.columns(1, k).into_owned();
        let wx = DMatrix::from_fn(n, k, |r, c| s.w[r] * x[(r, c)]);
        let a = x.transpose() * &wx;
        let a_inv = spd_inverse(&a, &prep.names)?;
        let beta: DVector<f64> = &a_inv * (wx.transpose() * &y);
        let resid = &y - &x * &beta;

        let scores = DMatrix::from_fn(n, k, |r, c| wx[(r, c)] * resid[r]);
        let (meat_g, g_n) = cluster_meat(&scores, &s.group, prep.n_groups());
        let (meat_t, t_n) = cluster_meat(&scores, &s.time, prep.n_periods());
        let hc0 = scores.transpose() * &scores;
        let adj = |m: DMatrix<f64>, g: usize| m * (g as f64 / (g as f64 - 1.0));
        let meat = match (g_n >= 2, t_n >= 2) {
            (true, true) => adj(meat_g, g_n) + adj(meat_t, t_n) - hc0,
            (true, false) => adj(meat_g, g_n),
            (false, true) => adj(meat_t, t_n),
            (false, false) => hc0,
        };
        let mut vcov = &a_inv * meat * &a_inv;
        for i in 0..k {
            if vcov[(i, i)] < 0.0 {
                vcov[(i, i)] = 0.0;
            }
        }

        let observed: Vec<f64> = s.data.column(0).iter().copied().collect();
        let fitted: Vec<f64> = observed.iter().zip(resid.iter()).map(|(o, u)| o - u).collect();
        let r = stats::pearson(&observed, &fitted);
        let groups_used = {
            let mut g = s.group.clone();
            g.dedup();
            g.len()
        };
        Ok(EstimationResult {
            estimator: self.name().to_string(),
            dependent: spec.dependent.clone(),
            coefficients: make_coefficients(&prep.names, beta.as_slice(), &vcov),
            n_regressors: k,
            vcov,
            ar1_p: None,
            ar2_p: None,
            sargan_p: None,
            r2_proxy: Some(if r.is_finite() { r * r } else { 0.0 }),
            n_obs: n,
            n_groups: groups_used,
            n_instruments: 0,
            weight_rank: None,
            gmm: None,
        })
    }
}
