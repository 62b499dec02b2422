//! Regression tables: cell layouts, assembly from results, text and CSV output.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::econ::{significance_code, Coefficient, EstimationResult, GmmOptions, Regressor, RegressionSpec};
use crate::error::{Error, Result};
use crate::ingest::aux_columns;

/// Formats `v` with `sig` significant digits, switching to exponent notation
/// for very small or very large magnitudes. Trailing zeros are dropped.
pub fn fmt_sig(v: f64, sig: usize) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sig = sig.max(1);
    let sci = format!("{:.*e}", sig - 1, v);
    let (mant, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    let trim = |s: String| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if (-5..sig as i32).contains(&exp) {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        trim(format!("{:.*}", decimals, v))
    } else {
        format!("{}e{}", trim(mant.to_string()), exp)
    }
}

/// Ten significant digits, used for every numeric artifact.
pub fn fmt10(v: f64) -> String {
    fmt_sig(v, 10)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableCell {
    pub id: String,
    pub group: String,
    pub subgroup: String,
    pub controls: bool,
    pub spec: RegressionSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableLayout {
    pub name: String,
    pub cells: Vec<TableCell>,
    /// Regressors reported only as a "Controls" flag.
    pub control_names: Vec<String>,
}

/// Controls of the demand-pull / technology-push regressions.
pub const CONTROLS: [&str; 8] = [
    aux_columns::EMPLOYMENT,
    aux_columns::WAGE,
    aux_columns::CAPITAL_INTENSITY,
    aux_columns::INVESTMENT_PC,
    aux_columns::PROD_LABOR_SHARE,
    aux_columns::REL_PROD_WAGE,
    aux_columns::ENERGY_PC,
    aux_columns::MATERIALS_PC,
];

/// Twelve cells: between-layer, within-layer and combined regressions of
/// market size and innovation, each without and with controls. Every
/// regressor enters with a one-period lag.
pub fn table3_layout(estimator: &str, gmm: &GmmOptions, controls: &[&str]) -> TableLayout {
    let l1 = |n: &str| Regressor::lagged(n, 1);
    let blocks: [(&str, &str, &str, Vec<&str>); 6] = [
        ("Type 1", "tau->mu", "A_mu", vec!["A_tau", "PR_tau_dw", "Spill_tau_up", "Spill_tau_dw"]),
        (
            "Type 1",
            "mu->tau",
            "A_tau",
            vec!["A_mu", "PR_mu_up", "PR_mu_dw", "Spill_mu_up", "Spill_mu_dw"],
        ),
        ("Type 2", "Market", "A_mu", vec!["PR_mu_up", "PR_mu_dw", "Spill_mu_up", "Spill_mu_dw"]),
        ("Type 2", "Innovation", "A_tau", vec!["PR_tau_dw", "Spill_tau_up", "Spill_tau_dw"]),
        (
            "Both",
            "",
            "A_mu",
            vec!["A_tau", "PR_mu_up", "PR_mu_dw", "PR_tau_dw", "Spill_mu_up", "Spill_mu_dw", "Spill_tau_up", "Spill_tau_dw"],
        ),
        (
            "Both",
            "",
            "A_tau",
            vec!["A_mu", "PR_mu_up", "PR_mu_dw", "PR_tau_dw", "Spill_mu_up", "Spill_mu_dw", "Spill_tau_up", "Spill_tau_dw"],
        ),
    ];
    let mut cells = Vec::new();
    for (group, sub, dep, others) in blocks {
        for with_controls in [false, true] {
            let mut regs = vec![Regressor::DependentLag(1)];
            regs.extend(others.iter().map(|n| l1(n)));
            if with_controls {
                regs.extend(controls.iter().map(|n| l1(n)));
            }
            let mut spec = RegressionSpec::new(dep, regs, estimator);
            spec.gmm = gmm.clone();
            cells.push(TableCell {
                id: format!("({})", cells.len() + 1),
                group: group.to_string(),
                subgroup: sub.to_string(),
                controls: with_controls,
                spec,
            });
        }
    }
    TableLayout {
        name: "table3".into(),
        cells,
        control_names: controls.iter().map(|c| Regressor::lagged(c, 1).label("")).collect(),
    }
}

pub fn single_layout(spec: RegressionSpec) -> TableLayout {
    TableLayout {
        name: "single".into(),
        cells: vec![TableCell {
            id: "(1)".into(),
            group: String::new(),
            subgroup: String::new(),
            controls: false,
            spec,
        }],
        control_names: Vec::new(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// Header lines; each has one entry per cell.
    pub header: Vec<(String, Vec<String>)>,
    pub rows: Vec<(String, Vec<String>)>,
}

/// Lays out coefficient/standard-error rows and a diagnostics footer.
pub fn report(results: &BTreeMap<String, EstimationResult>, layout: &TableLayout, fmt: impl Fn(f64) -> String) -> Result<Table> {
    let mut cols = Vec::new();
    for cell in &layout.cells {
        cols.push(results.get(&cell.id).ok_or_else(|| Error::MissingCell(cell.id.clone()))?);
    }
    let mut names: Vec<String> = Vec::new();
    for r in &cols {
        for c in r.regressors() {
            if !layout.control_names.contains(&c.name) && !names.contains(&c.name) {
                names.push(c.name.clone());
            }
        }
    }
    let header: Vec<(String, Vec<String>)> = vec![
        ("group".to_string(), layout.cells.iter().map(|c| c.group.clone()).collect()),
        ("subgroup".to_string(), layout.cells.iter().map(|c| c.subgroup.clone()).collect()),
        ("dependent".to_string(), cols.iter().map(|r| r.dependent.clone()).collect()),
        ("column".to_string(), layout.cells.iter().map(|c| c.id.clone()).collect()),
    ];
    let header = header.into_iter().filter(|(_, v)| v.iter().any(|x| !x.is_empty())).collect();
    let mut rows = Vec::new();
    for n in &names {
        let mut est = Vec::new();
        let mut se = Vec::new();
        for r in &cols {
            match r.regressors().iter().find(|c| &c.name == n) {
                Some(c) => {
                    est.push(format!("{}{}", fmt(c.estimate), c.code));
                    se.push(format!("({})", fmt(c.se)));
                }
                None => {
                    est.push(String::new());
                    se.push(String::new());
                }
            }
        }
        rows.push((n.clone(), est));
        rows.push((String::new(), se));
    }
    let opt = |v: Option<f64>| v.map(&fmt).unwrap_or_default();
    rows.push(("AR(1)".into(), cols.iter().map(|r| opt(r.ar1_p)).collect()));
    rows.push(("AR(2)".into(), cols.iter().map(|r| opt(r.ar2_p)).collect()));
    rows.push(("Sargan".into(), cols.iter().map(|r| opt(r.sargan_p)).collect()));
    rows.push((
        "Controls".into(),
        layout.cells.iter().map(|c| if c.controls { "Y".into() } else { String::new() }).collect(),
    ));
    rows.push(("R2".into(), cols.iter().map(|r| opt(r.r2_proxy)).collect()));
    rows.push(("N".into(), cols.iter().map(|r| r.n_obs.to_string()).collect()));
    rows.push(("Groups".into(), cols.iter().map(|r| r.n_groups.to_string()).collect()));
    rows.push(("Instruments".into(), cols.iter().map(|r| r.n_instruments.to_string()).collect()));
    Ok(Table { header, rows })
}

impl Table {
    pub fn to_text(&self) -> String {
        let all: Vec<&(String, Vec<String>)> = self.header.iter().chain(&self.rows).collect();
        let ncol = all.first().map(|r| r.1.len()).unwrap_or(0);
        let label_w = all.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let widths: Vec<usize> = (0..ncol)
            .map(|c| all.iter().map(|r| r.1[c].len()).max().unwrap_or(0))
            .collect();
        let line = |r: &(String, Vec<String>)| -> String {
            let mut s = format!("{:<label_w$}", r.0);
            for (c, v) in r.1.iter().enumerate() {
                s.push_str(&format!("  {:>w$}", v, w = widths[c]));
            }
            s.trim_end().to_string() + "\n"
        };
        let rule = "-".repeat(label_w + widths.iter().map(|w| w + 2).sum::<usize>()) + "\n";
        let mut out = String::new();
        for h in &self.header {
            out.push_str(&line(h));
        }
        out.push_str(&rule);
        for r in &self.rows {
            out.push_str(&line(r));
        }
        out
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for (label, vals) in self.header.iter().chain(&self.rows) {
            let mut rec = vec![label.clone()];
            rec.extend(vals.iter().cloned());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

const NA: &str = "NA";

/// Writes per-cell coefficients (regressors only) and diagnostics.
pub fn write_results<W1: Write, W2: Write>(
    coefficients: W1,
    diagnostics: W2,
    results: &BTreeMap<String, EstimationResult>,
    fmt: impl Fn(f64) -> String,
) -> Result<()> {
    let opt = |v: Option<f64>| v.map(&fmt).unwrap_or_else(|| NA.into());
    let mut c = csv::Writer::from_writer(coefficients);
    c.write_record(["cell", "regressor", "coef", "se", "p", "code"])?;
    let mut d = csv::Writer::from_writer(diagnostics);
    d.write_record([
        "cell", "estimator", "dependent", "ar1_p", "ar2_p", "sargan_p", "r2", "n_obs", "n_groups", "n_instruments",
    ])?;
    for (cell, r) in results {
        for k in r.regressors() {
            c.write_record([cell.clone(), k.name.clone(), fmt(k.estimate), fmt(k.se), fmt(k.p_value), k.code.to_string()])?;
        }
        d.write_record([
            cell.clone(),
            r.estimator.clone(),
            r.dependent.clone(),
            opt(r.ar1_p),
            opt(r.ar2_p),
            opt(r.sargan_p),
            opt(r.r2_proxy),
            r.n_obs.to_string(),
            r.n_groups.to_string(),
            r.n_instruments.to_string(),
        ])?;
    }
    c.flush()?;
    d.flush()?;
    Ok(())
}

fn field(rec: &csv::StringRecord, k: usize, name: &str) -> Result<String> {
    rec.get(k).map(str::to_string).ok_or_else(|| Error::MissingColumn(name.to_string()))
}

fn number(rec: &csv::StringRecord, k: usize, name: &str) -> Result<Option<f64>> {
    let raw = field(rec, k, name)?;
    if raw == NA {
        return Ok(None);
    }
    raw.parse().map(Some).map_err(|_| Error::NonNumericValue {
        line: rec.position().map(|p| p.line()).unwrap_or(0),
        column: name.to_string(),
        value: raw,
    })
}

fn count(rec: &csv::StringRecord, k: usize, name: &str) -> Result<usize> {
    Ok(number(rec, k, name)?.unwrap_or(0.0) as usize)
}

/// Reads back what [`write_results`] wrote. Covariance matrices and GMM
/// internals are not stored, so they come back empty.
pub fn read_results<R1: Read, R2: Read>(coefficients: R1, diagnostics: R2) -> Result<BTreeMap<String, EstimationResult>> {
    let mut out = BTreeMap::new();
    for rec in csv::Reader::from_reader(diagnostics).records() {
        let rec = rec?;
        let cell = field(&rec, 0, "cell")?;
        out.insert(
            cell,
            EstimationResult {
                estimator: field(&rec, 1, "estimator")?,
                dependent: field(&rec, 2, "dependent")?,
                coefficients: Vec::new(),
                n_regressors: 0,
                vcov: DMatrix::zeros(0, 0),
                ar1_p: number(&rec, 3, "ar1_p")?,
                ar2_p: number(&rec, 4, "ar2_p")?,
                sargan_p: number(&rec, 5, "sargan_p")?,
                r2_proxy: number(&rec, 6, "r2")?,
                n_obs: count(&rec, 7, "n_obs")?,
                n_groups: count(&rec, 8, "n_groups")?,
                n_instruments: count(&rec, 9, "n_instruments")?,
                weight_rank: None,
                gmm: None,
            },
        );
    }
    for rec in csv::Reader::from_reader(coefficients).records() {
        let rec = rec?;
        let cell = field(&rec, 0, "cell")?;
        let r = out.get_mut(&cell).ok_or_else(|| Error::MissingCell(cell.clone()))?;
        let p = number(&rec, 4, "p")?.unwrap_or(f64::NAN);
        r.coefficients.push(Coefficient {
            name: field(&rec, 1, "regressor")?,
            estimate: number(&rec, 2, "coef")?.unwrap_or(f64::NAN),
            se: number(&rec, 3, "se")?.unwrap_or(f64::NAN),
            p_value: p,
            code: match field(&rec, 5, "code")?.as_str() {
                "***" => "***",
                "**" => "**",
                "*" => "*",
                "." => ".",
                "" => "",
                _ if p.is_finite() => significance_code(p),
                _ => "",
            },
        });
        r.n_regressors += 1;
    }
    Ok(out)
}
