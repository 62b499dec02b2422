//! Long-format industry-period panel with a replayable transformation log.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::netcore::{Direction, DuplexPanelNetwork, Layer};
use crate::netmetrics::PageRank;
use crate::spill::SpilloverRule;
use crate::stats;

pub const MISSING: &str = "NA";
pub const DEFAULT_IQR_MULTIPLIER: f64 = 30.0;
pub const ROBUSTNESS_IQR_MULTIPLIERS: [f64; 2] = [5.0, 10.0];
/// Overlapping estimation windows used for subperiod comparisons.
pub const SUBPERIODS: [(i32, i32); 2] = [(1977, 1997), (1992, 2012)];

pub type Key = (String, i32);

/// Values of one variable keyed by (industry, period).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KeyedColumn {
    pub name: String,
    pub values: BTreeMap<Key, f64>,
}

impl KeyedColumn {
    pub fn new(name: impl Into<String>) -> Self {
        KeyedColumn {
            name: name.into(),
            values: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransformOp {
    ScaleBySd { sd: f64 },
    Log1p,
    IqrFilter { multiplier: f64, lower: f64, upper: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProvenanceStep {
    pub column: String,
    pub op: TransformOp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemovalEntry {
    pub industry: String,
    pub period: i32,
    pub column: String,
    pub value: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PanelDataset {
    /// Sorted, unique (industry, period) keys; one per row.
    pub keys: Vec<Key>,
    pub columns: Vec<(String, Vec<Option<f64>>)>,
    /// Period grid the panel was assembled on.
    pub periods: Vec<i32>,
    pub provenance: Vec<ProvenanceStep>,
    pub removals: Vec<RemovalEntry>,
}

#[derive(Debug, Clone, Default)]
pub struct AssembleOptions {
    pub balanced: bool,
    /// Columns that must be strictly positive for an industry to stay in a
    /// balanced panel.
    pub positive_columns: Vec<String>,
}

/// Joins keyed sources on the full industry x period grid.
pub fn assemble(
    industries: &[String],
    periods: &[i32],
    sources: &[KeyedColumn],
    opts: &AssembleOptions,
) -> Result<PanelDataset> {
    let inds: BTreeSet<&str> = industries.iter().map(String::as_str).collect();
    let pers: BTreeSet<i32> = periods.iter().copied().collect();
    for src in sources {
        for (ind, per) in src.values.keys() {
            if !inds.contains(ind.as_str()) {
                return Err(Error::GridMismatch(format!("`{}` has unknown industry `{ind}`", src.name)));
            }
            if !pers.contains(per) {
                return Err(Error::GridMismatch(format!("`{}` has period {per} off the grid", src.name)));
            }
        }
    }
    for p in &opts.positive_columns {
        if !sources.iter().any(|s| &s.name == p) {
            return Err(Error::UnknownPanelColumn(p.clone()));
        }
    }
    let keep = |ind: &str| -> bool {
        if !opts.balanced {
            return true;
        }
        pers.iter().all(|&t| {
            let k = (ind.to_string(), t);
            sources.iter().all(|s| match s.values.get(&k) {
                None => false,
                Some(v) => v.is_finite() && (!opts.positive_columns.contains(&s.name) || *v > 0.0),
            })
        })
    };
    let mut keys = Vec::new();
    for ind in &inds {
        if !keep(ind) {
            continue;
        }
        for &t in &pers {
            keys.push((ind.to_string(), t));
        }
    }
    let columns = sources
        .iter()
        .map(|s| (s.name.clone(), keys.iter().map(|k| s.values.get(k).copied()).collect()))
        .collect();
    Ok(PanelDataset {
        keys,
        columns,
        periods: pers.into_iter().collect(),
        provenance: Vec::new(),
        removals: Vec::new(),
    })
}

/// Sizes, PageRank and spillovers for both layers and directions, named
/// `A_mu`, `PR_tau_dw`, `Spill_mu_up` and so on.
pub fn duplex_columns(net: &DuplexPanelNetwork, pagerank: &PageRank, rule: &dyn SpilloverRule) -> Result<Vec<KeyedColumn>> {
    let mut cols: BTreeMap<String, KeyedColumn> = BTreeMap::new();
    let mut put = |name: String, period: i32, values: &[f64]| {
        let col = cols.entry(name.clone()).or_insert_with(|| KeyedColumn::new(name));
        for (i, v) in values.iter().enumerate() {
            col.values.insert((net.index.code(i).to_string(), period), *v);
        }
    };
    for snap in &net.periods {
        for layer in Layer::BOTH {
            let ls = snap.layer(layer);
            put(format!("A_{}", layer.tag()), snap.period, &ls.sizes.values);
            for dir in [Direction::Up, Direction::Dw] {
                let w = ls.shares(dir);
                let pr = crate::netmetrics::Centrality::compute(pagerank, w)?;
                put(format!("PR_{}_{}", layer.tag(), dir.as_str()), snap.period, &pr.values);
                let sp = rule.compute(w, &ls.sizes)?;
                put(format!("Spill_{}_{}", layer.tag(), dir.as_str()), snap.period, &sp.values);
            }
        }
    }
    Ok(cols.into_values().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Above,
    AtOrBelow,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GroupRule {
    /// Industries whose time-averaged column lies strictly above, or at or
    /// below, the cross-industry median of those averages.
    MedianSplit { column: String, side: Side },
    CodePrefix(String),
    ExternalClass { class: String, classes: BTreeMap<String, String> },
    PeriodWindow { first: i32, last: i32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSpec {
    pub name: String,
    pub rule: GroupRule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformConfig {
    pub scale_columns: Vec<String>,
    pub log_columns: Vec<String>,
    /// Columns kept out of the log step even when listed above.
    pub log_exempt: Vec<String>,
    pub iqr_columns: Vec<String>,
    pub iqr_multiplier: f64,
}

impl TransformConfig {
    /// Scale, log and filter every listed column, exempting shares from the log.
    pub fn standard(columns: &[String], exempt: &[&str], multiplier: f64) -> Self {
        TransformConfig {
            scale_columns: columns.to_vec(),
            log_columns: columns.to_vec(),
            log_exempt: exempt.iter().map(|s| s.to_string()).collect(),
            iqr_columns: columns.to_vec(),
            iqr_multiplier: multiplier,
        }
    }
}

fn fmt_exact(v: f64) -> String {
    format!("{v:?}")
}

fn parse_num(s: &str, line: u64, column: &str) -> Result<Option<f64>> {
    let t = s.trim();
    if t == MISSING || t.is_empty() {
        return Ok(None);
    }
    t.parse::<f64>().map(Some).map_err(|_| Error::NonNumericValue {
        line,
        column: column.to_string(),
        value: t.to_string(),
    })
}

impl PanelDataset {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn column(&self, name: &str) -> Result<&[Option<f64>]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| Error::UnknownPanelColumn(name.to_string()))
    }

    fn column_mut(&mut self, name: &str) -> Result<&mut Vec<Option<f64>>> {
        self.columns
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v)
            .ok_or_else(|| Error::UnknownPanelColumn(name.to_string()))
    }

    /// Adds or replaces a column.
    pub fn set_column(&mut self, name: &str, values: Vec<Option<f64>>) -> Result<()> {
        if values.len() != self.keys.len() {
            return Err(Error::DimensionMismatch(format!(
                "column `{name}` has {} values for {} rows",
                values.len(),
                self.keys.len()
            )));
        }
        match self.columns.iter_mut().find(|(n, _)| n == name) {
            Some((_, v)) => *v = values,
            None => self.columns.push((name.to_string(), values)),
        }
        Ok(())
    }

    pub fn get(&self, industry: &str, period: i32, column: &str) -> Result<Option<f64>> {
        let col = self.column(column)?;
        Ok(self.row_of(industry, period).and_then(|r| col[r]))
    }

    pub fn row_of(&self, industry: &str, period: i32) -> Option<usize> {
        self.keys
            .binary_search_by(|(i, t)| i.as_str().cmp(industry).then(t.cmp(&period)))
            .ok()
    }

    pub fn industries(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.keys.iter().map(|(i, _)| i).collect();
        set.into_iter().cloned().collect()
    }

    fn apply(&mut self, step: &ProvenanceStep) -> Result<()> {
        match &step.op {
            TransformOp::ScaleBySd { sd } => {
                let sd = *sd;
                for v in self.column_mut(&step.column)?.iter_mut().flatten() {
                    *v /= sd;
                }
            }
            TransformOp::Log1p => {
                let col = self.column_mut(&step.column)?;
                if let Some(bad) = col.iter().flatten().find(|v| **v <= -1.0) {
                    return Err(Error::DomainError(*bad));
                }
                for v in col.iter_mut().flatten() {
                    *v = v.ln_1p();
                }
            }
            TransformOp::IqrFilter { multiplier, lower, upper } => {
                let col = self.column(&step.column)?.to_vec();
                let mut drop = vec![false; self.keys.len()];
                for (r, v) in col.iter().enumerate() {
                    if let Some(x) = v {
                        if *x < *lower || *x > *upper {
                            drop[r] = true;
                            self.removals.push(RemovalEntry {
                                industry: self.keys[r].0.clone(),
                                period: self.keys[r].1,
                                column: step.column.clone(),
                                value: *x,
                                reason: format!("outside [{lower}, {upper}] (IQR multiplier {multiplier})"),
                            });
                        }
                    }
                }
                self.retain_rows(&drop.iter().map(|d| !d).collect::<Vec<_>>());
            }
        }
        self.provenance.push(step.clone());
        Ok(())
    }

    fn retain_rows(&mut self, keep: &[bool]) {
        let filter = |v: &mut Vec<Option<f64>>| {
            let mut it = keep.iter();
            v.retain(|_| *it.next().unwrap());
        };
        for (_, v) in self.columns.iter_mut() {
            filter(v);
        }
        let mut it = keep.iter();
        self.keys.retain(|_| *it.next().unwrap());
    }

    /// Divides the column by its pooled sample standard deviation.
    pub fn scale_by_sd(&mut self, column: &str) -> Result<f64> {
        let xs: Vec<f64> = self.column(column)?.iter().flatten().copied().collect();
        let sd = stats::sample_sd(&xs);
        if !(sd > 0.0 && sd.is_finite()) {
            return Err(Error::ZeroDispersion(format!("column `{column}`")));
        }
        self.apply(&ProvenanceStep {
            column: column.to_string(),
            op: TransformOp::ScaleBySd { sd },
        })?;
        Ok(sd)
    }

    pub fn log1p(&mut self, column: &str) -> Result<()> {
        self.apply(&ProvenanceStep {
            column: column.to_string(),
            op: TransformOp::Log1p,
        })
    }

    /// Drops every row whose value lies outside `[Q1 - a IQR, Q3 + a IQR]`,
    /// with quartiles pooled over all non-missing values. Returns the log of
    /// removed rows.
    pub fn remove_outliers_iqr(&mut self, column: &str, a: f64) -> Result<Vec<RemovalEntry>> {
        if !(a > 0.0) {
            return Err(Error::InvalidParameter(format!("IQR multiplier {a}")));
        }
        let mut xs: Vec<f64> = self.column(column)?.iter().flatten().copied().collect();
        if xs.len() < 4 {
            return Err(Error::TooFewObservations { found: xs.len(), needed: 4 });
        }
        xs.sort_by(f64::total_cmp);
        let q1 = stats::quantile_sorted(&xs, 0.25);
        let q3 = stats::quantile_sorted(&xs, 0.75);
        let iqr = q3 - q1;
        let before = self.removals.len();
        self.apply(&ProvenanceStep {
            column: column.to_string(),
            op: TransformOp::IqrFilter {
                multiplier: a,
                lower: q1 - a * iqr,
                upper: q3 + a * iqr,
            },
        })?;
        Ok(self.removals[before..].to_vec())
    }

    /// Scale, then log, then outlier removal, each over the configured columns.
    pub fn transform(&mut self, cfg: &TransformConfig) -> Result<()> {
        for c in &cfg.scale_columns {
            self.scale_by_sd(c)?;
        }
        for c in &cfg.log_columns {
            if !cfg.log_exempt.contains(c) {
                self.log1p(c)?;
            }
        }
        for c in &cfg.iqr_columns {
            self.remove_outliers_iqr(c, cfg.iqr_multiplier)?;
        }
        Ok(())
    }

    /// Re-applies this panel's transformation log to `raw`.
    pub fn replay(&self, raw: &PanelDataset) -> Result<PanelDataset> {
        let mut out = raw.clone();
        out.provenance.clear();
        out.removals.clear();
        for step in &self.provenance {
            out.apply(step)?;
        }
        Ok(out)
    }

    fn period_step(&self) -> Result<i32> {
        if self.periods.len() < 2 {
            return Ok(1);
        }
        let step = self.periods[1] - self.periods[0];
        if step <= 0 || self.periods.windows(2).any(|w| w[1] - w[0] != step) {
            return Err(Error::GridMismatch("period grid is not evenly spaced".into()));
        }
        Ok(step)
    }

    /// Value of `column` k grid steps earlier for the same industry.
    pub fn lag(&self, column: &str, k: usize) -> Result<Vec<Option<f64>>> {
        if k == 0 {
            return Err(Error::InvalidParameter("lag order must be at least 1".into()));
        }
        let step = self.period_step()?;
        let col = self.column(column)?;
        Ok(self
            .keys
            .iter()
            .map(|(ind, t)| {
                self.row_of(ind, t - step * k as i32).and_then(|r| col[r])
            })
            .collect())
    }

    /// Adds `lag(column, k)` under `name`.
    pub fn add_lag(&mut self, column: &str, k: usize, name: &str) -> Result<()> {
        let v = self.lag(column, k)?;
        self.set_column(name, v)
    }

    fn time_averages(&self, column: &str) -> Result<BTreeMap<String, f64>> {
        let col = self.column(column)?;
        let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for ((ind, _), v) in self.keys.iter().zip(col) {
            if let Some(x) = v {
                let e = acc.entry(ind.clone()).or_insert((0.0, 0));
                e.0 += x;
                e.1 += 1;
            }
        }
        Ok(acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect())
    }

    /// Rows belonging to the group.
    pub fn subset(&self, spec: &GroupSpec) -> Result<PanelDataset> {
        let keep: Vec<bool> = match &spec.rule {
            GroupRule::MedianSplit { column, side } => {
                let avgs = self.time_averages(column)?;
                let vals: Vec<f64> = avgs.values().copied().collect();
                if vals.is_empty() {
                    return Err(Error::EmptyCell(spec.name.clone()));
                }
                let med = stats::median(&vals);
                self.keys
                    .iter()
                    .map(|(ind, _)| match avgs.get(ind) {
                        Some(a) => match side {
                            Side::Above => *a > med,
                            Side::AtOrBelow => *a <= med,
                        },
                        None => false,
                    })
                    .collect()
            }
            GroupRule::CodePrefix(p) => self.keys.iter().map(|(ind, _)| ind.starts_with(p.as_str())).collect(),
            GroupRule::ExternalClass { class, classes } => {
                if !classes.values().any(|c| c == class) {
                    return Err(Error::UnknownClass(class.clone()));
                }
                self.keys
                    .iter()
                    .map(|(ind, _)| classes.get(ind) == Some(class))
                    .collect()
            }
            GroupRule::PeriodWindow { first, last } => {
                self.keys.iter().map(|(_, t)| t >= first && t <= last).collect()
            }
        };
        if !keep.iter().any(|k| *k) {
            return Err(Error::EmptyCell(spec.name.clone()));
        }
        let mut out = self.clone();
        out.retain_rows(&keep);
        if let GroupRule::PeriodWindow { first, last } = spec.rule {
            out.periods.retain(|t| *t >= first && *t <= last);
        }
        Ok(out)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["industry".to_string(), "period".to_string()];
        header.extend(self.columns.iter().map(|(n, _)| n.clone()));
        w.write_record(&header)?;
        for (r, (ind, t)) in self.keys.iter().enumerate() {
            let mut rec = vec![ind.clone(), t.to_string()];
            rec.extend(
                self.columns
                    .iter()
                    .map(|(_, v)| v[r].map(fmt_exact).unwrap_or_else(|| MISSING.to_string())),
            );
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a panel written by [`PanelDataset::write_csv`]. The period grid
    /// is taken from the periods present.
    pub fn read_csv<R: Read>(stream: R) -> Result<PanelDataset> {
        let mut rdr = csv::Reader::from_reader(stream);
        let headers = rdr.headers()?.clone();
        if headers.get(0) != Some("industry") {
            return Err(Error::MissingColumn("industry".into()));
        }
        if headers.get(1) != Some("period") {
            return Err(Error::MissingColumn("period".into()));
        }
        let names: Vec<String> = headers.iter().skip(2).map(str::to_string).collect();
        let mut rows: BTreeMap<Key, Vec<Option<f64>>> = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let ind = rec.get(0).unwrap_or("").trim().to_string();
            if ind.is_empty() {
                return Err(Error::EmptyCode { line });
            }
            let per_s = rec.get(1).unwrap_or("").trim();
            let per: i32 = per_s.parse().map_err(|_| Error::NonNumericValue {
                line,
                column: "period".into(),
                value: per_s.to_string(),
            })?;
            let mut vals = Vec::with_capacity(names.len());
            for (c, name) in names.iter().enumerate() {
                vals.push(parse_num(rec.get(c + 2).unwrap_or(""), line, name)?);
            }
            if rows.insert((ind.clone(), per), vals).is_some() {
                return Err(Error::DuplicateKey(ind, per));
            }
        }
        let periods: BTreeSet<i32> = rows.keys().map(|(_, t)| *t).collect();
        let keys: Vec<Key> = rows.keys().cloned().collect();
        let columns = names
            .iter()
            .enumerate()
            .map(|(c, n)| (n.clone(), rows.values().map(|v| v[c]).collect()))
            .collect();
        Ok(PanelDataset {
            keys,
            columns,
            periods: periods.into_iter().collect(),
            provenance: Vec::new(),
            removals: Vec::new(),
        })
    }

    /// Sidecar listing every transformation step with its parameters.
    pub fn write_provenance<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "column", "op", "p1", "p2", "p3"])?;
        for (s, step) in self.provenance.iter().enumerate() {
            let (op, params): (&str, Vec<f64>) = match &step.op {
                TransformOp::ScaleBySd { sd } => ("scale_by_sd", vec![*sd]),
                TransformOp::Log1p => ("log1p", vec![]),
                TransformOp::IqrFilter { multiplier, lower, upper } => ("iqr_filter", vec![*multiplier, *lower, *upper]),
            };
            let mut rec = vec![(s + 1).to_string(), step.column.clone(), op.to_string()];
            for k in 0..3 {
                rec.push(params.get(k).map(|v| fmt_exact(*v)).unwrap_or_default());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_provenance<R: Read>(stream: R) -> Result<Vec<ProvenanceStep>> {
        let mut rdr = csv::Reader::from_reader(stream);
        let mut steps = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let p = |k: usize| -> Result<f64> {
                parse_num(rec.get(3 + k).unwrap_or(""), line, "param")?.ok_or_else(|| Error::NonNumericValue {
                    line,
                    column: "param".into(),
                    value: String::new(),
                })
            };
            let op = match rec.get(2).unwrap_or("") {
                "scale_by_sd" => TransformOp::ScaleBySd { sd: p(0)? },
                "log1p" => TransformOp::Log1p,
                "iqr_filter" => TransformOp::IqrFilter {
                    multiplier: p(0)?,
                    lower: p(1)?,
                    upper: p(2)?,
                },
                other => {
                    return Err(Error::NonNumericValue {
                        line,
                        column: "op".into(),
                        value: other.to_string(),
                    })
                }
            };
            steps.push(ProvenanceStep {
                column: rec.get(1).unwrap_or("").to_string(),
                op,
            });
        }
        Ok(steps)
    }

    pub fn write_removals<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["industry", "period", "column", "value", "reason"])?;
        for r in &self.removals {
            w.write_record([r.industry.clone(), r.period.to_string(), r.column.clone(), fmt_exact(r.value), r.reason.clone()])?;
        }
        w.flush()?;
        Ok(())
    }
}
