//! Parsing and harmonization of raw inputs: flow edgelists, concordance
//! tables, patent (event) records and auxiliary industry panels.
//!
//! Everything here is a pure function of its inputs. Codes are kept as
//! strings; numeric cells that fail to parse are reported with their line
//! number rather than silently dropped.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One directed flow: `source_code` supplies (or is cited by) `target_code`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowEdge {
    pub source_code: String,
    pub target_code: String,
    pub value: f64,
    pub period: i32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PeriodSource {
    Column(String),
    Fixed(i32),
}

/// Column binding for a delimiter-separated edgelist with a header row.
#[derive(Debug, Clone)]
pub struct EdgeFormat {
    pub delimiter: u8,
    pub source: String,
    pub target: String,
    pub value: String,
    pub period: PeriodSource,
}

impl Default for EdgeFormat {
    fn default() -> Self {
        EdgeFormat {
            delimiter: b',',
            source: "source".into(),
            target: "target".into(),
            value: "value".into(),
            period: PeriodSource::Column("period".into()),
        }
    }
}

impl EdgeFormat {
    pub fn with_fixed_period(period: i32) -> Self {
        EdgeFormat {
            period: PeriodSource::Fixed(period),
            ..Default::default()
        }
    }
}

fn reader<R: Read>(stream: R, delimiter: u8) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(stream)
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::MissingColumn(name.to_string()))
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn parse_number(record: &csv::StringRecord, idx: usize, column: &str) -> Result<f64> {
    let raw = record.get(idx).unwrap_or("");
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::NonNumericValue {
            line: line_of(record),
            column: column.to_string(),
            value: raw.to_string(),
        }),
    }
}

fn parse_int(record: &csv::StringRecord, idx: usize, column: &str) -> Result<i64> {
    let raw = record.get(idx).unwrap_or("");
    raw.parse::<i64>().map_err(|_| Error::NonNumericValue {
        line: line_of(record),
        column: column.to_string(),
        value: raw.to_string(),
    })
}

fn parse_code(record: &csv::StringRecord, idx: usize) -> Result<String> {
    let code = record.get(idx).unwrap_or("");
    if code.is_empty() {
        return Err(Error::EmptyCode {
            line: line_of(record),
        });
    }
    Ok(code.to_string())
}

/// Parses a long-format edgelist. Row order is preserved.
pub fn parse_flow_edgelist<R: Read>(stream: R, format: &EdgeFormat) -> Result<Vec<FlowEdge>> {
    let mut rdr = reader(stream, format.delimiter);
    let headers = rdr.headers()?.clone();
    let si = column_index(&headers, &format.source)?;
    let ti = column_index(&headers, &format.target)?;
    let vi = column_index(&headers, &format.value)?;
    let pi = match &format.period {
        PeriodSource::Column(name) => Some((column_index(&headers, name)?, name.as_str())),
        PeriodSource::Fixed(_) => None,
    };

    let mut edges = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let value = parse_number(&record, vi, &format.value)?;
        if value < 0.0 {
            return Err(Error::NegativeValue {
                line: line_of(&record),
                value,
            });
        }
        let period = match (&format.period, pi) {
            (PeriodSource::Fixed(p), _) => *p,
            (_, Some((idx, name))) => parse_int(&record, idx, name)? as i32,
            _ => unreachable!(),
        };
        edges.push(FlowEdge {
            source_code: parse_code(&record, si)?,
            target_code: parse_code(&record, ti)?,
            value,
            period,
        });
    }
    Ok(edges)
}

/// Writes edges with the same column binding; always includes the period column.
pub fn write_flow_edgelist<W: Write>(out: W, edges: &[FlowEdge], format: &EdgeFormat) -> Result<()> {
    let period_col = match &format.period {
        PeriodSource::Column(c) => c.clone(),
        PeriodSource::Fixed(_) => "period".to_string(),
    };
    let mut w = csv::WriterBuilder::new()
        .delimiter(format.delimiter)
        .from_writer(out);
    w.write_record([&format.source, &format.target, &format.value, &period_col])?;
    for e in edges {
        w.write_record([
            e.source_code.clone(),
            e.target_code.clone(),
            e.value.to_string(),
            e.period.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Weighted many-to-many mapping between two classification systems.
///
/// Each source's weights sum to one after construction. Target order follows
/// first appearance in the input.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConcordanceMap {
    entries: BTreeMap<String, Vec<(String, f64)>>,
}

impl ConcordanceMap {
    /// Builds a map from raw (source, target, weight) triples. `None` weights
    /// mean an unweighted pair; a source whose pairs are all unweighted splits
    /// uniformly over its targets.
    pub fn from_pairs<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String, Option<f64>)>,
    {
        let mut raw: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
        for (source, target, weight) in pairs {
            let w = match weight {
                Some(w) if (0.0..=1.0).contains(&w) => w,
                Some(w) => {
                    return Err(Error::WeightOutOfRange {
                        source_code: source,
                        target_code: target,
                        weight: w,
                    })
                }
                None => 1.0,
            };
            let targets = raw.entry(source).or_default();
            match targets.iter_mut().find(|(t, _)| *t == target) {
                Some((_, acc)) => *acc += w,
                None => targets.push((target, w)),
            }
        }
        if raw.is_empty() {
            return Err(Error::EmptyMap);
        }
        for (source, targets) in raw.iter_mut() {
            let total: f64 = targets.iter().map(|(_, w)| w).sum();
            if total <= 0.0 {
                return Err(Error::DegenerateWeights(source.clone()));
            }
            for (_, w) in targets.iter_mut() {
                *w /= total;
            }
        }
        Ok(ConcordanceMap { entries: raw })
    }

    pub fn identity<S: AsRef<str>>(codes: &[S]) -> Self {
        ConcordanceMap {
            entries: codes
                .iter()
                .map(|c| (c.as_ref().to_string(), vec![(c.as_ref().to_string(), 1.0)]))
                .collect(),
        }
    }

    pub fn get(&self, source: &str) -> Option<&[(String, f64)]> {
        self.entries.get(source).map(|v| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Vec<(String, f64)>)> {
        self.entries.iter()
    }
}

#[derive(Debug, Clone)]
pub struct ConcordanceFormat {
    pub delimiter: u8,
    pub source: String,
    pub target: String,
    /// `None`: the table has no weight column.
    pub weight: Option<String>,
}

impl Default for ConcordanceFormat {
    fn default() -> Self {
        ConcordanceFormat {
            delimiter: b',',
            source: "source".into(),
            target: "target".into(),
            weight: Some("weight".into()),
        }
    }
}

pub fn parse_concordance<R: Read>(stream: R, format: &ConcordanceFormat) -> Result<ConcordanceMap> {
    let mut rdr = reader(stream, format.delimiter);
    let headers = rdr.headers()?.clone();
    let si = column_index(&headers, &format.source)?;
    let ti = column_index(&headers, &format.target)?;
    // A configured weight column that is absent from the file means unweighted.
    let wi = format
        .weight
        .as_deref()
        .and_then(|w| headers.iter().position(|h| h == w).map(|i| (i, w)));
    let mut pairs = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let weight = match wi {
            Some((idx, name)) if !record.get(idx).unwrap_or("").is_empty() => {
                Some(parse_number(&record, idx, name)?)
            }
            _ => None,
        };
        pairs.push((parse_code(&record, si)?, parse_code(&record, ti)?, weight));
    }
    ConcordanceMap::from_pairs(pairs)
}

pub fn write_concordance<W: Write>(out: W, map: &ConcordanceMap) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["source", "target", "weight"])?;
    for (s, targets) in map.iter() {
        for (t, wt) in targets {
            w.write_record([s.as_str(), t.as_str(), &wt.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sides {
    Source,
    Target,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnmappedPolicy {
    #[default]
    Strict,
    PassThrough,
}

fn mapped<'a>(
    map: &'a ConcordanceMap,
    code: &'a str,
    policy: UnmappedPolicy,
) -> Result<std::borrow::Cow<'a, [(String, f64)]>> {
    match map.get(code) {
        Some(t) => Ok(std::borrow::Cow::Borrowed(t)),
        None => match policy {
            UnmappedPolicy::Strict => Err(Error::UnmappedCode(code.to_string())),
            UnmappedPolicy::PassThrough => Ok(std::borrow::Cow::Owned(vec![(code.to_string(), 1.0)])),
        },
    }
}

/// Re-expresses edges in the target classification. An edge `(s, t, v)` becomes
/// `(s', t', v * w_s * w_t)` over the mapped targets of the selected sides.
pub fn apply_concordance(
    edges: &[FlowEdge],
    map: &ConcordanceMap,
    sides: Sides,
    policy: UnmappedPolicy,
) -> Result<Vec<FlowEdge>> {
    let mut out = Vec::with_capacity(edges.len());
    for e in edges {
        let src = match sides {
            Sides::Source | Sides::Both => mapped(map, &e.source_code, policy)?,
            Sides::Target => std::borrow::Cow::Owned(vec![(e.source_code.clone(), 1.0)]),
        };
        let tgt = match sides {
            Sides::Target | Sides::Both => mapped(map, &e.target_code, policy)?,
            Sides::Source => std::borrow::Cow::Owned(vec![(e.target_code.clone(), 1.0)]),
        };
        for (s, ws) in src.iter() {
            for (t, wt) in tgt.iter() {
                out.push(FlowEdge {
                    source_code: s.clone(),
                    target_code: t.clone(),
                    value: e.value * ws * wt,
                    period: e.period,
                });
            }
        }
    }
    Ok(out)
}

/// Sums duplicate (period, source, target) edges; output sorted by that key.
pub fn aggregate_edges(edges: &[FlowEdge]) -> Vec<FlowEdge> {
    let mut acc: BTreeMap<(i32, &str, &str), f64> = BTreeMap::new();
    for e in edges {
        *acc.entry((e.period, &e.source_code, &e.target_code)).or_default() += e.value;
    }
    acc.into_iter()
        .map(|((period, s, t), value)| FlowEdge {
            source_code: s.to_string(),
            target_code: t.to_string(),
            value,
            period,
        })
        .collect()
}

/// A granted patent (or any dated, classified event).
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub id: String,
    pub year: i32,
    pub codes: Vec<String>,
    pub forward_citations: u32,
}

impl EventRecord {
    /// Codes are deduplicated keeping first-occurrence order.
    pub fn new(id: impl Into<String>, year: i32, codes: Vec<String>, forward_citations: u32) -> Self {
        let mut seen = Vec::with_capacity(codes.len());
        for c in codes {
            if !seen.contains(&c) {
                seen.push(c);
            }
        }
        EventRecord {
            id: id.into(),
            year,
            codes: seen,
            forward_citations,
        }
    }

    /// Truncates codes to `level` characters (e.g. CPC subclass level) and dedups.
    pub fn aggregated(&self, level: usize) -> EventRecord {
        let codes = self
            .codes
            .iter()
            .map(|c| c.chars().take(level).collect::<String>())
            .collect();
        EventRecord::new(self.id.clone(), self.year, codes, self.forward_citations)
    }
}

#[derive(Debug, Clone)]
pub struct EventFormat {
    pub delimiter: u8,
    pub id: String,
    pub year: String,
    pub codes: String,
    /// Separator between codes inside the codes cell.
    pub code_separator: char,
    /// Optional column; absent means zero citations until counted.
    pub citations: Option<String>,
    pub year_range: Option<(i32, i32)>,
    pub aggregation_level: Option<usize>,
}

impl Default for EventFormat {
    fn default() -> Self {
        EventFormat {
            delimiter: b',',
            id: "id".into(),
            year: "year".into(),
            codes: "codes".into(),
            code_separator: ';',
            citations: Some("forward_citations".into()),
            year_range: None,
            aggregation_level: None,
        }
    }
}

/// Parses event records; duplicate ids keep the first row.
pub fn parse_events<R: Read>(stream: R, format: &EventFormat) -> Result<Vec<EventRecord>> {
    let mut rdr = reader(stream, format.delimiter);
    let headers = rdr.headers()?.clone();
    let ii = column_index(&headers, &format.id)?;
    let yi = column_index(&headers, &format.year)?;
    let ci = column_index(&headers, &format.codes)?;
    let fi = match &format.citations {
        Some(name) => headers.iter().position(|h| h == name).map(|i| (i, name.as_str())),
        None => None,
    };
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let id = parse_code(&record, ii)?;
        let year = parse_int(&record, yi, &format.year)? as i32;
        if let Some((lo, hi)) = format.year_range {
            if year < lo || year > hi {
                continue;
            }
        }
        let codes: Vec<String> = record
            .get(ci)
            .unwrap_or("")
            .split(format.code_separator)
            .map(str::trim)
            .filter(|c| !c.is_empty())
            .map(String::from)
            .collect();
        if codes.is_empty() {
            return Err(Error::EmptyCode {
                line: line_of(&record),
            });
        }
        let cites = match fi {
            Some((idx, name)) => {
                let c = parse_int(&record, idx, name)?;
                if c < 0 {
                    return Err(Error::NegativeValue {
                        line: line_of(&record),
                        value: c as f64,
                    });
                }
                c as u32
            }
            None => 0,
        };
        if !seen.insert(id.clone()) {
            continue;
        }
        let ev = EventRecord::new(id, year, codes, cites);
        out.push(match format.aggregation_level {
            Some(level) => ev.aggregated(level),
            None => ev,
        });
    }
    Ok(out)
}

pub fn write_events<W: Write>(out: W, events: &[EventRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "year", "codes", "forward_citations"])?;
    for e in events {
        w.write_record([
            e.id.clone(),
            e.year.to_string(),
            e.codes.join(";"),
            e.forward_citations.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Timing {
    /// Window `[anchor - len + 1, anchor]`.
    Prior,
    /// Window `[anchor, anchor + len - 1]`.
    Posterior,
}

/// Non-overlapping grid of year windows, each labelled by its anchor year.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowGrid {
    len: u32,
    anchors: Vec<i32>,
    timing: Timing,
}

impl WindowGrid {
    pub fn new(len: u32, mut anchors: Vec<i32>, timing: Timing) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidWindowLength(len));
        }
        if anchors.is_empty() {
            return Err(Error::EmptyWindowGrid);
        }
        anchors.sort_unstable();
        anchors.dedup();
        for pair in anchors.windows(2) {
            if (pair[1] - pair[0]) < len as i32 {
                return Err(Error::OverlappingWindows(pair[1]));
            }
        }
        Ok(WindowGrid { len, anchors, timing })
    }

    /// Evenly spaced anchors `first, first + len, ..., <= last`.
    pub fn regular(len: u32, first: i32, last: i32, timing: Timing) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidWindowLength(len));
        }
        let anchors = (first..=last).step_by(len as usize).collect();
        WindowGrid::new(len, anchors, timing)
    }

    pub fn anchors(&self) -> &[i32] {
        &self.anchors
    }

    pub fn len(&self) -> u32 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn timing(&self) -> Timing {
        self.timing
    }

    pub fn bounds(&self, anchor: i32) -> (i32, i32) {
        let span = self.len as i32 - 1;
        match self.timing {
            Timing::Prior => (anchor - span, anchor),
            Timing::Posterior => (anchor, anchor + span),
        }
    }

    /// Anchor of the window containing `year`, if any.
    pub fn window_of(&self, year: i32) -> Option<i32> {
        self.anchors.iter().copied().find(|&a| {
            let (lo, hi) = self.bounds(a);
            (lo..=hi).contains(&year)
        })
    }
}

/// Citation-weighted and plain patent stock of one industry in one window.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PatentStock {
    /// Sum of concordance weight times (1 + forward citations).
    pub weighted: f64,
    /// Sum of concordance weights.
    pub unweighted: f64,
}

/// Aggregates events into per-industry stocks. Without a map each code counts
/// as its own industry with weight one.
pub fn citation_weighted_stock(
    events: &[&EventRecord],
    map: Option<&ConcordanceMap>,
    policy: UnmappedPolicy,
) -> Result<BTreeMap<String, PatentStock>> {
    let mut out: BTreeMap<String, PatentStock> = BTreeMap::new();
    for ev in events {
        let cite_weight = 1.0 + ev.forward_citations as f64;
        for code in &ev.codes {
            let targets = match map {
                Some(m) => mapped(m, code, policy)?,
                None => std::borrow::Cow::Owned(vec![(code.clone(), 1.0)]),
            };
            for (industry, w) in targets.iter() {
                let s = out.entry(industry.clone()).or_default();
                s.weighted += w * cite_weight;
                s.unweighted += w;
            }
        }
    }
    Ok(out)
}

/// Partitions events by window anchor; events outside every window are dropped.
pub fn assign_windows<'a>(
    events: &'a [EventRecord],
    grid: &WindowGrid,
) -> BTreeMap<i32, Vec<&'a EventRecord>> {
    let mut out: BTreeMap<i32, Vec<&EventRecord>> =
        grid.anchors().iter().map(|&a| (a, Vec::new())).collect();
    for ev in events {
        if let Some(a) = grid.window_of(ev.year) {
            out.get_mut(&a).expect("anchor present").push(ev);
        }
    }
    out
}

/// Per-window, per-industry patent stocks.
pub fn window_events(
    events: &[EventRecord],
    grid: &WindowGrid,
    map: Option<&ConcordanceMap>,
    policy: UnmappedPolicy,
) -> Result<BTreeMap<i32, BTreeMap<String, PatentStock>>> {
    assign_windows(events, grid)
        .into_iter()
        .map(|(anchor, evs)| Ok((anchor, citation_weighted_stock(&evs, map, policy)?)))
        .collect()
}

/// A citation from one event to another, by event id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CitationRecord {
    pub citing: String,
    pub cited: String,
}

pub fn parse_citations<R: Read>(stream: R, delimiter: u8) -> Result<Vec<CitationRecord>> {
    let mut rdr = reader(stream, delimiter);
    let headers = rdr.headers()?.clone();
    let ci = column_index(&headers, "citing")?;
    let di = column_index(&headers, "cited")?;
    rdr.records()
        .map(|r| {
            let r = r?;
            Ok(CitationRecord {
                citing: parse_code(&r, ci)?,
                cited: parse_code(&r, di)?,
            })
        })
        .collect()
}

pub fn write_citations<W: Write>(out: W, citations: &[CitationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["citing", "cited"])?;
    for c in citations {
        w.write_record([&c.citing, &c.cited])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub enum CitationScope<'a> {
    /// Every citation received counts.
    AllTime,
    /// Only citations made from within the cited event's window count.
    WithinWindow(&'a WindowGrid),
}

/// Fills `forward_citations` from citation records. Citations whose citing
/// event is unknown count only under `AllTime`.
pub fn count_forward_citations(
    events: &mut [EventRecord],
    citations: &[CitationRecord],
    scope: CitationScope<'_>,
) {
    let year_of: HashMap<String, i32> = events.iter().map(|e| (e.id.clone(), e.year)).collect();
    let mut counts: HashMap<&str, u32> = HashMap::new();
    for c in citations {
        let counted = match scope {
            CitationScope::AllTime => true,
            CitationScope::WithinWindow(grid) => match (year_of.get(&c.citing), year_of.get(&c.cited)) {
                (Some(&yc), Some(&yd)) => {
                    let wc = grid.window_of(yc);
                    wc.is_some() && wc == grid.window_of(yd)
                }
                _ => false,
            },
        };
        if counted {
            *counts.entry(c.cited.as_str()).or_default() += 1;
        }
    }
    let counts: HashMap<String, u32> = counts.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    for e in events.iter_mut() {
        e.forward_citations = counts.get(&e.id).copied().unwrap_or(0);
    }
}

/// Industry-to-industry citation flows. A citation contributes one unit from
/// every cited code to every citing code, dated by the citing event's window,
/// and is then mapped through the concordance on both sides.
pub fn citation_flow_edges(
    events: &[EventRecord],
    citations: &[CitationRecord],
    grid: &WindowGrid,
    map: Option<&ConcordanceMap>,
    policy: UnmappedPolicy,
) -> Result<Vec<FlowEdge>> {
    let by_id: HashMap<&str, &EventRecord> = events.iter().map(|e| (e.id.as_str(), e)).collect();
    let mut raw = Vec::new();
    for c in citations {
        let (Some(citing), Some(cited)) = (by_id.get(c.citing.as_str()), by_id.get(c.cited.as_str())) else {
            continue;
        };
        let Some(anchor) = grid.window_of(citing.year) else {
            continue;
        };
        for d in &cited.codes {
            for t in &citing.codes {
                raw.push(FlowEdge {
                    source_code: d.clone(),
                    target_code: t.clone(),
                    value: 1.0,
                    period: anchor,
                });
            }
        }
    }
    let raw = aggregate_edges(&raw);
    let mapped = match map {
        Some(m) => apply_concordance(&raw, m, Sides::Both, policy)?,
        None => raw,
    };
    Ok(aggregate_edges(&mapped))
}

/// Deflates nominal values keyed by (industry, period).
pub fn deflate(
    nominal: &BTreeMap<(String, i32), f64>,
    deflator: &BTreeMap<(String, i32), f64>,
) -> Result<BTreeMap<(String, i32), f64>> {
    nominal
        .iter()
        .map(|(key, &v)| {
            let d = *deflator.get(key).ok_or_else(|| Error::MissingDeflator {
                industry: key.0.clone(),
                period: key.1,
            })?;
            if !(d > 0.0) {
                return Err(Error::NonPositiveDeflator {
                    industry: key.0.clone(),
                    period: key.1,
                    value: d,
                });
            }
            Ok((key.clone(), v / d))
        })
        .collect()
}

pub mod aux_columns {
    pub const EMPLOYMENT: &str = "employment";
    pub const WAGE: &str = "wage";
    pub const CAPITAL_INTENSITY: &str = "capital_intensity";
    pub const INVESTMENT_PC: &str = "investment_pc";
    pub const ENERGY_PC: &str = "energy_pc";
    pub const MATERIALS_PC: &str = "materials_pc";
    pub const PROD_LABOR_SHARE: &str = "prod_labor_share";
    pub const REL_PROD_WAGE: &str = "rel_prod_wage";
    pub const TFP: &str = "tfp";
    pub const VALUE_ADDED_PC: &str = "value_added_pc";
    pub const DEFLATOR: &str = "deflator";

    pub const ALL: [&str; 11] = [
        EMPLOYMENT,
        WAGE,
        CAPITAL_INTENSITY,
        INVESTMENT_PC,
        ENERGY_PC,
        MATERIALS_PC,
        PROD_LABOR_SHARE,
        REL_PROD_WAGE,
        TFP,
        VALUE_ADDED_PC,
        DEFLATOR,
    ];

    /// Columns measured in currency units.
    pub const MONETARY: [&str; 5] = [WAGE, CAPITAL_INTENSITY, INVESTMENT_PC, MATERIALS_PC, VALUE_ADDED_PC];
}

/// One industry-period row of auxiliary (productivity database) variables.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxPanelRow {
    pub industry: String,
    pub period: i32,
    /// Empty cells are absent.
    pub values: BTreeMap<String, f64>,
}

impl AuxPanelRow {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::InvalidAuxValue {
            industry: self.industry.clone(),
            period: self.period,
            reason,
        };
        if let Some(&d) = self.values.get(aux_columns::DEFLATOR) {
            if !(d > 0.0) {
                return Err(Error::NonPositiveDeflator {
                    industry: self.industry.clone(),
                    period: self.period,
                    value: d,
                });
            }
        }
        if let Some(&s) = self.values.get(aux_columns::PROD_LABOR_SHARE) {
            if !(0.0..=1.0).contains(&s) {
                return Err(bad(format!("prod_labor_share {s} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Parses an auxiliary panel: `industry`, `period` and any number of numeric columns.
pub fn parse_aux_panel<R: Read>(stream: R, delimiter: u8) -> Result<Vec<AuxPanelRow>> {
    let mut rdr = reader(stream, delimiter);
    let headers = rdr.headers()?.clone();
    let ii = column_index(&headers, "industry")?;
    let pi = column_index(&headers, "period")?;
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let mut values = BTreeMap::new();
        for (idx, name) in headers.iter().enumerate() {
            if idx == ii || idx == pi || record.get(idx).unwrap_or("").is_empty() {
                continue;
            }
            values.insert(name.to_string(), parse_number(&record, idx, name)?);
        }
        let row = AuxPanelRow {
            industry: parse_code(&record, ii)?,
            period: parse_int(&record, pi, "period")? as i32,
            values,
        };
        row.validate()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_aux_panel<W: Write>(out: W, rows: &[AuxPanelRow]) -> Result<()> {
    let mut columns: Vec<&str> = rows
        .iter()
        .flat_map(|r| r.values.keys().map(String::as_str))
        .collect();
    columns.sort_unstable();
    columns.dedup();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["industry", "period"];
    header.extend(&columns);
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.industry.clone(), r.period.to_string()];
        for c in &columns {
            rec.push(r.values.get(*c).map(|v| v.to_string()).unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Deflates the given monetary columns of every row by its `deflator` column.
pub fn deflate_aux(rows: &[AuxPanelRow], columns: &[&str]) -> Result<Vec<AuxPanelRow>> {
    let mut nominal = BTreeMap::new();
    let mut deflator = BTreeMap::new();
    for r in rows {
        if let Some(&d) = r.values.get(aux_columns::DEFLATOR) {
            deflator.insert((r.industry.clone(), r.period), d);
        }
    }
    let mut out = rows.to_vec();
    for col in columns {
        nominal.clear();
        for r in rows {
            if let Some(&v) = r.values.get(*col) {
                nominal.insert((r.industry.clone(), r.period), v);
            }
        }
        let real = deflate(&nominal, &deflator)?;
        for r in out.iter_mut() {
            if let Some(v) = real.get(&(r.industry.clone(), r.period)) {
                r.values.insert(col.to_string(), *v);
            }
        }
    }
    Ok(out)
}
