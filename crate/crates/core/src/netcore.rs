//! Per-period flow matrices, input/output share matrices and node sizes.
//!
//! Orientation convention: entry `(i, j)` of a flow matrix is the flow from
//! industry `j` to industry `i`, i.e. `i`'s input from `j`. Tables stored with
//! producers in rows are transposed on load.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::FlowEdge;
use crate::stats;

/// Bijection between industry codes and matrix positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndustryIndex {
    codes: Vec<String>,
    positions: HashMap<String, usize>,
}

impl IndustryIndex {
    /// Sorted, deduplicated codes.
    pub fn from_codes<I, S>(codes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut codes: Vec<String> = codes.into_iter().map(Into::into).collect();
        codes.sort();
        codes.dedup();
        let positions = codes.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
        IndustryIndex { codes, positions }
    }

    /// Every code appearing on either side of the edges.
    pub fn from_edges<'a, I: IntoIterator<Item = &'a FlowEdge>>(edges: I) -> Self {
        IndustryIndex::from_codes(
            edges
                .into_iter()
                .flat_map(|e| [e.source_code.clone(), e.target_code.clone()]),
        )
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn position(&self, code: &str) -> Option<usize> {
        self.positions.get(code).copied()
    }

    pub fn code(&self, pos: usize) -> &str {
        &self.codes[pos]
    }

    pub fn codes(&self) -> &[String] {
        &self.codes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Layer {
    Market,
    Innovation,
}

impl Layer {
    pub const BOTH: [Layer; 2] = [Layer::Market, Layer::Innovation];

    pub fn as_str(self) -> &'static str {
        match self {
            Layer::Market => "market",
            Layer::Innovation => "innovation",
        }
    }

    /// Short tag used in panel column names.
    pub fn tag(self) -> &'static str {
        match self {
            Layer::Market => "mu",
            Layer::Innovation => "tau",
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    Up,
    Dw,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Up, Direction::Dw];

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Dw => "dw",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Denominator used for output shares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DwVariant {
    /// `flow(i, j) / sum_k flow(k, j)`: share of supplier `j`'s output sold to `i`.
    /// Column-stochastic.
    #[default]
    ColumnSum,
    /// `flow(i, j) / sum_k flow(k, i)`: divides by the row industry's own output.
    OwnOutput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowMatrix {
    pub period: i32,
    pub layer: Layer,
    pub index: Arc<IndustryIndex>,
    pub matrix: DMatrix<f64>,
}

impl FlowMatrix {
    pub fn new(period: i32, layer: Layer, index: Arc<IndustryIndex>, matrix: DMatrix<f64>) -> Result<Self> {
        let n = index.len();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "flow matrix is {}x{}, index has {n} codes",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if let Some(v) = matrix.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidParameter(format!("flow entry {v} is not finite and nonnegative")));
        }
        Ok(FlowMatrix {
            period,
            layer,
            index,
            matrix,
        })
    }

    pub fn n(&self) -> usize {
        self.index.len()
    }
}

/// Accumulates the edges of `period` into a flow matrix; duplicates are summed
/// and edges of other periods ignored.
pub fn build_flow_matrix(
    edges: &[FlowEdge],
    index: &Arc<IndustryIndex>,
    period: i32,
    layer: Layer,
) -> Result<FlowMatrix> {
    let n = index.len();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for e in edges.iter().filter(|e| e.period == period) {
        let supplier = index
            .position(&e.source_code)
            .ok_or_else(|| Error::UnknownCode(e.source_code.clone()))?;
        let user = index
            .position(&e.target_code)
            .ok_or_else(|| Error::UnknownCode(e.target_code.clone()))?;
        m[(user, supplier)] += e.value;
    }
    FlowMatrix::new(period, layer, Arc::clone(index), m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShareMatrix {
    pub period: i32,
    pub layer: Layer,
    pub direction: Direction,
    pub variant: DwVariant,
    pub index: Arc<IndustryIndex>,
    pub matrix: DMatrix<f64>,
}

impl ShareMatrix {
    /// Matrix whose row `i` holds the weights of `i`'s partners seen from `i`:
    /// its suppliers for `Up`, its customers (share of `i`'s output) for `Dw`.
    pub fn partner_view(&self) -> DMatrix<f64> {
        match (self.direction, self.variant) {
            (Direction::Dw, DwVariant::ColumnSum) => self.matrix.transpose(),
            _ => self.matrix.clone(),
        }
    }

    /// Industry vectors for similarity: rows for `Up`, columns for `Dw`.
    pub fn industry_vectors(&self) -> DMatrix<f64> {
        match self.direction {
            Direction::Up => self.matrix.clone(),
            Direction::Dw => self.matrix.transpose(),
        }
    }
}

/// Input shares: each row divided by its sum; zero rows stay zero.
pub fn input_shares(fm: &FlowMatrix) -> ShareMatrix {
    let mut m = fm.matrix.clone();
    for mut row in m.row_iter_mut() {
        let s = row.sum();
        if s > 0.0 {
            row /= s;
        }
    }
    ShareMatrix {
        period: fm.period,
        layer: fm.layer,
        direction: Direction::Up,
        variant: DwVariant::default(),
        index: Arc::clone(&fm.index),
        matrix: m,
    }
}

/// Output shares under the chosen denominator; zero denominators give zeros.
pub fn output_shares(fm: &FlowMatrix, variant: DwVariant) -> ShareMatrix {
    let n = fm.n();
    let col_sums: Vec<f64> = fm.matrix.column_iter().map(|c| c.sum()).collect();
    let mut m = fm.matrix.clone();
    for i in 0..n {
        for j in 0..n {
            let denom = match variant {
                DwVariant::ColumnSum => col_sums[j],
                DwVariant::OwnOutput => col_sums[i],
            };
            m[(i, j)] = if denom > 0.0 { m[(i, j)] / denom } else { 0.0 };
        }
    }
    ShareMatrix {
        period: fm.period,
        layer: fm.layer,
        direction: Direction::Dw,
        variant,
        index: Arc::clone(&fm.index),
        matrix: m,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SizeNormalization {
    #[default]
    Raw,
    PerPeriodMean,
    GlobalSd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSizeVector {
    pub period: i32,
    pub layer: Layer,
    pub index: Arc<IndustryIndex>,
    pub values: Vec<f64>,
    pub normalization: SizeNormalization,
}

/// Node sizes: output (column sums) for the market layer, the supplied
/// per-industry stock for the innovation layer (absent codes are zero).
pub fn node_sizes(fm: &FlowMatrix, stock: Option<&BTreeMap<String, f64>>) -> Result<NodeSizeVector> {
    let values = match fm.layer {
        Layer::Market => fm.matrix.column_iter().map(|c| c.sum()).collect(),
        Layer::Innovation => {
            let stock = stock.ok_or_else(|| Error::LayerSizeSourceMissing(fm.layer.to_string()))?;
            fm.index
                .codes()
                .iter()
                .map(|c| stock.get(c).copied().unwrap_or(0.0))
                .collect()
        }
    };
    Ok(NodeSizeVector {
        period: fm.period,
        layer: fm.layer,
        index: Arc::clone(&fm.index),
        values,
        normalization: SizeNormalization::Raw,
    })
}

/// Normalizes size vectors. `PerPeriodMean` divides each vector by its own
/// cross-industry mean; `GlobalSd` divides all vectors by the standard
/// deviation pooled over industries and periods.
pub fn normalize_sizes(sizes: &[NodeSizeVector], mode: SizeNormalization) -> Result<Vec<NodeSizeVector>> {
    if sizes.is_empty() || sizes.iter().any(|s| s.values.is_empty()) {
        return Err(Error::InvalidParameter("empty size vector".into()));
    }
    let divisors: Vec<f64> = match mode {
        SizeNormalization::Raw => vec![1.0; sizes.len()],
        SizeNormalization::PerPeriodMean => sizes
            .iter()
            .map(|s| {
                let m = stats::mean(&s.values);
                if m > 0.0 {
                    Ok(m)
                } else {
                    Err(Error::ZeroDispersion(format!("period {} has zero mean size", s.period)))
                }
            })
            .collect::<Result<_>>()?,
        SizeNormalization::GlobalSd => {
            let pooled: Vec<f64> = sizes.iter().flat_map(|s| s.values.iter().copied()).collect();
            let sd = stats::sample_sd(&pooled);
            if !(sd > 0.0) {
                return Err(Error::ZeroDispersion("sizes have zero standard deviation".into()));
            }
            vec![sd; sizes.len()]
        }
    };
    Ok(sizes
        .iter()
        .zip(divisors)
        .map(|(s, d)| NodeSizeVector {
            values: s.values.iter().map(|v| v / d).collect(),
            normalization: mode,
            ..s.clone()
        })
        .collect())
}

/// One layer of one period with everything derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSnapshot {
    pub flows: FlowMatrix,
    pub up: ShareMatrix,
    pub dw: ShareMatrix,
    pub sizes: NodeSizeVector,
}

impl LayerSnapshot {
    pub fn derive(flows: FlowMatrix, stock: Option<&BTreeMap<String, f64>>, variant: DwVariant) -> Result<Self> {
        let sizes = node_sizes(&flows, stock)?;
        Ok(LayerSnapshot {
            up: input_shares(&flows),
            dw: output_shares(&flows, variant),
            sizes,
            flows,
        })
    }

    pub fn shares(&self, direction: Direction) -> &ShareMatrix {
        match direction {
            Direction::Up => &self.up,
            Direction::Dw => &self.dw,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodSnapshot {
    pub period: i32,
    pub market: LayerSnapshot,
    pub innovation: LayerSnapshot,
}

impl PeriodSnapshot {
    pub fn layer(&self, layer: Layer) -> &LayerSnapshot {
        match layer {
            Layer::Market => &self.market,
            Layer::Innovation => &self.innovation,
        }
    }
}

/// Time series of paired market/innovation layers over one shared index.
/// Industries absent in a period carry empty rows and columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DuplexPanelNetwork {
    pub index: Arc<IndustryIndex>,
    pub periods: Vec<PeriodSnapshot>,
}

impl DuplexPanelNetwork {
    /// Builds every (period, layer) independently. `innovation_stocks` supplies
    /// innovation-layer sizes per period.
    pub fn build(
        index: Arc<IndustryIndex>,
        periods: &[i32],
        market_edges: &[FlowEdge],
        innovation_edges: &[FlowEdge],
        innovation_stocks: &BTreeMap<i32, BTreeMap<String, f64>>,
        variant: DwVariant,
    ) -> Result<Self> {
        let mut periods = periods.to_vec();
        periods.sort_unstable();
        periods.dedup();
        let snapshots = periods
            .par_iter()
            .map(|&p| {
                let market = build_flow_matrix(market_edges, &index, p, Layer::Market)?;
                let innovation = build_flow_matrix(innovation_edges, &index, p, Layer::Innovation)?;
                let stock = innovation_stocks
                    .get(&p)
                    .ok_or_else(|| Error::LayerSizeSourceMissing(format!("innovation (period {p})")))?;
                Ok(PeriodSnapshot {
                    period: p,
                    market: LayerSnapshot::derive(market, None, variant)?,
                    innovation: LayerSnapshot::derive(innovation, Some(stock), variant)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DuplexPanelNetwork {
            index,
            periods: snapshots,
        })
    }

    pub fn period_labels(&self) -> Vec<i32> {
        self.periods.iter().map(|p| p.period).collect()
    }

    pub fn n(&self) -> usize {
        self.index.len()
    }
}

/// How a dense table is laid out on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DenseOrientation {
    /// Row `i`, column `j` holds `i`'s input from `j`.
    #[default]
    UserRows,
    /// Row `i`, column `j` holds what producer `i` delivers to `j`.
    ProducerRows,
}

fn fmt_num(v: f64) -> String {
    v.to_string()
}

pub fn write_dense_csv<W: Write>(out: W, index: &IndustryIndex, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["code".to_string()];
    header.extend(index.codes().iter().cloned());
    w.write_record(&header)?;
    for i in 0..m.nrows() {
        let mut rec = vec![index.code(i).to_string()];
        rec.extend((0..m.ncols()).map(|j| fmt_num(m[(i, j)])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a dense square table whose header row and first column carry the codes.
pub fn read_dense_csv<R: Read>(stream: R, orientation: DenseOrientation) -> Result<(IndustryIndex, DMatrix<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(stream);
    let headers = rdr.headers()?.clone();
    let col_codes: Vec<String> = headers.iter().skip(1).map(String::from).collect();
    let index = IndustryIndex::from_codes(col_codes.iter().cloned());
    if index.len() != col_codes.len() {
        return Err(Error::IndexMismatch("duplicate column codes".into()));
    }
    let n = index.len();
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut seen = 0usize;
    for record in rdr.records() {
        let record = record?;
        let code = record.get(0).unwrap_or("");
        let i = index.position(code).ok_or_else(|| Error::UnknownCode(code.to_string()))?;
        for (k, cell) in record.iter().skip(1).enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::NonNumericValue {
                line: record.position().map(|p| p.line()).unwrap_or(0),
                column: col_codes.get(k).cloned().unwrap_or_default(),
                value: cell.to_string(),
            })?;
            let j = index.position(&col_codes[k]).expect("column code indexed");
            m[(i, j)] = v;
        }
        seen += 1;
    }
    if seen != n {
        return Err(Error::DimensionMismatch(format!("{seen} rows for {n} columns")));
    }
    let m = match orientation {
        DenseOrientation::UserRows => m,
        DenseOrientation::ProducerRows => m.transpose(),
    };
    Ok((index, m))
}

/// Sparse `(row_code, col_code, value)` triplets of the nonzero entries.
pub fn write_triplets<W: Write>(out: W, index: &IndustryIndex, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["row", "col", "value"])?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let v = m[(i, j)];
            if v != 0.0 {
                w.write_record([index.code(i), index.code(j), &fmt_num(v)])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_triplets<R: Read>(stream: R, index: &IndustryIndex) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(stream);
    let n = index.len();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for record in rdr.records() {
        let record = record?;
        let pos = |k: usize| {
            let c = record.get(k).unwrap_or("");
            index.position(c).ok_or_else(|| Error::UnknownCode(c.to_string()))
        };
        let (i, j) = (pos(0)?, pos(1)?);
        let raw = record.get(2).unwrap_or("");
        m[(i, j)] = raw.parse().map_err(|_| Error::NonNumericValue {
            line: record.position().map(|p| p.line()).unwrap_or(0),
            column: "value".into(),
            value: raw.to_string(),
        })?;
    }
    Ok(m)
}

pub fn write_index<W: Write>(out: W, index: &IndustryIndex) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["code", "position"])?;
    for (i, c) in index.codes().iter().enumerate() {
        w.write_record([c.as_str(), &i.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_index<R: Read>(stream: R) -> Result<IndustryIndex> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(stream);
    let mut rows: Vec<(usize, String)> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let pos: usize = record
            .get(1)
            .unwrap_or("")
            .parse()
            .map_err(|_| Error::IndexMismatch("non-integer position".into()))?;
        rows.push((pos, record.get(0).unwrap_or("").to_string()));
    }
    rows.sort();
    let index = IndustryIndex::from_codes(rows.iter().map(|(_, c)| c.clone()));
    for (pos, code) in &rows {
        if index.position(code) != Some(*pos) {
            return Err(Error::IndexMismatch(format!("code {code} not at position {pos}")));
        }
    }
    Ok(index)
}
