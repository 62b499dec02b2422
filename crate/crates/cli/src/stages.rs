//! Pipeline stages. Each stage reads only artifacts listed in earlier stage
//! manifests (or configured external inputs) and writes its own directory.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use induplex::econ::{EstimationResult, EstimatorRegistry, FixedEffects, GmmOptions, Regressor, RegressionSpec, SeKind};
use induplex::ingest::{
    self, aggregate_edges, apply_concordance, aux_columns, AuxPanelRow, CitationScope, ConcordanceFormat, EdgeFormat,
    EventFormat, FlowEdge, Sides, Timing, UnmappedPolicy, WindowGrid,
};
use induplex::netcore::{normalize_sizes, Direction, DuplexPanelNetwork, DwVariant, IndustryIndex, Layer, SizeNormalization};
use induplex::netmetrics::{
    self, correlation_matrix, cosine_similarity, export_filtered_edges, network_stats, top_k_ranking, BinarizeRule,
    CentralityRegistry, NetworkStats, PageRank,
};
use induplex::panel::{assemble, duplex_columns, AssembleOptions, GroupRule, GroupSpec, KeyedColumn, PanelDataset, Side, TransformConfig};
use induplex::report::{self, fmt10, TableLayout};
use induplex::spill::{threshold_links, BinarySpillover, SpilloverRegistry, SpilloverRule};
use induplex::synthlab::{self, DgpSpec, DuplexSpec};

use crate::config::PipelineConfig;
use crate::error::{CliError, Context};
use crate::manifest::{StageRecord, Workspace};

type Res<T> = Result<T, CliError>;

fn to_bytes(stage: &str, key: &str, f: impl FnOnce(&mut Vec<u8>) -> induplex::Result<()>) -> Res<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf).at(stage, key)?;
    Ok(buf)
}

fn table_bytes(stage: &str, key: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Res<Vec<u8>> {
    to_bytes(stage, key, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
        Ok(())
    })
}

fn read_table(stage: &str, key: &str, bytes: &[u8], delimiter: u8) -> Res<Vec<csv::StringRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    rdr.records()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| CliError::from_core(stage, key, e.into()))
}

fn cell(stage: &str, key: &str, rec: &csv::StringRecord, k: usize) -> Res<String> {
    rec.get(k).map(str::to_string).ok_or_else(|| {
        CliError::from_core(stage, key, induplex::Error::MissingColumn(format!("column {}", k + 1)))
    })
}

fn num<T: std::str::FromStr>(stage: &str, key: &str, rec: &csv::StringRecord, k: usize) -> Res<T> {
    let raw = cell(stage, key, rec, k)?;
    raw.parse().map_err(|_| {
        CliError::from_core(
            stage,
            key,
            induplex::Error::NonNumericValue {
                line: rec.position().map(|p| p.line()).unwrap_or(0),
                column: format!("column {}", k + 1),
                value: raw.clone(),
            },
        )
    })
}

/// Reads a configured external file and records it in the stage manifest.
fn external(cfg: &PipelineConfig, rec: &mut StageRecord, key: &str, value: &Option<String>) -> Res<Option<Vec<u8>>> {
    match cfg.input(key, value)? {
        None => Ok(None),
        Some(p) => {
            let bytes = std::fs::read(&p).at(&rec.stage, key)?;
            rec.external(key, value.as_deref().unwrap_or(""), &bytes);
            Ok(Some(bytes))
        }
    }
}

fn policy(cfg: &PipelineConfig) -> UnmappedPolicy {
    match cfg.ingest.unmapped.as_str() {
        "pass_through" => UnmappedPolicy::PassThrough,
        _ => UnmappedPolicy::Strict,
    }
}

fn dw_variant(cfg: &PipelineConfig) -> DwVariant {
    match cfg.network.dw_variant.as_str() {
        "own_output" => DwVariant::OwnOutput,
        _ => DwVariant::ColumnSum,
    }
}

fn window_grid(cfg: &PipelineConfig) -> Res<Option<WindowGrid>> {
    let timing = match cfg.ingest.timing.as_str() {
        "posterior" => Timing::Posterior,
        _ => Timing::Prior,
    };
    match (cfg.ingest.first_anchor, cfg.ingest.last_anchor) {
        (Some(a), Some(b)) => WindowGrid::regular(cfg.ingest.window_length, a, b, timing)
            .map(Some)
            .map_err(|e| CliError::config("ingest.first_anchor", &e.to_string())),
        (None, None) => Ok(None),
        _ => Err(CliError::config("ingest.last_anchor", "first_anchor and last_anchor go together")),
    }
}

/// Relabels edge years with their window anchor; edges outside every window are dropped.
fn windowed(edges: Vec<FlowEdge>, grid: Option<&WindowGrid>) -> Vec<FlowEdge> {
    match grid {
        None => aggregate_edges(&edges),
        Some(g) => {
            let moved: Vec<FlowEdge> = edges
                .into_iter()
                .filter_map(|mut e| {
                    g.window_of(e.period).map(|a| {
                        e.period = a;
                        e
                    })
                })
                .collect();
            aggregate_edges(&moved)
        }
    }
}

fn write_stocks(stocks: &BTreeMap<i32, BTreeMap<String, f64>>) -> Res<Vec<u8>> {
    let rows = stocks
        .iter()
        .flat_map(|(p, m)| m.iter().map(move |(c, v)| vec![c.clone(), p.to_string(), v.to_string()]));
    table_bytes("ingest", "stocks", &["industry", "period", "stock"], rows)
}

fn parse_stocks(stage: &str, key: &str, bytes: &[u8], delimiter: u8) -> Res<BTreeMap<i32, BTreeMap<String, f64>>> {
    let mut out: BTreeMap<i32, BTreeMap<String, f64>> = BTreeMap::new();
    for r in read_table(stage, key, bytes, delimiter)? {
        let v: f64 = num(stage, key, &r, 2)?;
        if !(v.is_finite() && v >= 0.0) {
            return Err(CliError::from_core(
                stage,
                key,
                induplex::Error::NegativeValue {
                    line: r.position().map(|p| p.line()).unwrap_or(0),
                    value: v,
                },
            ));
        }
        out.entry(num(stage, key, &r, 1)?).or_default().insert(cell(stage, key, &r, 0)?, v);
    }
    Ok(out)
}

fn parse_pairs(stage: &str, key: &str, bytes: &[u8]) -> Res<BTreeMap<String, String>> {
    read_table(stage, key, bytes, b',')?
        .iter()
        .map(|r| Ok((cell(stage, key, r, 0)?, cell(stage, key, r, 1)?)))
        .collect()
}

pub fn simulate(cfg: &PipelineConfig, ws: &Workspace) -> Res<()> {
    const S: &str = "simulate";
    let mut rec = ws.begin(S)?;
    rec.params(cfg.parameters(S));
    let sim = &cfg.simulate;
    match sim.kind.as_str() {
        "montecarlo" => {
            let dgp = DgpSpec {
                n: sim.n,
                t: sim.t,
                rho: sim.rho,
                fe_sd: sim.fe_sd,
                noise_sd: sim.noise_sd,
                beta: sim.beta.clone(),
                seed: sim.seed,
                ..Default::default()
            };
            let mut regs = vec![Regressor::DependentLag(1)];
            regs.extend((1..=sim.beta.len()).map(|k| Regressor::lagged(&format!("x{k}"), 0)));
            let mut spec = RegressionSpec::new("y", regs, &sim.estimator);
            spec.gmm = gmm_options(cfg);
            spec.se = se_kind(cfg);
            spec.fixed_effects = fixed_effects(cfg);
            let registry = EstimatorRegistry::with_defaults();
            let est = registry
                .get(&sim.estimator)
                .map_err(|e| CliError::config("simulate.estimator", &e.to_string()))?;
            let summary = synthlab::montecarlo(est, &spec, &dgp, "y_lag1", sim.rho, sim.reps, sim.seed).at(S, "montecarlo")?;
            let row = vec![
                "y_lag1".to_string(),
                fmt10(sim.rho),
                fmt10(summary.mean),
                fmt10(summary.sd),
                fmt10(summary.mean - sim.rho),
                fmt10(summary.coverage),
                sim.reps.to_string(),
                summary.errors.to_string(),
            ];
            let bytes = table_bytes(
                S,
                "montecarlo.csv",
                &["parameter", "truth", "mean", "sd", "bias", "coverage", "reps", "errors"],
                [row],
            )?;
            ws.write(&mut rec, "montecarlo.csv", &bytes)?;
            let rows = summary.estimates.iter().enumerate().map(|(k, b)| vec![(k + 1).to_string(), fmt10(*b)]);
            let bytes = table_bytes(S, "estimates.csv", &["replication", "estimate"], rows)?;
            ws.write(&mut rec, "estimates.csv", &bytes)?;
        }
        _ => {
            let spec = DuplexSpec {
                n: sim.n,
                periods: sim.periods.clone(),
                density: sim.density,
                seed: sim.seed,
            };
            let d = synthlab::gen_random_duplex_inputs(&spec).at(S, "duplex")?;
            let fmt = EdgeFormat::default();
            let m = to_bytes(S, "market_edges.csv", |b| ingest::write_flow_edgelist(b, &d.market_edges, &fmt))?;
            ws.write(&mut rec, "market_edges.csv", &m)?;
            let i = to_bytes(S, "innovation_edges.csv", |b| ingest::write_flow_edgelist(b, &d.innovation_edges, &fmt))?;
            ws.write(&mut rec, "innovation_edges.csv", &i)?;
            ws.write(&mut rec, "stocks.csv", &write_stocks(&d.stocks)?)?;
            let a = to_bytes(S, "aux.csv", |b| ingest::write_aux_panel(b, &d.aux))?;
            ws.write(&mut rec, "aux.csv", &a)?;
        }
    }
    ws.finish(rec)
}

pub fn ingest(cfg: &PipelineConfig, ws: &Workspace) -> Res<()> {
    const S: &str = "ingest";
    let mut rec = ws.begin(S)?;
    rec.params(cfg.parameters(S));
    let delimiter = cfg.ingest.delimiter as u8;
    let policy = policy(cfg);
    let grid = window_grid(cfg)?;
    let fmt = EdgeFormat {
        delimiter,
        ..Default::default()
    };
    let conc_fmt = ConcordanceFormat {
        delimiter,
        ..Default::default()
    };

    cfg.required("paths.market_edges", &cfg.paths.market_edges)?;
    let bytes = external(cfg, &mut rec, "paths.market_edges", &cfg.paths.market_edges)?.unwrap_or_default();
    let mut market = ingest::parse_flow_edgelist(&bytes[..], &fmt).at(S, "paths.market_edges")?;
    if let Some(b) = external(cfg, &mut rec, "paths.market_concordance", &cfg.paths.market_concordance)? {
        let map = ingest::parse_concordance(&b[..], &conc_fmt).at(S, "paths.market_concordance")?;
        market = apply_concordance(&market, &map, Sides::Both, policy).at(S, "paths.market_concordance")?;
    }
    let market = windowed(market, grid.as_ref());

    let patent_map = match external(cfg, &mut rec, "paths.patent_concordance", &cfg.paths.patent_concordance)? {
        Some(b) => Some(ingest::parse_concordance(&b[..], &conc_fmt).at(S, "paths.patent_concordance")?),
        None => None,
    };
    let events = match external(cfg, &mut rec, "paths.events", &cfg.paths.events)? {
        Some(b) => {
            let ev_fmt = EventFormat {
                delimiter,
                ..Default::default()
            };
            let mut events = ingest::parse_events(&b[..], &ev_fmt).at(S, "paths.events")?;
            let citations = match external(cfg, &mut rec, "paths.citations", &cfg.paths.citations)? {
                Some(c) => ingest::parse_citations(&c[..], delimiter).at(S, "paths.citations")?,
                None => Vec::new(),
            };
            if !citations.is_empty() {
                let scope = match (cfg.ingest.citation_scope.as_str(), grid.as_ref()) {
                    ("within_window", Some(g)) => CitationScope::WithinWindow(g),
                    ("within_window", None) => {
                        return Err(CliError::config("ingest.citation_scope", "within_window needs a window grid"))
                    }
                    _ => CitationScope::AllTime,
                };
                ingest::count_forward_citations(&mut events, &citations, scope);
            }
            Some((events, citations))
        }
        None => None,
    };

    let innovation = match external(cfg, &mut rec, "paths.innovation_edges", &cfg.paths.innovation_edges)? {
        Some(b) => windowed(ingest::parse_flow_edgelist(&b[..], &fmt).at(S, "paths.innovation_edges")?, grid.as_ref()),
        None => match (&events, grid.as_ref()) {
            (Some((ev, cit)), Some(g)) if !cit.is_empty() => {
                ingest::citation_flow_edges(ev, cit, g, patent_map.as_ref(), policy).at(S, "paths.citations")?
            }
            _ => {
                return Err(CliError::config(
                    "paths.innovation_edges",
                    "set innovation_edges, or events and citations with a window grid",
                ))
            }
        },
    };

    let stocks = match external(cfg, &mut rec, "paths.stocks", &cfg.paths.stocks)? {
        Some(b) => parse_stocks(S, "paths.stocks", &b, delimiter)?,
        None => match (&events, grid.as_ref()) {
            (Some((ev, _)), Some(g)) => ingest::window_events(ev, g, patent_map.as_ref(), policy)
                .at(S, "paths.events")?
                .into_iter()
                .map(|(a, m)| (a, m.into_iter().map(|(c, s)| (c, s.weighted)).collect()))
                .collect(),
            _ => return Err(CliError::config("paths.stocks", "set stocks, or events with a window grid")),
        },
    };

    let periods: Vec<i32> = if !cfg.ingest.periods.is_empty() {
        cfg.ingest.periods.clone()
    } else if let Some(g) = &grid {
        g.anchors().to_vec()
    } else {
        market.iter().map(|e| e.period).collect::<BTreeSet<_>>().into_iter().collect()
    };
    let pset: BTreeSet<i32> = periods.iter().copied().collect();
    let market: Vec<FlowEdge> = market.into_iter().filter(|e| pset.contains(&e.period)).collect();
    let innovation: Vec<FlowEdge> = innovation.into_iter().filter(|e| pset.contains(&e.period)).collect();
    let codes: BTreeSet<String> = market
        .iter()
        .chain(&innovation)
        .flat_map(|e| [e.source_code.clone(), e.target_code.clone()])
        .collect();
    if codes.is_empty() {
        return Err(CliError::from_core(S, "paths.market_edges", induplex::Error::DegenerateGraph));
    }
    let stocks: BTreeMap<i32, BTreeMap<String, f64>> = periods
        .iter()
        .map(|p| {
            let m = stocks.get(p).map(|m| {
                m.iter()
                    .filter(|(c, _)| codes.contains(*c))
                    .map(|(c, v)| (c.clone(), *v))
                    .collect()
            });
            (*p, m.unwrap_or_default())
        })
        .collect();

    let aux = match external(cfg, &mut rec, "paths.aux", &cfg.paths.aux)? {
        Some(b) => {
            let mut rows = ingest::parse_aux_panel(&b[..], delimiter).at(S, "paths.aux")?;
            if cfg.ingest.deflate && rows.iter().any(|r| r.values.contains_key(aux_columns::DEFLATOR)) {
                let present: Vec<&str> = aux_columns::MONETARY
                    .iter()
                    .copied()
                    .filter(|c| rows.iter().any(|r| r.values.contains_key(*c)))
                    .collect();
                rows = ingest::deflate_aux(&rows, &present).at(S, "paths.aux")?;
            }
            let before = rows.len();
            rows.retain(|r| codes.contains(&r.industry) && pset.contains(&r.period));
            rec.param("ingest.aux_rows_outside_grid", before - rows.len());
            rows
        }
        None => Vec::new(),
    };

    let out_fmt = EdgeFormat::default();
    ws.write(&mut rec, "market_edges.csv", &to_bytes(S, "market_edges.csv", |b| ingest::write_flow_edgelist(b, &market, &out_fmt))?)?;
    ws.write(
        &mut rec,
        "innovation_edges.csv",
        &to_bytes(S, "innovation_edges.csv", |b| ingest::write_flow_edgelist(b, &innovation, &out_fmt))?,
    )?;
    ws.write(&mut rec, "stocks.csv", &write_stocks(&stocks)?)?;
    ws.write(&mut rec, "aux.csv", &to_bytes(S, "aux.csv", |b| ingest::write_aux_panel(b, &aux))?)?;
    ws.write(&mut rec, "index.csv", &table_bytes(S, "index.csv", &["code"], codes.iter().map(|c| vec![c.clone()]))?)?;
    ws.write(&mut rec, "periods.csv", &table_bytes(S, "periods.csv", &["period"], periods.iter().map(|p| vec![p.to_string()]))?)?;
    ws.finish(rec)
}

/// Network rebuilt from the ingest artifacts.
fn load_network(cfg: &PipelineConfig, ws: &Workspace, rec: &mut StageRecord) -> Res<DuplexPanelNetwork> {
    let stage = rec.stage.clone();
    let codes: Vec<String> = read_table(&stage, "ingest/index.csv", &ws.read(rec, "ingest/index.csv")?, b',')?
        .iter()
        .map(|r| cell(&stage, "ingest/index.csv", r, 0))
        .collect::<Res<_>>()?;
    let periods: Vec<i32> = read_table(&stage, "ingest/periods.csv", &ws.read(rec, "ingest/periods.csv")?, b',')?
        .iter()
        .map(|r| num(&stage, "ingest/periods.csv", r, 0))
        .collect::<Res<_>>()?;
    let fmt = EdgeFormat::default();
    let market = ingest::parse_flow_edgelist(&ws.read(rec, "ingest/market_edges.csv")?[..], &fmt).at(&stage, "ingest/market_edges.csv")?;
    let innovation =
        ingest::parse_flow_edgelist(&ws.read(rec, "ingest/innovation_edges.csv")?[..], &fmt).at(&stage, "ingest/innovation_edges.csv")?;
    let stocks = parse_stocks(&stage, "ingest/stocks.csv", &ws.read(rec, "ingest/stocks.csv")?, b',')?;
    let index = Arc::new(IndustryIndex::from_codes(codes));
    DuplexPanelNetwork::build(index, &periods, &market, &innovation, &stocks, dw_variant(cfg)).at(&stage, "network")
}

pub fn build(cfg: &PipelineConfig, ws: &Workspace) -> Res<()> {
    const S: &str = "build";
    let mut rec = ws.begin(S)?;
    rec.params(cfg.parameters("network"));
    let net = load_network(cfg, ws, &mut rec)?;
    let mut shares = Vec::new();
    let mut sizes = Vec::new();
    let mut summary = Vec::new();
    for snap in &net.periods {
        for layer in Layer::BOTH {
            let ls = snap.layer(layer);
            for dir in Direction::BOTH {
                let m = &ls.shares(dir).matrix;
                for j in 0..m.ncols() {
                    for i in 0..m.nrows() {
                        if m[(i, j)] != 0.0 {
                            shares.push(vec![
                                snap.period.to_string(),
                                layer.to_string(),
                                dir.to_string(),
                                net.index.code(i).to_string(),
                                net.index.code(j).to_string(),
                                fmt10(m[(i, j)]),
                            ]);
                        }
                    }
                }
            }
            for (i, v) in ls.sizes.values.iter().enumerate() {
                sizes.push(vec![snap.period.to_string(), layer.to_string(), net.index.code(i).to_string(), fmt10(*v)]);
            }
            let f = &ls.flows.matrix;
            let links = (0..f.nrows())
                .flat_map(|i| (0..f.ncols()).map(move |j| (i, j)))
                .filter(|&(i, j)| i != j && f[(i, j)] > 0.0)
                .count();
            summary.push(vec![snap.period.to_string(), layer.to_string(), links.to_string(), fmt10(f.sum())]);
        }
    }
    ws.write(
        &mut rec,
        "shares.csv",
        &table_bytes(S, "shares.csv", &["period", "layer", "direction", "industry", "partner", "share"], shares)?,
    )?;
    ws.write(&mut rec, "sizes.csv", &table_bytes(S, "sizes.csv", &["period", "layer", "industry", "size"], sizes)?)?;
    ws.write(
        &mut rec,
        "summary.csv",
        &table_bytes(S, "summary.csv", &["period", "layer", "links", "total_flow"], summary)?,
    )?;
    ws.finish(rec)
}

pub fn metrics(cfg: &PipelineConfig, ws: &Workspace) -> Res<()> {
    const S: &str = "metrics";
    let mut rec = ws.begin(S)?;
    rec.params(cfg.parameters(S));
    let mc = &cfg.metrics;
    let registry = CentralityRegistry::with_defaults(mc.damping);
    let mut selected = Vec::new();
    for name in &mc.centralities {
        selected.push(
            registry
                .get(name)
                .map_err(|e| CliError::config("metrics.centralities", &e.to_string()))?,
        );
    }
    let labels = match external(cfg, &mut rec, "paths.labels", &cfg.paths.labels)? {
        Some(b) => parse_pairs(S, "paths.labels", &b)?,
        None => BTreeMap::new(),
    };
    let net = load_network(cfg, ws, &mut rec)?;
    let code = |i: usize| net.index.code(i).to_string();

    let mut cent_rows = Vec::new();
    let mut stat_rows = Vec::new();
    let mut pooled: BTreeMap<(Layer, Direction), Vec<Vec<f64>>> = BTreeMap::new();
    let rule = BinarizeRule {
        threshold: mc.binarize_threshold,
        percent: mc.percent_weights,
    };
    for snap in &net.periods {
        for layer in Layer::BOTH {
            let ls = snap.layer(layer);
            for dir in Direction::BOTH {
                let w = ls.shares(dir);
                let acc = pooled.entry((layer, dir)).or_insert_with(|| vec![Vec::new(); selected.len()]);
                for (k, c) in selected.iter().enumerate() {
                    let v = c.compute(w).at(S, &format!("{} {layer} {dir} {}", c.name(), snap.period))?;
                    for (i, x) in v.values.iter().enumerate() {
                        cent_rows.push(vec![snap.period.to_string(), layer.to_string(), dir.to_string(), c.name().to_string(), code(i), fmt10(*x)]);
                    }
                    acc[k].extend(v.values);
                }
                let st = network_stats(w, &ls.sizes, &rule).at(S, &format!("network_stats {layer} {dir} {}", snap.period))?;
                let mut row = vec![snap.period.to_string(), layer.to_string(), dir.to_string()];
                row.extend(st.values().iter().map(|v| fmt10(*v)));
                stat_rows.push(row);
            }
        }
    }
    ws.write(
        &mut rec,
        "centrality.csv",
        &table_bytes(S, "centrality.csv", &["period", "layer", "direction", "kind", "industry", "value"], cent_rows)?,
    )?;
    let mut header = vec!["period", "layer", "direction"];
    header.extend(NetworkStats::FIELDS);
    ws.write(&mut rec, "network_stats.csv", &table_bytes(S, "network_stats.csv", &header, stat_rows)?)?;

    let mut corr_rows = Vec::new();
    for ((layer, dir), vectors) in &pooled {
        let named: Vec<(&str, &[f64])> = selected.iter().zip(vectors).map(|(c, v)| (c.name(), v.as_slice())).collect();
        let m = correlation_matrix(&named);
        for a in 0..named.len() {
            for b in 0..named.len() {
                corr_rows.push(vec![layer.to_string(), dir.to_string(), named[a].0.to_string(), named[b].0.to_string(), fmt10(m[(a, b)])]);
            }
        }
    }
    ws.write(
        &mut rec,
        "centrality_correlation.csv",
        &table_bytes(S, "centrality_correlation.csv", &["layer", "direction", "kind_a", "kind_b", "correlation"], corr_rows)?,
    )?;

    for layer in Layer::BOTH {
        let sizes: Vec<_> = net.periods.iter().map(|p| p.layer(layer).sizes.clone()).collect();
        let normalized = normalize_sizes(&sizes, SizeNormalization::PerPeriodMean).at(S, &format!("sizes {layer}"))?;
        let tables = normalized
            .iter()
            .map(|s| top_k_ranking(s, mc.ranking_k, &labels))
            .collect::<induplex::Result<Vec<_>>>()
            .at(S, "metrics.ranking_k")?;
        let name = format!("ranking_{layer}.csv");
        let bytes = to_bytes(S, &name, |b| netmetrics::write_ranking_csv(b, &tables, fmt10))?;
        ws.write(&mut rec, &name, &bytes)?;
    }

    if mc.similarity {
        let mut rows = Vec::new();
        for snap in &net.periods {
            for layer in Layer::BOTH {
                let sim = cosine_similarity(&snap.layer(layer).up);
                for a in 0..sim.matrix.nrows() {
                    for b in (a + 1)..sim.matrix.ncols() {
                        let v = sim.matrix[(a, b)];
                        if v > 0.0 {
                            rows.push(vec![snap.period.to_string(), layer.to_string(), code(a), code(b), fmt10(v)]);
                        }
                    }
                }
            }
        }
        ws.write(
            &mut rec,
            "similarity.csv",
            &table_bytes(S, "similarity.csv", &["period", "layer", "industry_a", "industry_b", "cosine"], rows)?,
        )?;
    }

    let mut edge_rows = Vec::new();
    let window = net.period_labels();
    for layer in Layer::BOTH {
        for dir in Direction::BOTH {
            let all: Vec<_> = net.periods.iter().map(|p| p.layer(layer).shares(dir).clone()).collect();
            for e in export_filtered_edges(&all, &window).at(S, &format!("filtered_edges {layer} {dir}"))? {
                edge_rows.push(vec![layer.to_string(), dir.to_string(), e.source, e.target, fmt10(e.weight)]);
            }
        }
    }
    ws.write(
        &mut rec,
        "filtered_edges.csv",
        &table_bytes(S, "filtered_edges.csv", &["layer", "direction", "source", "target", "weight"], edge_rows)?,
    )?;
    ws.finish(rec)
}

fn spill_rule(cfg: &PipelineConfig) -> Res<Box<dyn SpilloverRule>> {
    let registry = SpilloverRegistry::with_defaults(cfg.spill.threshold);
    registry
        .get(&cfg.spill.rule)
        .map_err(|e| CliError::config("spill.rule", &e.to_string()))?;
    Ok(match cfg.spill.rule.as_str() {
        "weighted" => Box::new(induplex::spill::WeightedSpillover),
        _ => Box::new(BinarySpillover {
            threshold: cfg.spill.threshold,
        }),
    })
}

pub fn spill(cfg: &PipelineConfig, ws: &Workspace) -> Res<()> {
    const S: &str = "spill";
    let mut rec = ws.begin(S)?;
    rec.params(cfg.parameters(S));
    let sc = &cfg.spill;
    let registry = SpilloverRegistry::with_defaults(sc.threshold);
    let net = load_network(cfg, ws, &mut rec)?;
    let code = |i: usize| net.index.code(i).to_string();
    let mut link_rows = Vec::new();
    let mut count_rows = Vec::new();
    let mut spill_rows = Vec::new();
    for snap in &net.periods {
        for layer in Layer::BOTH {
            let ls = snap.layer(layer);
            for dir in Direction::BOTH {
                let w = ls.shares(dir);
                let key = format!("{layer} {dir} {}", snap.period);
                let prefix = || vec![snap.period.to_string(), layer.to_string(), dir.to_string()];
                let links = threshold_links(w, sc.threshold).at(S, &key)?;
                let counts: Vec<usize> = (0..links.links.nrows()).map(|i| links.row_count(i)).collect();
                for i in 0..links.links.nrows() {
                    for j in 0..links.links.ncols() {
                        if links.links[(i, j)] != 0.0 {
                            let mut r = prefix();
                            r.extend([code(i), code(j)]);
                            link_rows.push(r);
                        }
                    }
                }
                let mut r = prefix();
                r.extend([
                    counts.iter().max().copied().unwrap_or(0).to_string(),
                    fmt10(counts.iter().sum::<usize>() as f64 / counts.len().max(1) as f64),
                ]);
                count_rows.push(r);
                let mut variants: Vec<(String, Vec<f64>)> = Vec::new();
                for name in registry.names() {
                    let rule = registry.get(name).at(S, name)?;
                    variants.push((name.to_string(), rule.compute(w, &ls.sizes).at(S, &key)?.values));
                }
                for t in &sc.robustness_thresholds {
                    let v = BinarySpillover { threshold: *t }.compute(w, &ls.sizes).at(S, &key)?;
                    variants.push((format!("binary_{}", fmt10(*t)), v.values));
                }
                for (name, values) in variants {
                    for (i, v) in values.iter().enumerate() {
                        let mut r = prefix();
                        r.extend([name.clone(), code(i), fmt10(*v)]);
                        spill_rows.push(r);
                    }
                }
            }
        }
    }
    ws.write(
        &mut rec,
        "links.csv",
        &table_bytes(S, "links.csv", &["period", "layer", "direction", "industry", "partner"], link_rows)?,
    )?;
    ws.write(
        &mut rec,
        "link_counts.csv",
        &table_bytes(S, "link_counts.csv", &["period", "layer", "direction", "max_links", "mean_links"], count_rows)?,
    )?;
    ws.write(
        &mut rec,
        "spillovers.csv",
        &table_bytes(S, "spillovers.csv", &["period", "layer", "direction", "variant", "industry", "value"], spill_rows)?,
    )?;
    ws.finish(rec)
}

pub fn panel(cfg: &PipelineConfig, ws: &Workspace) -> Res<()> {
    const S: &str = "panel";
    let mut rec = ws.begin(S)?;
    rec.params(cfg.parameters(S));
    rec.params(cfg.parameters("spill"));
    rec.param("metrics.damping", cfg.metrics.damping);
    let rule = spill_rule(cfg)?;
    let net = load_network(cfg, ws, &mut rec)?;
    let mut sources = duplex_columns(&net, &PageRank::new(cfg.metrics.damping), rule.as_ref()).at(S, "network columns")?;
    let aux: Vec<AuxPanelRow> = ingest::parse_aux_panel(&ws.read(&mut rec, "ingest/aux.csv")?[..], b',').at(S, "ingest/aux.csv")?;
    let mut aux_cols: BTreeMap<String, KeyedColumn> = BTreeMap::new();
    for r in &aux {
        for (name, v) in &r.values {
            aux_cols
                .entry(name.clone())
                .or_insert_with(|| KeyedColumn::new(name.clone()))
                .values
                .insert((r.industry.clone(), r.period), *v);
        }
    }
    sources.extend(aux_cols.into_values());
    let opts = AssembleOptions {
        balanced: cfg.panel.balanced,
        positive_columns: cfg.panel.positive_columns.clone(),
    };
    let periods = net.period_labels();
    let raw = assemble(net.index.codes(), &periods, &sources, &opts).at(S, "assemble")?;
    if raw.is_empty() {
        return Err(CliError::from_core(S, "assemble", induplex::Error::EmptyCell("panel".into())));
    }
    let columns: Vec<String> = raw
        .column_names()
        .into_iter()
        .filter(|c| !cfg.panel.untransformed.iter().any(|u| u == c))
        .map(str::to_string)
        .collect();
    let exempt: Vec<&str> = cfg.panel.log_exempt.iter().map(String::as_str).collect();
    let tcfg = TransformConfig::standard(&columns, &exempt, cfg.panel.iqr_multiplier);
    let mut panel = raw.clone();
    panel.transform(&tcfg).at(S, "transform")?;
    let replayed = panel.replay(&raw).at(S, "replay")?;
    if replayed.keys != panel.keys || format!("{:?}", replayed.columns) != format!("{:?}", panel.columns) {
        return Err(CliError::from_core(
            S,
            "replay",
            induplex::Error::InvalidParameter("provenance replay does not reproduce the panel".into()),
        ));
    }
    rec.param("panel.rows_raw", raw.len());
    rec.param("panel.rows", panel.len());
    ws.write(&mut rec, "raw.csv", &to_bytes(S, "raw.csv", |b| raw.write_csv(b))?)?;
    ws.write(&mut rec, "panel.csv", &to_bytes(S, "panel.csv", |b| panel.write_csv(b))?)?;
    ws.write(&mut rec, "provenance.csv", &to_bytes(S, "provenance.csv", |b| panel.write_provenance(b))?)?;
    ws.write(&mut rec, "removals.csv", &to_bytes(S, "removals.csv", |b| panel.write_removals(b))?)?;
    ws.finish(rec)
}

fn gmm_options(cfg: &PipelineConfig) -> GmmOptions {
    let e = &cfg.estimate;
    GmmOptions {
        max_instrument_lag: e.max_instrument_lag,
        min_instrument_lag: e.min_instrument_lag,
        collapsed: e.collapsed,
        steps: e.steps,
        windmeijer: e.windmeijer,
        time_dummies: e.time_dummies,
    }
}

fn se_kind(cfg: &PipelineConfig) -> SeKind {
    match cfg.estimate.se.as_str() {
        "classical" => SeKind::Classical,
        _ => SeKind::Robust,
    }
}

fn fixed_effects(cfg: &PipelineConfig) -> FixedEffects {
    match cfg.estimate.fixed_effects.as_str() {
        "industry" => FixedEffects::Industry,
        "time" => FixedEffects::Time,
        _ => FixedEffects::Both,
    }
}

/// `A_tau_lag1` -> lagged column; `<dependent>_lagK` -> lagged dependent variable.
pub fn parse_regressor(label: &str, dependent: &str) -> Regressor {
    if let Some((base, k)) = label.rsplit_once("_lag") {
        if let Ok(k) = k.parse::<usize>() {
            return if base == dependent && k > 0 {
                Regressor::DependentLag(k)
            } else {
                Regressor::lagged(base, k)
            };
        }
    }
    Regressor::lagged(label, 0)
}

pub fn layout(cfg: &PipelineConfig) -> TableLayout {
    let e = &cfg.estimate;
    let mut l = match e.layout.as_str() {
        "single" => report::single_layout(RegressionSpec::new(
            &e.dependent,
            e.regressors.iter().map(|r| parse_regressor(r, &e.dependent)).collect(),
            &e.estimator,
        )),
        _ => {
            let controls: Vec<&str> = e.controls.iter().map(String::as_str).collect();
            report::table3_layout(&e.estimator, &gmm_options(cfg), &controls)
        }
    };
    for c in &mut l.cells {
        c.spec.gmm = gmm_options(cfg);
        c.spec.se = se_kind(cfg);
        c.spec.fixed_effects = fixed_effects(cfg);
        c.spec.weights = e.weights.clone();
    }
    l
}

fn group_specs(cfg: &PipelineConfig, rec: &mut StageRecord) -> Res<Vec<GroupSpec>> {
    let mut classes = None;
    let mut out = Vec::new();
    for (k, g) in cfg.groups.iter().enumerate() {
        let key = format!("groups[{k}]");
        let need = |v: &Option<String>, what: &str| -> Res<String> {
            v.clone().ok_or_else(|| CliError::config(&format!("{key}.{what}"), "required for this rule"))
        };
        if g.name.is_empty() || g.name == "all" || g.name.contains(['/', '\\']) {
            return Err(CliError::config(&format!("{key}.name"), "group names must be nonempty path-safe and not `all`"));
        }
        let rule = match g.rule.as_str() {
            "median_split" => GroupRule::MedianSplit {
                column: need(&g.column, "column")?,
                side: match g.side.as_deref() {
                    Some("above") => Side::Above,
                    Some("at_or_below") => Side::AtOrBelow,
                    _ => return Err(CliError::config(&format!("{key}.side"), "must be above or at_or_below")),
                },
            },
            "code_prefix" => GroupRule::CodePrefix(need(&g.prefix, "prefix")?),
            "class" => {
                if classes.is_none() {
                    cfg.required("paths.classes", &cfg.paths.classes)?;
                    let b = external(cfg, rec, "paths.classes", &cfg.paths.classes)?.unwrap_or_default();
                    classes = Some(parse_pairs(&rec.stage, "paths.classes", &b)?);
                }
                GroupRule::ExternalClass {
                    class: need(&g.class, "class")?,
                    classes: classes.clone().unwrap_or_default(),
                }
            }
            "period_window" => match (g.first, g.last) {
                (Some(first), Some(last)) => GroupRule::PeriodWindow { first, last },
                _ => return Err(CliError::config(&key, "period_window needs first and last")),
            },
            other => return Err(CliError::config(&format!("{key}.rule"), &format!("unknown group rule `{other}`"))),
        };
        out.push(GroupSpec {
            name: g.name.clone(),
            rule,
        });
    }
    Ok(out)
}

pub fn estimate(cfg: &PipelineConfig, ws: &Workspace) -> Res<()> {
    const S: &str = "estimate";
    let mut rec = ws.begin(S)?;
    rec.params(cfg.parameters(S));
    let registry = EstimatorRegistry::with_defaults();
    registry
        .get(&cfg.estimate.estimator)
        .map_err(|e| CliError::config("estimate.estimator", &e.to_string()))?;
    let layout = layout(cfg);
    let groups = group_specs(cfg, &mut rec)?;
    let full = PanelDataset::read_csv(&ws.read(&mut rec, "panel/panel.csv")?[..]).at(S, "panel/panel.csv")?;
    let mut panels = vec![("all".to_string(), full.clone())];
    for g in &groups {
        panels.push((g.name.clone(), full.subset(g).at(S, &g.name)?));
    }
    for (name, panel) in &panels {
        let mut results: BTreeMap<String, EstimationResult> = BTreeMap::new();
        for c in &layout.cells {
            let r = registry.run(&c.spec, panel).at(S, &format!("{name}:{}", c.id))?;
            results.insert(c.id.clone(), r);
        }
        let (mut cb, mut db) = (Vec::new(), Vec::new());
        report::write_results(&mut cb, &mut db, &results, fmt10).at(S, name)?;
        ws.write(&mut rec, &format!("{name}/coefficients.csv"), &cb)?;
        ws.write(&mut rec, &format!("{name}/diagnostics.csv"), &db)?;
    }
    ws.finish(rec)
}

pub fn report(cfg: &PipelineConfig, ws: &Workspace) -> Res<()> {
    const S: &str = "report";
    let mut rec = ws.begin(S)?;
    rec.params(cfg.parameters("estimate"));
    let layout = layout(cfg);
    let groups: Vec<String> = ws
        .listed("estimate", "")?
        .iter()
        .filter_map(|p| p.strip_prefix("estimate/")?.strip_suffix("/diagnostics.csv").map(str::to_string))
        .collect();
    for g in groups {
        let c = ws.read(&mut rec, &format!("estimate/{g}/coefficients.csv"))?;
        let d = ws.read(&mut rec, &format!("estimate/{g}/diagnostics.csv"))?;
        let results = report::read_results(&c[..], &d[..]).at(S, &g)?;
        let table = report::report(&results, &layout, fmt10).at(S, &g)?;
        ws.write(&mut rec, &format!("{g}.txt"), table.to_text().as_bytes())?;
        ws.write(&mut rec, &format!("{g}.csv"), &to_bytes(S, &g, |b| table.write_csv(b))?)?;
    }
    ws.finish(rec)
}

pub const PIPELINE: [&str; 7] = ["ingest", "build", "metrics", "spill", "panel", "estimate", "report"];

pub fn run_stage(name: &str, cfg: &PipelineConfig, ws: &Workspace) -> Res<()> {
    match name {
        "simulate" => simulate(cfg, ws),
        "ingest" => ingest(cfg, ws),
        "build" => build(cfg, ws),
        "metrics" => metrics(cfg, ws),
        "spill" => spill(cfg, ws),
        "panel" => panel(cfg, ws),
        "estimate" => estimate(cfg, ws),
        "report" => report(cfg, ws),
        "all" => PIPELINE.iter().try_for_each(|s| run_stage(s, cfg, ws)),
        other => Err(CliError::config("subcommand", &format!("unknown stage `{other}`"))),
    }
}
