//! Pipeline configuration: a sectioned TOML file plus `section.key=value`
//! overrides from the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub output: Option<String>,
    pub market_edges: Option<String>,
    pub market_concordance: Option<String>,
    pub innovation_edges: Option<String>,
    pub events: Option<String>,
    pub citations: Option<String>,
    pub patent_concordance: Option<String>,
    pub stocks: Option<String>,
    pub aux: Option<String>,
    pub labels: Option<String>,
    pub classes: Option<String>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestConfig {
    pub delimiter: char,
    pub window_length: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_anchor: Option<i32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub last_anchor: Option<i32>,
    /// "prior" or "posterior".
    pub timing: String,
    /// "strict" or "pass_through".
    pub unmapped: String,
    /// "all_time" or "within_window".
    pub citation_scope: String,
    pub deflate: bool,
    pub periods: Vec<i32>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            delimiter: ',',
            window_length: 5,
            first_anchor: None,
            last_anchor: None,
            timing: "prior".into(),
            unmapped: "strict".into(),
            citation_scope: "all_time".into(),
            deflate: true,
            periods: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    /// "column_sum" or "own_output".
    pub dw_variant: String,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            dw_variant: "column_sum".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub damping: f64,
    pub centralities: Vec<String>,
    pub ranking_k: usize,
    pub binarize_threshold: f64,
    pub percent_weights: bool,
    pub similarity: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            damping: induplex::netmetrics::DEFAULT_DAMPING,
            centralities: vec!["pagerank".into(), "degree".into(), "strength".into()],
            ranking_k: 10,
            binarize_threshold: 0.0,
            percent_weights: false,
            similarity: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpillConfig {
    pub threshold: f64,
    pub rule: String,
    pub robustness_thresholds: Vec<f64>,
}

impl Default for SpillConfig {
    fn default() -> Self {
        SpillConfig {
            threshold: induplex::spill::DEFAULT_THRESHOLD,
            rule: "binary".into(),
            robustness_thresholds: induplex::spill::ROBUSTNESS_THRESHOLDS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct PanelConfig {
    pub balanced: bool,
    pub positive_columns: Vec<String>,
    pub iqr_multiplier: f64,
    pub log_exempt: Vec<String>,
    /// Columns left untouched by the transformation pipeline.
    pub untransformed: Vec<String>,
}

impl Default for PanelConfig {
    fn default() -> Self {
        PanelConfig {
            balanced: true,
            positive_columns: Vec::new(),
            iqr_multiplier: induplex::panel::DEFAULT_IQR_MULTIPLIER,
            log_exempt: vec![induplex::ingest::aux_columns::PROD_LABOR_SHARE.into()],
            untransformed: vec![induplex::ingest::aux_columns::DEFLATOR.into()],
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateConfig {
    /// "table3" or "single".
    pub layout: String,
    pub estimator: String,
    pub dependent: String,
    /// Regressor labels such as `A_tau_lag1`; `<dependent>_lagK` is the lagged
    /// dependent variable.
    pub regressors: Vec<String>,
    pub controls: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<String>,
    /// "both", "industry" or "time".
    pub fixed_effects: String,
    /// "robust" or "classical".
    pub se: String,
    pub collapsed: bool,
    pub steps: u8,
    pub windmeijer: bool,
    pub time_dummies: bool,
    pub min_instrument_lag: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_instrument_lag: Option<usize>,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            layout: "table3".into(),
            estimator: "bb_sys".into(),
            dependent: "A_mu".into(),
            regressors: vec!["A_mu_lag1".into()],
            controls: induplex::report::CONTROLS.iter().map(|s| s.to_string()).collect(),
            weights: None,
            fixed_effects: "both".into(),
            se: "robust".into(),
            collapsed: false,
            steps: 1,
            windmeijer: false,
            time_dummies: true,
            min_instrument_lag: 2,
            max_instrument_lag: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    /// "duplex" writes synthetic pipeline inputs; "montecarlo" runs an
    /// estimator over simulated AR(1) panels.
    pub kind: String,
    pub seed: u64,
    pub n: usize,
    pub periods: Vec<i32>,
    pub density: f64,
    pub t: usize,
    pub rho: f64,
    pub fe_sd: f64,
    pub noise_sd: f64,
    pub beta: Vec<f64>,
    pub reps: usize,
    pub estimator: String,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            kind: "duplex".into(),
            seed: 1,
            n: 100,
            periods: vec![1977, 1982, 1987, 1992, 1997, 2002, 2007, 2012],
            density: 0.2,
            t: 8,
            rho: 0.8,
            fe_sd: 1.0,
            noise_sd: 1.0,
            beta: Vec::new(),
            reps: 200,
            estimator: "bb_sys".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    pub name: String,
    /// "median_split", "code_prefix", "class" or "period_window".
    pub rule: String,
    pub column: Option<String>,
    /// "above" or "at_or_below".
    pub side: Option<String>,
    pub prefix: Option<String>,
    pub class: Option<String>,
    pub first: Option<i32>,
    pub last: Option<i32>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub ingest: IngestConfig,
    pub network: NetworkConfig,
    pub metrics: MetricsConfig,
    pub spill: SpillConfig,
    pub panel: PanelConfig,
    pub estimate: EstimateConfig,
    pub simulate: SimulateConfig,
    pub groups: Vec<GroupConfig>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base: PathBuf,
}

fn parse_override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies `section.key=value`. Values are TOML literals; anything that does
/// not parse as one is taken as a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::config(assignment, "override must look like section.key=value"))?;
    let parts: Vec<&str> = path.trim().split('.').collect();
    if parts.len() != 2 || parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::config(path, "override key must be section.key"));
    }
    let section = table
        .entry(parts[0].to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let section = section
        .as_table_mut()
        .ok_or_else(|| CliError::config(parts[0], "not a section"))?;
    section.insert(parts[1].to_string(), parse_override_value(raw.trim()));
    Ok(())
}

impl PipelineConfig {
    pub fn from_table(table: toml::Table, base: &Path) -> Result<Self, CliError> {
        let mut cfg: PipelineConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| CliError::config("config", e.message()))?;
        cfg.base = base.to_path_buf();
        cfg.validate_ranges()?;
        Ok(cfg)
    }

    /// Reads `path` (if any) and applies overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let (mut table, base) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::config(&p.display().to_string(), &format!("cannot read config: {e}")))?;
                let table: toml::Table = text
                    .parse()
                    .map_err(|e: toml::de::Error| CliError::config(&p.display().to_string(), e.message()))?;
                let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
                (table, base)
            }
            None => (toml::Table::new(), PathBuf::new()),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Self::from_table(table, &base)
    }

    fn validate_ranges(&self) -> Result<(), CliError> {
        let m = &self.metrics;
        if !(m.damping > 0.0 && m.damping < 1.0) {
            return Err(CliError::config("metrics.damping", "must lie in (0, 1)"));
        }
        let s = &self.spill;
        for t in std::iter::once(&s.threshold).chain(&s.robustness_thresholds) {
            if !(*t > 0.0 && *t <= 1.0) {
                return Err(CliError::config("spill.threshold", "thresholds must lie in (0, 1]"));
            }
        }
        if !(self.panel.iqr_multiplier > 0.0) {
            return Err(CliError::config("panel.iqr_multiplier", "must be positive"));
        }
        if self.ingest.window_length == 0 {
            return Err(CliError::config("ingest.window_length", "must be positive"));
        }
        if !(1..=2).contains(&self.estimate.steps) {
            return Err(CliError::config("estimate.steps", "must be 1 or 2"));
        }
        if self.estimate.min_instrument_lag == 0 {
            return Err(CliError::config("estimate.min_instrument_lag", "must be at least 1"));
        }
        let sim = &self.simulate;
        if !(sim.density > 0.0 && sim.density <= 1.0) {
            return Err(CliError::config("simulate.density", "must lie in (0, 1]"));
        }
        if sim.reps == 0 {
            return Err(CliError::config("simulate.reps", "must be at least 1"));
        }
        for (key, value, allowed) in [
            ("ingest.timing", &self.ingest.timing, &["prior", "posterior"][..]),
            ("ingest.unmapped", &self.ingest.unmapped, &["strict", "pass_through"][..]),
            ("ingest.citation_scope", &self.ingest.citation_scope, &["all_time", "within_window"][..]),
            ("network.dw_variant", &self.network.dw_variant, &["column_sum", "own_output"][..]),
            ("estimate.layout", &self.estimate.layout, &["table3", "single"][..]),
            ("estimate.fixed_effects", &self.estimate.fixed_effects, &["both", "industry", "time"][..]),
            ("estimate.se", &self.estimate.se, &["robust", "classical"][..]),
            ("simulate.kind", &self.simulate.kind, &["duplex", "montecarlo"][..]),
        ] {
            if !allowed.contains(&value.as_str()) {
                return Err(CliError::config(key, &format!("`{value}` is not one of {}", allowed.join(", "))));
            }
        }
        Ok(())
    }

    /// Checks that every strategy named in the config is registered.
    pub fn validate_strategies(&self) -> Result<(), CliError> {
        let centralities = induplex::netmetrics::CentralityRegistry::with_defaults(self.metrics.damping);
        for c in &self.metrics.centralities {
            centralities
                .get(c)
                .map_err(|e| CliError::config("metrics.centralities", &e.to_string()))?;
        }
        induplex::spill::SpilloverRegistry::with_defaults(self.spill.threshold)
            .get(&self.spill.rule)
            .map_err(|e| CliError::config("spill.rule", &e.to_string()))?;
        let estimators = induplex::econ::EstimatorRegistry::with_defaults();
        for (key, name) in [("estimate.estimator", &self.estimate.estimator), ("simulate.estimator", &self.simulate.estimator)] {
            estimators.get(name).map_err(|e| CliError::config(key, &e.to_string()))?;
        }
        Ok(())
    }

    pub fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(self.paths.output.as_deref().unwrap_or("out"))
    }

    /// Resolves an optional input path, checking that it exists.
    pub fn input(&self, key: &str, value: &Option<String>) -> Result<Option<PathBuf>, CliError> {
        match value {
            None => Ok(None),
            Some(v) => {
                let p = self.resolve(v);
                if p.is_file() {
                    Ok(Some(p))
                } else {
                    Err(CliError::config(key, &format!("input file `{}` does not exist", p.display())))
                }
            }
        }
    }

    pub fn required(&self, key: &str, value: &Option<String>) -> Result<PathBuf, CliError> {
        self.input(key, value)?
            .ok_or_else(|| CliError::config(key, "required input path is not set"))
    }

    /// Parameters recorded in manifests, as sorted `section.key=value` pairs.
    pub fn parameters(&self, section: &str) -> Vec<(String, String)> {
        let v = match section {
            "ingest" => toml::Value::try_from(&self.ingest),
            "network" => toml::Value::try_from(&self.network),
            "metrics" => toml::Value::try_from(&self.metrics),
            "spill" => toml::Value::try_from(&self.spill),
            "panel" => toml::Value::try_from(&self.panel),
            "estimate" => toml::Value::try_from(&self.estimate),
            "simulate" => toml::Value::try_from(&self.simulate),
            _ => Ok(toml::Value::Table(toml::Table::new())),
        };
        let mut out = Vec::new();
        if let Ok(toml::Value::Table(t)) = v {
            for (k, v) in t {
                out.push((format!("{section}.{k}"), v.to_string()));
            }
        }
        out.sort();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_take_precedence() {
        let mut t: toml::Table = "[spill]\nthreshold = 0.05\n".parse().unwrap();
        apply_override(&mut t, "spill.threshold=0.1").unwrap();
        apply_override(&mut t, "estimate.estimator=ab_diff").unwrap();
        apply_override(&mut t, "simulate.periods=[1, 2, 3]").unwrap();
        let cfg = PipelineConfig::from_table(t, Path::new("")).unwrap();
        assert_eq!(cfg.spill.threshold, 0.1);
        assert_eq!(cfg.estimate.estimator, "ab_diff");
        assert_eq!(cfg.simulate.periods, vec![1, 2, 3]);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_ranges() {
        let t: toml::Table = "[spill]\nthreshhold = 0.05\n".parse().unwrap();
        assert!(PipelineConfig::from_table(t, Path::new("")).is_err());
        let mut t = toml::Table::new();
        apply_override(&mut t, "metrics.damping=1.5").unwrap();
        assert!(PipelineConfig::from_table(t, Path::new("")).is_err());
        assert!(apply_override(&mut toml::Table::new(), "damping=0.5").is_err());
    }

    #[test]
    fn parameters_are_sorted_and_stable() {
        let cfg = PipelineConfig::default();
        let p = cfg.parameters("spill");
        assert_eq!(p[0].0, "spill.robustness_thresholds");
        assert_eq!(p, cfg.parameters("spill"));
    }
}
