use std::fmt;

/// A failure tagged with the stage and the key (config key, file or cell)
/// it concerns.
#[derive(Debug)]
pub enum CliError {
    Config { key: String, message: String },
    Data { stage: String, key: String, source: induplex::Error },
    Numerical { stage: String, key: String, source: induplex::Error },
}

impl CliError {
    pub fn config(key: &str, message: &str) -> Self {
        CliError::Config {
            key: key.to_string(),
            message: message.to_string(),
        }
    }

    /// Classifies a library error as a data or numerical failure.
    pub fn from_core(stage: &str, key: &str, source: induplex::Error) -> Self {
        let (stage, key) = (stage.to_string(), key.to_string());
        if source.is_numerical() {
            CliError::Numerical { stage, key, source }
        } else {
            CliError::Data { stage, key, source }
        }
    }

    pub fn io(stage: &str, key: &str, e: std::io::Error) -> Self {
        CliError::from_core(stage, key, induplex::Error::Io(e))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Data { .. } => 3,
            CliError::Numerical { .. } => 4,
        }
    }

    /// Name of the underlying error variant, e.g. `RankDeficient`.
    pub fn kind(&self) -> String {
        match self {
            CliError::Config { .. } => "ConfigError".into(),
            CliError::Data { source, .. } | CliError::Numerical { source, .. } => {
                let dbg = format!("{source:?}");
                dbg.split(|c: char| !c.is_alphanumeric()).next().unwrap_or("").to_string()
            }
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config { key, message } => write!(f, "config error [key={key}]: {message}"),
            CliError::Data { stage, key, source } => {
                write!(f, "data error [stage={stage} key={key}] {}: {source}", self.kind())
            }
            CliError::Numerical { stage, key, source } => {
                write!(f, "numerical failure [stage={stage} key={key}] {}: {source}", self.kind())
            }
        }
    }
}

impl std::error::Error for CliError {}

/// Attaches stage and key context to library results.
pub trait Context<T> {
    fn at(self, stage: &str, key: &str) -> Result<T, CliError>;
}

impl<T> Context<T> for induplex::Result<T> {
    fn at(self, stage: &str, key: &str) -> Result<T, CliError> {
        self.map_err(|e| CliError::from_core(stage, key, e))
    }
}

impl<T> Context<T> for std::io::Result<T> {
    fn at(self, stage: &str, key: &str) -> Result<T, CliError> {
        self.map_err(|e| CliError::io(stage, key, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_and_kinds() {
        let e = CliError::from_core("estimate", "(1)", induplex::Error::RankDeficient("x".into()));
        assert_eq!(e.exit_code(), 4);
        assert_eq!(e.kind(), "RankDeficient");
        assert!(e.to_string().contains("RankDeficient"));
        let e = CliError::from_core("ingest", "edges", induplex::Error::EmptyMap);
        assert_eq!(e.exit_code(), 3);
        assert_eq!(CliError::config("paths.market_edges", "missing").exit_code(), 2);
    }
}
