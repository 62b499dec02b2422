//! Duplex industry networks: market and innovation layers over one industry
//! index, centrality and spillover measures, panel assembly and dynamic panel
//! estimation.

pub mod econ;
pub mod error;
pub mod ingest;
pub mod netcore;
pub mod netmetrics;
pub mod panel;
pub mod report;
pub mod spill;
pub mod stats;
pub mod synthlab;

pub use error::{Error, Result};
