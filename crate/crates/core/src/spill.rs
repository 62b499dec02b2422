//! Thresholded links and first-order spillovers from linked industries.
//!
//! Links are read from the partner view of a share matrix: row `i` lists the
//! suppliers of `i` for upstream shares and the customers of `i` for
//! downstream shares, each row summing to at most one.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::netcore::{Direction, IndustryIndex, Layer, NodeSizeVector, ShareMatrix};

pub const DEFAULT_THRESHOLD: f64 = 0.05;
pub const ROBUSTNESS_THRESHOLDS: [f64; 3] = [0.025, 0.10, 0.20];

#[derive(Debug, Clone, PartialEq)]
pub struct LinkMatrix {
    pub period: i32,
    pub layer: Layer,
    pub direction: Direction,
    pub threshold: f64,
    pub index: Arc<IndustryIndex>,
    /// Entries are 0 or 1.
    pub links: DMatrix<f64>,
}

impl LinkMatrix {
    pub fn row_count(&self, i: usize) -> usize {
        self.links.row(i).iter().filter(|&&v| v != 0.0).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpilloverVector {
    pub period: i32,
    pub layer: Layer,
    pub direction: Direction,
    pub variant: &'static str,
    pub index: Arc<IndustryIndex>,
    pub values: Vec<f64>,
}

/// Binary links `L(i,j) = 1` iff the partner weight is at least `theta`.
pub fn threshold_links(w: &ShareMatrix, theta: f64) -> Result<LinkMatrix> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidParameter(format!("link threshold {theta} outside (0, 1]")));
    }
    let links = w.partner_view().map(|v| if v >= theta { 1.0 } else { 0.0 });
    Ok(LinkMatrix {
        period: w.period,
        layer: w.layer,
        direction: w.direction,
        threshold: theta,
        index: Arc::clone(&w.index),
        links,
    })
}

fn weighted_sum(m: &DMatrix<f64>, a: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .filter(|&j| j != i)
                .map(|j| m[(i, j)] * a[j])
                .sum()
        })
        .collect()
}

fn check_index(index: &Arc<IndustryIndex>, a: &NodeSizeVector) -> Result<()> {
    if !(Arc::ptr_eq(index, &a.index) || **index == *a.index) {
        return Err(Error::IndexMismatch("links and sizes use different industry indices".into()));
    }
    Ok(())
}

/// `Spill_i = sum over j != i of L(i,j) * A_j`.
pub fn spillover(l: &LinkMatrix, a: &NodeSizeVector) -> Result<SpilloverVector> {
    check_index(&l.index, a)?;
    Ok(SpilloverVector {
        period: l.period,
        layer: l.layer,
        direction: l.direction,
        variant: "binary",
        index: Arc::clone(&l.index),
        values: weighted_sum(&l.links, &a.values),
    })
}

/// `Spill_i = sum over j != i of w(i,j) * A_j` with partner weights.
pub fn spillover_weighted(w: &ShareMatrix, a: &NodeSizeVector) -> Result<SpilloverVector> {
    check_index(&w.index, a)?;
    Ok(SpilloverVector {
        period: w.period,
        layer: w.layer,
        direction: w.direction,
        variant: "weighted",
        index: Arc::clone(&w.index),
        values: weighted_sum(&w.partner_view(), &a.values),
    })
}

pub trait SpilloverRule: Send + Sync {
    fn name(&self) -> &'static str;
    fn compute(&self, w: &ShareMatrix, a: &NodeSizeVector) -> Result<SpilloverVector>;
}

#[derive(Debug, Clone, Copy)]
pub struct BinarySpillover {
    pub threshold: f64,
}

impl Default for BinarySpillover {
    fn default() -> Self {
        BinarySpillover {
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl SpilloverRule for BinarySpillover {
    fn name(&self) -> &'static str {
        "binary"
    }
    fn compute(&self, w: &ShareMatrix, a: &NodeSizeVector) -> Result<SpilloverVector> {
        spillover(&threshold_links(w, self.threshold)?, a)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WeightedSpillover;

impl SpilloverRule for WeightedSpillover {
    fn name(&self) -> &'static str {
        "weighted"
    }
    fn compute(&self, w: &ShareMatrix, a: &NodeSizeVector) -> Result<SpilloverVector> {
        spillover_weighted(w, a)
    }
}

pub struct SpilloverRegistry {
    entries: Vec<Box<dyn SpilloverRule>>,
}

impl SpilloverRegistry {
    pub fn empty() -> Self {
        SpilloverRegistry { entries: Vec::new() }
    }

    pub fn with_defaults(threshold: f64) -> Self {
        let mut r = SpilloverRegistry::empty();
        r.register(Box::new(BinarySpillover { threshold }));
        r.register(Box::new(WeightedSpillover));
        r
    }

    pub fn register(&mut self, rule: Box<dyn SpilloverRule>) {
        self.entries.retain(|e| e.name() != rule.name());
        self.entries.push(rule);
    }

    pub fn get(&self, name: &str) -> Result<&dyn SpilloverRule> {
        self.entries
            .iter()
            .find(|e| e.name() == name)
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::UnknownStrategy {
                kind: "spillover rule",
                name: name.to_string(),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name()).collect()
    }
}
