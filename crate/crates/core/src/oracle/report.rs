use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One comparison between a computed value and its reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub name: String,
    pub instance: String,
    pub primary: f64,
    pub oracle: f64,
    pub discrepancy: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleReport {
    /// Absolute discrepancy against `tolerance`.
    pub fn new(name: impl Into<String>, instance: impl Into<String>, primary: f64, oracle: f64, tolerance: f64) -> Self {
        Self::with_discrepancy(name, instance, primary, oracle, (primary - oracle).abs(), tolerance)
    }

    pub fn with_discrepancy(
        name: impl Into<String>,
        instance: impl Into<String>,
        primary: f64,
        oracle: f64,
        discrepancy: f64,
        tolerance: f64,
    ) -> Self {
        Self {
            name: name.into(),
            instance: instance.into(),
            primary,
            oracle,
            discrepancy,
            tolerance,
            pass: discrepancy <= tolerance,
        }
    }
}

pub fn write_reports_csv<W: Write>(reports: &[OracleReport], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in reports {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
