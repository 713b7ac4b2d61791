//! CSV rows and text sinks.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct CurveRow {
    pub kind: &'static str,
    #[serde(rename = "K")]
    pub k: usize,
    pub ell: f64,
    pub eps: f64,
    #[serde(rename = "logM_nats")]
    pub log_m_nats: f64,
    pub rate_nats: f64,
    pub rate_bits: f64,
    pub gamma: Option<f64>,
    pub q: Option<f64>,
    pub eta: Option<f64>,
}

impl CurveRow {
    pub fn new(kind: &'static str, k: usize, ell: f64, eps: f64, log_m: f64) -> Self {
        let rate = if ell > 0.0 { log_m / ell } else { 0.0 };
        Self {
            kind,
            k,
            ell,
            eps,
            log_m_nats: log_m,
            rate_nats: rate,
            rate_bits: rate / std::f64::consts::LN_2,
            gamma: None,
            q: None,
            eta: None,
        }
    }
}

/// Opens `path`, or stdout when `None`.
pub fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p).with_context(|| format!("cannot create {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    })
}

pub fn write_rows<T: Serialize>(out: Box<dyn Write>, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
