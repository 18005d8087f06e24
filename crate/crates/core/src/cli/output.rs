//! Result rows and their CSV / JSON serializations.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::format::round_sig;

/// One trained level next to its reference value. Values are held already
/// rounded to the emitted precision, so a written file reads back equal.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumRow {
    lambda: f64,
    level: usize,
    e_nn: f64,
    e_oracle: f64,
    converged: bool,
}

impl SpectrumRow {
    pub fn new(lambda: f64, level: usize, e_nn: f64, e_oracle: f64, converged: bool) -> Self {
        Self {
            lambda: round_sig(lambda),
            level,
            e_nn: round_sig(e_nn),
            e_oracle: round_sig(e_oracle),
            converged,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn e_nn(&self) -> f64 {
        self.e_nn
    }

    pub fn e_oracle(&self) -> f64 {
        self.e_oracle
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn abs_diff(&self) -> f64 {
        (self.e_nn - self.e_oracle).abs()
    }

    pub fn rel_diff(&self) -> f64 {
        self.abs_diff() / self.e_oracle.abs()
    }

    fn record(&self) -> Record {
        Record {
            lambda: self.lambda,
            level: self.level,
            e_nn: self.e_nn,
            e_oracle: self.e_oracle,
            abs_diff: round_sig(self.abs_diff()),
            rel_diff: round_sig(self.rel_diff()),
            converged: self.converged,
        }
    }
}

/// Serialized form of a row, derived columns included.
#[derive(Debug, Serialize, Deserialize)]
struct Record {
    lambda: f64,
    level: usize,
    #[serde(rename = "E_nn")]
    e_nn: f64,
    #[serde(rename = "E_oracle")]
    e_oracle: f64,
    abs_diff: f64,
    rel_diff: f64,
    converged: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpectrumResult {
    pub rows: Vec<SpectrumRow>,
}

impl SpectrumResult {
    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(SpectrumRow::converged)
    }

    /// `(λ, n)` of every row that did not converge.
    pub fn unconverged(&self) -> Vec<(f64, usize)> {
        self.rows
            .iter()
            .filter(|r| !r.converged)
            .map(|r| (r.lambda, r.level))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let records: Vec<Record> = self.rows.iter().map(SpectrumRow::record).collect();
        write_csv_rows(&records, out)
    }

    /// Reads a file written by [`write_csv`](Self::write_csv). The derived
    /// columns must agree with the recomputed ones.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let mut rows = Vec::new();
        for (i, rec) in reader.deserialize::<Record>().enumerate() {
            let rec = rec?;
            let row = SpectrumRow::new(rec.lambda, rec.level, rec.e_nn, rec.e_oracle, rec.converged);
            let check = row.record();
            if check.abs_diff != rec.abs_diff || check.rel_diff != rec.rel_diff {
                return Err(Error::InvalidArgument(format!(
                    "row {}: abs_diff/rel_diff columns disagree with E_nn and E_oracle",
                    i + 1
                )));
            }
            rows.push(row);
        }
        Ok(Self { rows })
    }

    pub fn write_json<W: Write>(&self, cfg: &RunConfig, out: W) -> Result<()> {
        let records: Vec<Record> = self.rows.iter().map(SpectrumRow::record).collect();
        write_json_envelope(cfg, &records, out)
    }
}

/// Header from the field names, one line per row.
pub fn write_csv_rows<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct Provenance {
    version: &'static str,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    timestamp: Option<u64>,
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    config: &'a RunConfig,
    results: &'a [T],
    provenance: Provenance,
}

/// `{config, results, provenance}`; the timestamp (Unix seconds) is left out
/// under `no_timestamp`.
pub fn write_json_envelope<T: Serialize, W: Write>(cfg: &RunConfig, results: &[T], mut out: W) -> Result<()> {
    let timestamp = (!cfg.no_timestamp).then(|| {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    });
    let env = Envelope {
        config: cfg,
        results,
        provenance: Provenance {
            version: env!("CARGO_PKG_VERSION"),
            seed: cfg.seed,
            timestamp,
        },
    };
    serde_json::to_writer_pretty(&mut out, &env)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}
