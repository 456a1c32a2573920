//! Run records: the measured time series of a single simulation plus the
//! configuration snapshot needed to replay it, persisted as line-delimited
//! JSON with CSV projections for plotting.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flows::VelocityField;
use crate::solver::DtPolicy;

pub const SCHEMA_VERSION: u32 = 1;

/// How the initial datum was built; together with the rest of [`RunMeta`]
/// this makes a record replayable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "init", rename_all = "snake_case")]
pub enum InitSpec {
    SingleMode { k: [i64; 2], cos_amp: f64, sin_amp: f64 },
    RandomBand { band: i64, seed: u64 },
}

/// Configuration snapshot stored with every run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub grid_d: usize,
    pub grid_n: usize,
    pub flow: VelocityField,
    pub nu: f64,
    pub p: f64,
    pub dt_policy: DtPolicy,
    pub eps_g: f64,
    pub dt_max: f64,
    pub init: InitSpec,
    pub s: f64,
    pub t_end: f64,
    pub cadence: f64,
    pub beta: f64,
}

/// One recorded time sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    /// L2 norm of theta.
    pub l2: f64,
    /// L^p norm of the gradient magnitude.
    pub grad_lp: f64,
    /// Homogeneous Sobolev norm of order -beta.
    pub h_neg: f64,
    /// Sum of |per-step energy residual| since the previous sample.
    pub residual_abs: f64,
    /// Set when more than 10% of spectral mass sits above half the Nyquist band.
    pub resolution_flag: bool,
}

/// A full simulation record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub meta: RunMeta,
    pub threshold: f64,
    pub crossing: Option<f64>,
    pub status: Vec<String>,
    pub samples: Vec<Sample>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Header {
        schema_version: u32,
        meta: RunMeta,
        threshold: f64,
        sample_count: usize,
    },
    Sample(Sample),
    Footer {
        crossing: Option<f64>,
        status: Vec<String>,
    },
}

impl RunRecord {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Persist(format!(
                "schema version mismatch: file has {}, this build reads {}",
                self.schema_version, SCHEMA_VERSION
            )));
        }
        if self
            .samples
            .windows(2)
            .any(|w| !(w[1].t > w[0].t))
        {
            return Err(Error::Persist("samples are not strictly time-sorted".into()));
        }
        if let Some(c) = self.crossing {
            if c > self.meta.t_end + 1e-9 {
                return Err(Error::Persist(format!(
                    "crossing time {c} exceeds the horizon {}",
                    self.meta.t_end
                )));
            }
        }
        Ok(())
    }

    /// Writes the record as line-delimited JSON: header, samples, footer.
    pub fn persist(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut w = BufWriter::new(File::create(path)?);
        let header = Line::Header {
            schema_version: self.schema_version,
            meta: self.meta.clone(),
            threshold: self.threshold,
            sample_count: self.samples.len(),
        };
        serde_json::to_writer(&mut w, &header).map_err(persist_err)?;
        w.write_all(b"\n")?;
        for s in &self.samples {
            serde_json::to_writer(&mut w, &Line::Sample(*s)).map_err(persist_err)?;
            w.write_all(b"\n")?;
        }
        let footer = Line::Footer {
            crossing: self.crossing,
            status: self.status.clone(),
        };
        serde_json::to_writer(&mut w, &footer).map_err(persist_err)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    /// Reads a record back, validating structure and invariants. Errors carry
    /// the offending line number.
    pub fn load(path: &Path) -> Result<RunRecord> {
        let reader = BufReader::new(File::open(path)?);
        let mut lines = reader.lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::Persist("line 1: empty record file".into()))??;
        let header: Line = serde_json::from_str(&first)
            .map_err(|e| Error::Persist(format!("line 1: {e}")))?;
        let (schema_version, meta, threshold, sample_count) = match header {
            Line::Header {
                schema_version,
                meta,
                threshold,
                sample_count,
            } => (schema_version, meta, threshold, sample_count),
            _ => return Err(Error::Persist("line 1: expected header line".into())),
        };
        if schema_version != SCHEMA_VERSION {
            return Err(Error::Persist(format!(
                "line 1: schema version mismatch: file has {schema_version}, this build reads {SCHEMA_VERSION}"
            )));
        }
        let mut samples = Vec::with_capacity(sample_count);
        for i in 0..sample_count {
            let lineno = i + 2;
            let text = lines
                .next()
                .ok_or_else(|| {
                    Error::Persist(format!(
                        "line {lineno}: truncated record, expected {sample_count} samples, found {i}"
                    ))
                })??;
            match serde_json::from_str(&text)
                .map_err(|e| Error::Persist(format!("line {lineno}: {e}")))?
            {
                Line::Sample(s) => samples.push(s),
                _ => return Err(Error::Persist(format!("line {lineno}: expected sample line"))),
            }
        }
        let footer_no = sample_count + 2;
        let text = lines.next().ok_or_else(|| {
            Error::Persist(format!("line {footer_no}: truncated record, footer missing"))
        })??;
        let (crossing, status) = match serde_json::from_str(&text)
            .map_err(|e| Error::Persist(format!("line {footer_no}: {e}")))?
        {
            Line::Footer { crossing, status } => (crossing, status),
            _ => return Err(Error::Persist(format!("line {footer_no}: expected footer line"))),
        };
        let record = RunRecord {
            schema_version,
            meta,
            threshold,
            crossing,
            status,
            samples,
        };
        record.validate()?;
        Ok(record)
    }

    /// CSV projection of the sample series (one header row).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(["t", "l2", "grad_lp", "h_neg", "residual_abs", "resolution_flag"])
            .map_err(csv_err)?;
        for s in &self.samples {
            w.write_record(&[
                format_float(s.t),
                format_float(s.l2),
                format_float(s.grad_lp),
                format_float(s.h_neg),
                format_float(s.residual_abs),
                (s.resolution_flag as u8).to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn persist_err(e: serde_json::Error) -> Error {
    Error::Persist(e.to_string())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Persist(e.to_string())
}

/// Shortest round-trip float formatting (matches the JSON encoding).
pub fn format_float(v: f64) -> String {
    let mut buf = ryu_format(v);
    if buf.ends_with(".0") {
        buf.truncate(buf.len() - 2);
    }
    buf
}

fn ryu_format(v: f64) -> String {
    // serde_json uses ryu internally; route through it for identical output
    serde_json::to_string(&v).unwrap_or_else(|_| v.to_string())
}
