//! File formats: design JSON, lab sheet CSV, measurement CSV, decode
//! result JSON and phase-diagram grid CSV.

use crate::decode::InfectionCall;
use crate::design::{DesignError, DesignParams, PoolingDesign};
use crate::matrix::BinaryMatrix;
use crate::simulation::PhaseDiagram;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Design(#[from] DesignError),
}

/// On-disk design: 0-based `[row, col]` positions of the ones of `B`,
/// sorted lexicographically.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignFile {
    pub q: u64,
    pub s: u64,
    pub m: usize,
    pub n: usize,
    pub ones: Vec<[usize; 2]>,
}

impl From<&PoolingDesign> for DesignFile {
    fn from(d: &PoolingDesign) -> Self {
        Self {
            q: d.params().q(),
            s: d.params().s(),
            m: d.m(),
            n: d.n(),
            ones: d.binary().ones().into_iter().map(|(r, c)| [r, c]).collect(),
        }
    }
}

impl DesignFile {
    /// Rebuilds the design. Checks parameters and dimensions but not the
    /// structural invariants, so tampered files can still be inspected.
    pub fn into_design(self) -> Result<PoolingDesign, FormatError> {
        let params = DesignParams::new(self.q, self.s)?;
        if self.m != params.tests() || self.n != params.individuals() {
            return Err(DesignError::DimensionMismatch(format!(
                "file says {}x{}, (q, s) = ({}, {}) needs {}x{}",
                self.m,
                self.n,
                self.q,
                self.s,
                params.tests(),
                params.individuals()
            ))
            .into());
        }
        let ones: Vec<(usize, usize)> = self.ones.iter().map(|&[r, c]| (r, c)).collect();
        let binary = BinaryMatrix::from_ones(self.m, self.n, &ones)
            .ok_or_else(|| FormatError::Invalid("a one lies outside the matrix".into()))?;
        Ok(PoolingDesign::from_binary(params, binary)?)
    }
}

pub fn write_design<W: Write>(design: &PoolingDesign, mut w: W) -> Result<(), FormatError> {
    serde_json::to_writer(&mut w, &DesignFile::from(design))?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn read_design<R: Read>(r: R) -> Result<PoolingDesign, FormatError> {
    let file: DesignFile = serde_json::from_reader(r)?;
    file.into_design()
}

/// Lab sheet: one row per test with the `;`-separated specimens it pools.
pub fn write_lab_sheet<W: Write>(design: &PoolingDesign, w: W) -> Result<(), FormatError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["test_id", "specimen_ids"])?;
    for (m, pool) in design.pools().iter().enumerate() {
        let ids = pool.iter().map(usize::to_string).collect::<Vec<_>>().join(";");
        out.write_record([m.to_string(), ids])?;
    }
    out.flush()?;
    Ok(())
}

fn check_header(rdr: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<(), FormatError> {
    let header = rdr.headers()?;
    if header.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(FormatError::Invalid(format!(
            "expected header \"{}\", got \"{}\"",
            expected.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

/// Reads `test_id,value` rows. Every id in `0..rows` must appear once; the
/// result is indexed by test id.
pub fn read_measurements<R: Read>(r: R) -> Result<Vec<f64>, FormatError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    check_header(&mut rdr, &["test_id", "value"])?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let parse_err = |what: &str| FormatError::Invalid(format!("bad {what} on line {:?}", rec.position().map(|p| p.line())));
        let id: usize = rec.get(0).and_then(|v| v.parse().ok()).ok_or_else(|| parse_err("test_id"))?;
        let value: f64 = rec.get(1).and_then(|v| v.parse().ok()).ok_or_else(|| parse_err("value"))?;
        rows.push((id, value));
    }
    let mut values = vec![None; rows.len()];
    for (id, v) in rows {
        match values.get_mut(id) {
            Some(slot @ None) => *slot = Some(v),
            Some(Some(_)) => return Err(FormatError::Invalid(format!("test_id {id} appears twice"))),
            None => return Err(FormatError::Invalid(format!("test_id {id} out of range"))),
        }
    }
    Ok(values.into_iter().map(|v| v.expect("ids are a permutation")).collect())
}

pub fn write_measurements<W: Write>(values: &[f64], w: W) -> Result<(), FormatError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["test_id", "value"])?;
    for (i, v) in values.iter().enumerate() {
        out.write_record([i.to_string(), v.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeReport {
    pub calls: Vec<InfectionCall>,
    pub objective: f64,
    pub status: String,
    pub bound_constant: f64,
    pub noise_tolerance: f64,
}

pub fn write_report<W: Write>(report: &DecodeReport, mut w: W) -> Result<(), FormatError> {
    serde_json::to_writer_pretty(&mut w, report)?;
    w.write_all(b"\n")?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub p: f64,
    pub pe: f64,
    pub trials: usize,
    pub successes: usize,
    pub prob: f64,
}

pub fn write_grid<W: Write>(diagram: &PhaseDiagram, w: W) -> Result<(), FormatError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["p", "pe", "trials", "successes", "prob"])?;
    for (p, pe, successes, prob) in diagram.cells() {
        out.write_record([
            p.to_string(),
            pe.to_string(),
            diagram.trials.to_string(),
            successes.to_string(),
            prob.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_grid<R: Read>(r: R) -> Result<Vec<GridRow>, FormatError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    check_header(&mut rdr, &["p", "pe", "trials", "successes", "prob"])?;
    let rows = rdr.deserialize().collect::<Result<Vec<GridRow>, _>>()?;
    for row in &rows {
        if !(0.0..=1.0).contains(&row.prob) || row.successes > row.trials {
            return Err(FormatError::Invalid(format!("inconsistent grid row at p={}, pe={}", row.p, row.pe)));
        }
    }
    Ok(rows)
}
