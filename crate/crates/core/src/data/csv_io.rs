use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::diffcore::Tensor;
use crate::error::{DsvbError, Result};

use super::{Domain, SequenceDataset};

pub const N_MARKERS: usize = 10;
pub const CSV_MEASUREMENT_COLUMNS: [&str; 3] = ["t", "pressure", "flex"];

/// Names of the state columns: `m1x, m1z, …, m10x, m10z, fx, fz`.
#[derive(Clone, Copy, Debug, Default)]
pub struct StateLayout;

impl StateLayout {
    pub fn columns() -> Vec<String> {
        let mut cols = Vec::with_capacity(2 * N_MARKERS + 2);
        for i in 1..=N_MARKERS {
            cols.push(format!("m{i}x"));
            cols.push(format!("m{i}z"));
        }
        cols.push("fx".into());
        cols.push("fz".into());
        cols
    }

    pub fn header(with_states: bool) -> Vec<String> {
        let mut h: Vec<String> = CSV_MEASUREMENT_COLUMNS.iter().map(|s| s.to_string()).collect();
        if with_states {
            h.extend(Self::columns());
        }
        h
    }
}

pub fn load_csv(path: impl AsRef<Path>, domain: Domain) -> Result<SequenceDataset> {
    let path = path.as_ref();
    let file = File::open(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    read_csv(file, domain)
}

/// Parse a dataset. The header must be exactly the measurement columns,
/// optionally followed by every state column.
pub fn read_csv<R: Read>(reader: R, domain: Domain) -> Result<SequenceDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let with_states = check_header(&header)?;
    let n_cols = header.len();

    let mut time = Vec::new();
    let mut meas = Vec::new();
    let mut states = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| DsvbError::Parse {
            row,
            line: row + 1,
            column: String::new(),
            detail: e.to_string(),
        })?;
        if record.len() != n_cols {
            return Err(DsvbError::Parse {
                row,
                line: row + 1,
                column: String::new(),
                detail: format!("expected {} fields, found {}", n_cols, record.len()),
            });
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| DsvbError::Parse {
                row,
                line: row + 1,
                column: header[c].clone(),
                detail: format!("`{field}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(DsvbError::Parse {
                    row,
                    line: row + 1,
                    column: header[c].clone(),
                    detail: format!("`{field}` is not finite"),
                });
            }
            match c {
                0 => time.push(v),
                1 | 2 => meas.push(v),
                _ => states.push(v),
            }
        }
    }
    let rows = time.len();
    if rows == 0 {
        return Err(DsvbError::EmptyDataset("CSV has no data rows".into()));
    }
    let sample_rate_hz = if rows > 1 && time[1] > time[0] {
        1.0 / (time[1] - time[0])
    } else {
        10.0
    };
    let measurements = Tensor::matrix(rows, 2, meas)?;
    let states = if with_states {
        Some(Tensor::matrix(rows, 2 * N_MARKERS + 2, states)?)
    } else {
        None
    };
    log::debug!("read {rows} rows (labels: {with_states})");
    SequenceDataset::new(time, measurements, states, domain, sample_rate_hz)
}

fn check_header(header: &[String]) -> Result<bool> {
    let measurement = StateLayout::header(false);
    let full = StateLayout::header(true);
    if header == measurement.as_slice() {
        return Ok(false);
    }
    if header == full.as_slice() {
        return Ok(true);
    }
    let missing: Vec<&str> = measurement
        .iter()
        .filter(|c| !header.contains(c))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        return Err(DsvbError::Schema(format!("missing columns: {}", missing.join(", "))));
    }
    let extra: Vec<&str> = header
        .iter()
        .filter(|c| !full.contains(c))
        .map(String::as_str)
        .collect();
    if !extra.is_empty() {
        return Err(DsvbError::Schema(format!("unexpected columns: {}", extra.join(", "))));
    }
    let absent: Vec<&str> = full
        .iter()
        .filter(|c| !header.contains(c))
        .map(String::as_str)
        .collect();
    if !absent.is_empty() {
        return Err(DsvbError::Schema(format!(
            "state columns must be all present or all absent; missing: {}",
            absent.join(", ")
        )));
    }
    Err(DsvbError::Schema(format!(
        "columns out of order; expected `{}`",
        full.join(",")
    )))
}

/// Write a dataset; values use the shortest round-tripping representation.
pub fn write_csv<W: Write>(ds: &SequenceDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(StateLayout::header(ds.has_labels()))?;
    let mut fields = Vec::new();
    for r in 0..ds.len() {
        fields.clear();
        fields.push(ds.time[r].to_string());
        fields.extend(ds.measurements.row_slice(r).iter().map(f64::to_string));
        if let Some(s) = &ds.states {
            fields.extend(s.row_slice(r).iter().map(f64::to_string));
        }
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}
