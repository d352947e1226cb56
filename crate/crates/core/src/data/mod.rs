//! Datasets: CSV ingestion, normalisation, windowing and the synthetic
//! actuated-finger simulator.

mod csv_io;
mod normalize;
pub mod synth;
mod window;

use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::error::{DsvbError, Result};

pub use csv_io::{load_csv, read_csv, write_csv, StateLayout, CSV_MEASUREMENT_COLUMNS, N_MARKERS};
pub use normalize::NormalizationStats;
pub use synth::{synth_generate, synth_trace, ActuationPattern, ContactMode, SynthConfig, SynthTrace};
pub use window::{window, SequenceBatch, Window};

/// Measurement channels: actuation pressure and flex reading.
pub const N_Y: usize = 2;
/// State channels: 10 markers × (x, z) plus the two contact-force axes.
pub const N_X: usize = 2 * N_MARKERS + 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Source => "source",
            Domain::Target => "target",
        }
    }

    /// Discriminator label: source 1, target 0.
    pub fn label(self) -> f64 {
        match self {
            Domain::Source => 1.0,
            Domain::Target => 0.0,
        }
    }
}

/// Time-aligned measurements and, optionally, state labels.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceDataset {
    pub time: Vec<f64>,
    /// `[T, n_y]`
    pub measurements: Tensor,
    /// `[T, n_x]`, row-aligned with `measurements`.
    pub states: Option<Tensor>,
    pub domain: Domain,
    pub sample_rate_hz: f64,
}

impl SequenceDataset {
    pub fn new(
        time: Vec<f64>,
        measurements: Tensor,
        states: Option<Tensor>,
        domain: Domain,
        sample_rate_hz: f64,
    ) -> Result<Self> {
        if measurements.rank() != 2 || time.len() != measurements.rows() {
            return Err(DsvbError::shape(
                "SequenceDataset",
                format!("{} timestamps for measurements {:?}", time.len(), measurements.shape()),
            ));
        }
        if let Some(s) = &states {
            if s.rank() != 2 || s.rows() != measurements.rows() {
                return Err(DsvbError::shape(
                    "SequenceDataset",
                    format!("states {:?} vs measurements {:?}", s.shape(), measurements.shape()),
                ));
            }
            if !s.is_finite() {
                return Err(DsvbError::Schema("state labels contain non-finite values".into()));
            }
        }
        if !measurements.is_finite() {
            return Err(DsvbError::Schema("measurements contain non-finite values".into()));
        }
        Ok(SequenceDataset {
            time,
            measurements,
            states,
            domain,
            sample_rate_hz,
        })
    }

    pub fn len(&self) -> usize {
        self.measurements.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_y(&self) -> usize {
        self.measurements.cols()
    }

    pub fn n_x(&self) -> Option<usize> {
        self.states.as_ref().map(Tensor::cols)
    }

    pub fn has_labels(&self) -> bool {
        self.states.is_some()
    }

    /// Copy without state labels.
    pub fn without_labels(&self) -> Self {
        SequenceDataset {
            states: None,
            ..self.clone()
        }
    }

    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    /// Rows `[start, start + len)`.
    pub fn slice(&self, start: usize, len: usize) -> Self {
        SequenceDataset {
            time: self.time[start..start + len].to_vec(),
            measurements: self.measurements.slice_rows(start, len),
            states: self.states.as_ref().map(|s| s.slice_rows(start, len)),
            domain: self.domain,
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    /// Split into the first `n` rows and the rest.
    pub fn split_at(&self, n: usize) -> Result<(Self, Self)> {
        if n > self.len() {
            return Err(DsvbError::TooShort {
                len: self.len(),
                seq_len: n,
            });
        }
        Ok((self.slice(0, n), self.slice(n, self.len() - n)))
    }
}

/// Group consecutive chunks of `chunk_len` rows by length: all full chunks
/// first, then the trailing partial chunk if any. Each entry is
/// `(length, start rows)`.
pub fn chunk_layout(rows: usize, chunk_len: usize) -> Vec<(usize, Vec<usize>)> {
    let chunk_len = chunk_len.max(1);
    let full = rows / chunk_len;
    let mut out = Vec::new();
    if full > 0 {
        out.push((chunk_len, (0..full).map(|i| i * chunk_len).collect()));
    }
    let rest = rows - full * chunk_len;
    if rest > 0 {
        out.push((rest, vec![full * chunk_len]));
    }
    out
}

/// Per-step batch tensors `[starts.len(), cols]` for `len` steps beginning at
/// each start row of `m`.
pub fn steps_for(m: &Tensor, starts: &[usize], len: usize) -> Vec<Tensor> {
    let cols = m.cols();
    (0..len)
        .map(|t| {
            let mut data = Vec::with_capacity(starts.len() * cols);
            for &s in starts {
                data.extend_from_slice(m.row_slice(s + t));
            }
            Tensor::new(vec![starts.len(), cols], data).expect("row copies")
        })
        .collect()
}
