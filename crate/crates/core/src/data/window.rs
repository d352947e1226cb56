use crate::diffcore::Tensor;
use crate::error::{DsvbError, Result};

use super::{steps_for, Domain, SequenceDataset};

/// One contiguous slice of a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub start: usize,
    pub measurements: Tensor,
    pub states: Option<Tensor>,
    pub domain: Domain,
}

impl Window {
    pub fn len(&self) -> usize {
        self.measurements.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `floor((T − seq_len) / stride) + 1` windows starting at multiples of `stride`.
pub fn window(ds: &SequenceDataset, seq_len: usize, stride: usize) -> Result<Vec<Window>> {
    if seq_len == 0 || stride == 0 {
        return Err(DsvbError::InvalidConfig("seq_len and stride must be positive".into()));
    }
    if ds.len() < seq_len {
        return Err(DsvbError::TooShort {
            len: ds.len(),
            seq_len,
        });
    }
    let count = (ds.len() - seq_len) / stride + 1;
    Ok((0..count)
        .map(|i| {
            let start = i * stride;
            Window {
                start,
                measurements: ds.measurements.slice_rows(start, seq_len),
                states: ds.states.as_ref().map(|s| s.slice_rows(start, seq_len)),
                domain: ds.domain,
            }
        })
        .collect())
}

/// Windows of one domain laid out step-major for the recurrent models.
#[derive(Clone, Debug)]
pub struct SequenceBatch {
    pub domain: Domain,
    /// One `[batch, n_y]` tensor per step.
    pub measurements: Vec<Tensor>,
    /// One `[batch, n_x]` tensor per step, when every window is labelled.
    pub states: Option<Vec<Tensor>>,
    /// Per-step label availability.
    pub label_mask: Vec<bool>,
}

impl SequenceBatch {
    pub fn from_windows(windows: &[&Window]) -> Result<Self> {
        let Some(first) = windows.first() else {
            return Err(DsvbError::EmptyDataset("batch has no windows".into()));
        };
        let len = first.len();
        if windows.iter().any(|w| w.len() != len || w.domain != first.domain) {
            return Err(DsvbError::shape(
                "SequenceBatch",
                "windows differ in length or domain",
            ));
        }
        let gather = |pick: &dyn Fn(&Window) -> &Tensor| -> Result<Vec<Tensor>> {
            let stacked: Vec<&Tensor> = windows.iter().map(|w| pick(w)).collect();
            let all = Tensor::vstack(&stacked)?;
            let starts: Vec<usize> = (0..windows.len()).map(|i| i * len).collect();
            Ok(steps_for(&all, &starts, len))
        };
        let measurements = gather(&|w| &w.measurements)?;
        let labelled = windows.iter().all(|w| w.states.is_some());
        let states = if labelled {
            Some(gather(&|w| w.states.as_ref().expect("checked"))?)
        } else {
            None
        };
        Ok(SequenceBatch {
            domain: first.domain,
            measurements,
            label_mask: vec![labelled; len],
            states,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.measurements.first().map_or(0, Tensor::rows)
    }

    pub fn steps(&self) -> usize {
        self.measurements.len()
    }
}
