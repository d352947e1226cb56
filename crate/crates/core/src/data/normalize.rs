use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::error::{DsvbError, Result};

use super::SequenceDataset;

/// Lower bound applied to every fitted standard deviation.
pub const MIN_STD: f64 = 1e-8;

/// Per-channel affine normalisation, fitted on the source training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub measurement_mean: Vec<f64>,
    pub measurement_std: Vec<f64>,
    pub state_mean: Vec<f64>,
    pub state_std: Vec<f64>,
}

fn column_stats(m: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let (rows, cols) = (m.rows(), m.cols());
    let mut mean = vec![0.0; cols];
    for r in 0..rows {
        for (acc, v) in mean.iter_mut().zip(m.row_slice(r)) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= rows as f64);
    let mut var = vec![0.0; cols];
    for r in 0..rows {
        for ((acc, v), mu) in var.iter_mut().zip(m.row_slice(r)).zip(&mean) {
            *acc += (v - mu) * (v - mu);
        }
    }
    let std = var
        .iter()
        .map(|v| (v / rows as f64).sqrt().max(MIN_STD))
        .collect();
    (mean, std)
}

fn affine(m: &Tensor, mean: &[f64], std: &[f64], forward: bool) -> Result<Tensor> {
    if m.cols() != mean.len() {
        return Err(DsvbError::shape(
            "normalize",
            format!("{} columns, stats for {}", m.cols(), mean.len()),
        ));
    }
    let cols = m.cols();
    let mut out = m.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        let c = i % cols;
        *v = if forward {
            (*v - mean[c]) / std[c]
        } else {
            *v * std[c] + mean[c]
        };
    }
    Ok(out)
}

impl NormalizationStats {
    /// Population mean and std of every channel; the dataset must carry labels.
    pub fn fit(ds: &SequenceDataset) -> Result<Self> {
        if ds.is_empty() {
            return Err(DsvbError::EmptyDataset("cannot fit a normalizer on no rows".into()));
        }
        let Some(states) = &ds.states else {
            return Err(DsvbError::InvalidConfig(
                "normalizer must be fitted on a labelled source split".into(),
            ));
        };
        let (measurement_mean, measurement_std) = column_stats(&ds.measurements);
        let (state_mean, state_std) = column_stats(states);
        Ok(NormalizationStats {
            measurement_mean,
            measurement_std,
            state_mean,
            state_std,
        })
    }

    pub fn apply(&self, ds: &SequenceDataset) -> Result<SequenceDataset> {
        Ok(SequenceDataset {
            measurements: self.normalize_measurements(&ds.measurements)?,
            states: ds.states.as_ref().map(|s| self.normalize_states(s)).transpose()?,
            ..ds.clone()
        })
    }

    pub fn invert(&self, ds: &SequenceDataset) -> Result<SequenceDataset> {
        Ok(SequenceDataset {
            measurements: affine(&ds.measurements, &self.measurement_mean, &self.measurement_std, false)?,
            states: ds.states.as_ref().map(|s| self.denormalize_states(s)).transpose()?,
            ..ds.clone()
        })
    }

    pub fn normalize_measurements(&self, m: &Tensor) -> Result<Tensor> {
        affine(m, &self.measurement_mean, &self.measurement_std, true)
    }

    pub fn normalize_states(&self, s: &Tensor) -> Result<Tensor> {
        affine(s, &self.state_mean, &self.state_std, true)
    }

    pub fn denormalize_states(&self, s: &Tensor) -> Result<Tensor> {
        affine(s, &self.state_mean, &self.state_std, false)
    }

    /// Scale normalised standard deviations back to state units.
    pub fn denormalize_state_std(&self, s: &Tensor) -> Result<Tensor> {
        affine(s, &vec![0.0; self.state_std.len()], &self.state_std, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Domain;

    fn dataset() -> SequenceDataset {
        let rows = 50;
        let m: Vec<f64> = (0..rows * 2).map(|i| (i as f64 * 0.37).sin() * 3.0 + 1.0).collect();
        let mut s: Vec<f64> = (0..rows * 3).map(|i| (i as f64 * 0.11).cos() * 0.2).collect();
        for r in 0..rows {
            s[r * 3 + 2] = 4.0;
        }
        SequenceDataset::new(
            (0..rows).map(|i| i as f64 / 10.0).collect(),
            Tensor::matrix(rows, 2, m).unwrap(),
            Some(Tensor::matrix(rows, 3, s).unwrap()),
            Domain::Source,
            10.0,
        )
        .unwrap()
    }

    #[test]
    fn fitted_split_is_standardised() {
        let ds = dataset();
        let stats = NormalizationStats::fit(&ds).unwrap();
        let n = stats.apply(&ds).unwrap();
        let (mean, std) = column_stats(&n.measurements);
        for (m, s) in mean.iter().zip(&std) {
            assert!(m.abs() < 1e-10);
            assert!((s - 1.0).abs() < 1e-10);
        }
        let states = n.states.unwrap();
        let (mean, std) = column_stats(&states);
        assert!((std[0] - 1.0).abs() < 1e-10 && mean[0].abs() < 1e-10);
        assert_eq!(stats.state_std[2], MIN_STD);
        assert!((0..states.rows()).all(|r| states.get(r, 2) == 0.0));
    }

    #[test]
    fn roundtrip() {
        let ds = dataset();
        let stats = NormalizationStats::fit(&ds).unwrap();
        let back = stats.invert(&stats.apply(&ds).unwrap()).unwrap();
        for (a, b) in back.measurements.data().iter().zip(ds.measurements.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn unlabelled_fit_is_rejected() {
        assert!(NormalizationStats::fit(&dataset().without_labels()).is_err());
    }
}
