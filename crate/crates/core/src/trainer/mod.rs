//! Training loops, evaluation and multi-seed experiments.

pub mod adam;
pub mod baseline;
mod dsvb;
pub mod experiment;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cells::CellType;
use crate::checkpoint::Checkpoint;
use crate::dat::{AdversarialScale, BceScope, DiscArch};
use crate::diffcore::Tensor;
use crate::error::{DsvbError, Result};
use crate::loss::LossBreakdown;
use crate::vrnn::VrnnArch;

pub use adam::{adam_step, Adam, AdamState};
pub use baseline::{train_baseline, BaselineArch, BaselineModel};
pub use dsvb::{discriminator_accuracy, train};
pub use experiment::{
    evaluate_checkpoint, holdout, run_experiment, EvalResult, ExperimentReport, Method, MethodRow, RmseSummary, SeedResult,
    VALIDATION_FRACTION,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seq_len: usize,
    /// Offset between consecutive training windows.
    pub stride: usize,
    /// Windows per update; split evenly between source and target for DSVB.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub n_particles: usize,
    pub lambda: f64,
    pub kld_weight: f64,
    pub ss_weight: f64,
    /// Fraction of training over which λ ramps linearly from 0.
    pub warmup_fraction: f64,
    pub bce_scope: BceScope,
    pub adversarial_scale: AdversarialScale,
    pub seeds: Vec<u64>,
    pub cell: CellType,
    pub hidden_size: usize,
    /// Replace every layer width by this value (small test models).
    pub layer_width: Option<usize>,
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seq_len: 100,
            stride: 10,
            batch_size: 128,
            learning_rate: 1e-3,
            epochs: 50,
            n_particles: 1,
            lambda: 1.0,
            kld_weight: 1.0,
            ss_weight: 1.0,
            warmup_fraction: 0.1,
            bce_scope: BceScope::default(),
            adversarial_scale: AdversarialScale::default(),
            seeds: vec![0, 1, 2, 3, 4],
            cell: CellType::Gru,
            hidden_size: 128,
            layer_width: None,
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("seq_len", self.seq_len),
            ("stride", self.stride),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("n_particles", self.n_particles),
            ("hidden_size", self.hidden_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(DsvbError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.batch_size < 2 {
            return Err(DsvbError::InvalidConfig("batch_size must be at least 2".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(DsvbError::InvalidConfig("learning_rate must be positive".into()));
        }
        for (name, v) in [
            ("lambda", self.lambda),
            ("kld_weight", self.kld_weight),
            ("ss_weight", self.ss_weight),
        ] {
            if !(v >= 0.0) {
                return Err(DsvbError::InvalidConfig(format!("{name} must be non-negative")));
            }
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return Err(DsvbError::InvalidConfig("warmup_fraction must lie in [0, 1]".into()));
        }
        if self.layer_width == Some(0) {
            return Err(DsvbError::InvalidConfig("layer_width must be positive".into()));
        }
        Ok(())
    }

    pub fn vrnn_arch(&self, n_y: usize, n_x: usize) -> VrnnArch {
        match self.layer_width {
            Some(w) => VrnnArch::tiny(n_y, n_x, self.cell, w),
            None => VrnnArch {
                hidden_size: self.hidden_size,
                ..VrnnArch::standard(n_y, n_x, self.cell)
            },
        }
    }

    pub fn baseline_arch(&self, n_y: usize, n_x: usize) -> BaselineArch {
        match self.layer_width {
            Some(w) => BaselineArch::tiny(n_y, n_x, self.cell, w),
            None => BaselineArch {
                hidden_size: self.hidden_size,
                ..BaselineArch::standard(n_y, n_x, self.cell)
            },
        }
    }

    pub fn disc_arch(&self, n_x: usize) -> DiscArch {
        match self.layer_width {
            Some(w) => DiscArch::tiny(n_x, w),
            None => DiscArch::standard(n_x),
        }
    }

    /// λ after linear warm-up, at `progress` ∈ [0, 1] of training.
    pub fn lambda_at(&self, progress: f64) -> f64 {
        if self.warmup_fraction <= 0.0 {
            self.lambda
        } else {
            self.lambda * (progress / self.warmup_fraction).min(1.0)
        }
    }
}

/// Independent random streams derived from one seed.
pub(crate) fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub(crate) const INIT_STREAM: u64 = 0;
pub(crate) const DATA_STREAM: u64 = 1;
pub(crate) const NOISE_STREAM: u64 = 2;

/// Result of one training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome<M> {
    pub model: M,
    pub discriminator: Option<crate::dat::Discriminator>,
    pub history: Vec<EpochRecord>,
    /// Model at the epoch with the lowest source-validation RMSE (lowest
    /// training loss when no validation split is given).
    pub best: M,
    pub best_epoch: usize,
}

/// Per-epoch summary written to the history file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub batches: usize,
    /// DSVB epoch-mean losses.
    pub loss: Option<LossBreakdown>,
    /// Baseline epoch-mean MSE.
    pub mse: Option<f64>,
    pub generator_total: f64,
    pub discriminator_accuracy: Option<f64>,
    /// Largest |supervised-state term| seen on any target batch this epoch.
    pub target_ss_audit: Option<f64>,
    pub source_validation_rmse: Option<f64>,
}

/// Receives training progress.
pub trait TrainLogger {
    fn batch(&mut self, epoch: usize, batch: usize, record: &serde_json::Value) -> Result<()>;
    fn epoch(&mut self, record: &EpochRecord) -> Result<()>;
}

/// Discards everything.
#[derive(Debug, Default)]
pub struct NullLogger;

impl TrainLogger for NullLogger {
    fn batch(&mut self, _: usize, _: usize, _: &serde_json::Value) -> Result<()> {
        Ok(())
    }
    fn epoch(&mut self, _: &EpochRecord) -> Result<()> {
        Ok(())
    }
}

/// JSON-lines history (one row per epoch) and batch log.
pub struct JsonlLogger {
    history: BufWriter<File>,
    batches: BufWriter<File>,
}

impl JsonlLogger {
    pub fn create(history: &Path, batches: &Path) -> Result<Self> {
        Ok(JsonlLogger {
            history: BufWriter::new(File::create(history)?),
            batches: BufWriter::new(File::create(batches)?),
        })
    }
}

impl TrainLogger for JsonlLogger {
    fn batch(&mut self, epoch: usize, batch: usize, record: &serde_json::Value) -> Result<()> {
        let mut row = serde_json::json!({ "epoch": epoch, "batch": batch });
        if let (Some(dst), Some(src)) = (row.as_object_mut(), record.as_object()) {
            dst.extend(src.iter().map(|(k, v)| (k.clone(), v.clone())));
        }
        serde_json::to_writer(&mut self.batches, &row)?;
        self.batches.write_all(b"\n")?;
        Ok(())
    }

    fn epoch(&mut self, record: &EpochRecord) -> Result<()> {
        serde_json::to_writer(&mut self.history, record)?;
        self.history.write_all(b"\n")?;
        self.history.flush()?;
        self.batches.flush()?;
        Ok(())
    }
}

/// Convert a numerical failure into `TrainingDiverged`.
pub(crate) fn diverged(
    err: DsvbError,
    epoch: usize,
    batch: usize,
    last_good: impl FnOnce() -> Option<Checkpoint>,
) -> DsvbError {
    // A domain error mid-step means the parameters have blown up.
    if matches!(err, DsvbError::NumericalDivergence(_) | DsvbError::DomainError { .. }) {
        DsvbError::TrainingDiverged {
            epoch,
            batch,
            reason: err.to_string(),
            last_good: last_good().map(Box::new),
        }
    } else {
        err
    }
}

/// Root mean squared error over every element.
pub fn rmse_of(pred: &Tensor, truth: &Tensor) -> Result<f64> {
    if pred.shape() != truth.shape() || pred.numel() == 0 {
        return Err(DsvbError::shape(
            "rmse",
            format!("{:?} vs {:?}", pred.shape(), truth.shape()),
        ));
    }
    let sse: f64 = pred
        .data()
        .iter()
        .zip(truth.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((sse / pred.numel() as f64).sqrt())
}

/// RMSE of each column.
pub fn rmse_per_channel(pred: &Tensor, truth: &Tensor) -> Result<Vec<f64>> {
    if pred.shape() != truth.shape() || pred.rank() != 2 || pred.rows() == 0 {
        return Err(DsvbError::shape(
            "rmse",
            format!("{:?} vs {:?}", pred.shape(), truth.shape()),
        ));
    }
    let cols = pred.cols();
    let mut sse = vec![0.0; cols];
    for (i, (a, b)) in pred.data().iter().zip(truth.data()).enumerate() {
        sse[i % cols] += (a - b) * (a - b);
    }
    Ok(sse.iter().map(|s| (s / pred.rows() as f64).sqrt()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_is_linear() {
        let c = TrainConfig::default();
        assert_eq!(c.lambda_at(0.0), 0.0);
        assert!((c.lambda_at(0.05) - 0.5).abs() < 1e-12);
        assert_eq!(c.lambda_at(0.5), 1.0);
        let none = TrainConfig {
            warmup_fraction: 0.0,
            ..c
        };
        assert_eq!(none.lambda_at(0.0), 1.0);
    }

    #[test]
    fn rmse_of_perfect_prediction_is_zero() {
        let t = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(rmse_of(&t, &t).unwrap(), 0.0);
        let z = Tensor::zeros(&[2, 2]);
        assert!((rmse_of(&z, &t).unwrap() - 7.5f64.sqrt()).abs() < 1e-12);
        let per = rmse_per_channel(&z, &t).unwrap();
        assert!((per[0] - 5.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
