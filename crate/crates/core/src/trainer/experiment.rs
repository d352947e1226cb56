//! Multi-seed comparison of the recurrent baselines against DSVB.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cells::CellType;
use crate::checkpoint::{Checkpoint, CheckpointMeta};
use crate::data::{window, NormalizationStats, SequenceDataset};
use crate::error::{DsvbError, Result};
use crate::scenarios::ScenarioData;

use super::{
    discriminator_accuracy, rmse_of, rmse_per_channel, stream, train, train_baseline, NullLogger,
    TrainConfig,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Method {
    pub dsvb: bool,
    pub cell: CellType,
}

impl Method {
    /// Baseline GRU, baseline LSTM, DSVB-GRU, DSVB-LSTM.
    pub fn all() -> [Method; 4] {
        [
            Method { dsvb: false, cell: CellType::Gru },
            Method { dsvb: false, cell: CellType::Lstm },
            Method { dsvb: true, cell: CellType::Gru },
            Method { dsvb: true, cell: CellType::Lstm },
        ]
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cell = self.cell.as_str().to_uppercase();
        if self.dsvb {
            write!(f, "DSVB-{cell}")
        } else {
            write!(f, "{cell}")
        }
    }
}

impl FromStr for Method {
    type Err = DsvbError;
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let (dsvb, cell) = match lower.strip_prefix("dsvb-") {
            Some(rest) => (true, rest),
            None => (false, lower.as_str()),
        };
        Ok(Method {
            dsvb,
            cell: cell.parse()?,
        })
    }
}

/// State RMSE of one model on one labelled split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub rmse: f64,
    pub rmse_denormalized: f64,
    pub per_channel: Vec<f64>,
    pub per_channel_denormalized: Vec<f64>,
}

/// Apply a checkpoint to a labelled dataset in original units and score the
/// posterior-mean (or regression) estimates.
pub fn evaluate_checkpoint(ck: &Checkpoint, ds: &SequenceDataset, chunk_len: usize) -> Result<EvalResult> {
    let stats = ck
        .normalization
        .as_ref()
        .ok_or_else(|| DsvbError::Checkpoint("checkpoint has no normalization statistics".into()))?;
    let truth = ds
        .states
        .as_ref()
        .ok_or_else(|| DsvbError::InvalidConfig("evaluation data needs state labels".into()))?;
    let model = ck.build()?;
    let est = model.estimate(&stats.normalize_measurements(&ds.measurements)?, chunk_len)?;
    let truth_n = stats.normalize_states(truth)?;
    let est_raw = stats.denormalize_states(&est.mean)?;
    Ok(EvalResult {
        rmse: rmse_of(&est.mean, &truth_n)?,
        rmse_denormalized: rmse_of(&est_raw, truth)?,
        per_channel: rmse_per_channel(&est.mean, &truth_n)?,
        per_channel_denormalized: rmse_per_channel(&est_raw, truth)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub source: EvalResult,
    pub target: EvalResult,
    pub final_loss: f64,
    /// Held-out discriminator accuracy (DSVB only).
    pub discriminator_accuracy: Option<f64>,
    /// Mean training accuracy of the discriminator in the last epoch.
    pub final_epoch_train_accuracy: Option<f64>,
}

/// Mean and sample standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmseSummary {
    pub mean: f64,
    pub std: f64,
}

impl RmseSummary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        RmseSummary { mean, std }
    }
}

impl fmt::Display for RmseSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}±{:.3}", self.mean, self.std)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: String,
    pub source: RmseSummary,
    pub target: RmseSummary,
    pub source_denormalized: RmseSummary,
    pub target_denormalized: RmseSummary,
    pub seeds: Vec<SeedResult>,
}

impl MethodRow {
    pub fn from_seeds(method: String, seeds: Vec<SeedResult>) -> Self {
        let pick = |f: &dyn Fn(&SeedResult) -> f64| RmseSummary::of(&seeds.iter().map(f).collect::<Vec<_>>());
        MethodRow {
            method,
            source: pick(&|s| s.source.rmse),
            target: pick(&|s| s.target.rmse),
            source_denormalized: pick(&|s| s.source.rmse_denormalized),
            target_denormalized: pick(&|s| s.target.rmse_denormalized),
            seeds,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub scenario: u32,
    pub rows: Vec<MethodRow>,
}

impl ExperimentReport {
    pub fn row(&self, method: &str) -> Option<&MethodRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// `method,source,target` with `mean±std` cells.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,source,target\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.method, r.source, r.target));
        }
        out
    }
}

/// Split `ds` into training and validation parts (last `fraction` of rows).
pub fn holdout(ds: &SequenceDataset, fraction: f64, seq_len: usize) -> Result<(SequenceDataset, Option<SequenceDataset>)> {
    let n_val = (ds.len() as f64 * fraction).round() as usize;
    if n_val < seq_len || ds.len() - n_val < seq_len {
        return Ok((ds.clone(), None));
    }
    let (train, val) = ds.split_at(ds.len() - n_val)?;
    Ok((train, Some(val)))
}

pub const VALIDATION_FRACTION: f64 = 0.1;

/// Train and evaluate every method for every seed in `config.seeds`.
pub fn run_experiment(data: &ScenarioData, config: &TrainConfig, methods: &[Method]) -> Result<ExperimentReport> {
    config.validate()?;
    let stats = NormalizationStats::fit(&data.source_train)?;
    let (train_raw, val_raw) = holdout(&data.source_train, VALIDATION_FRACTION, config.seq_len)?;
    let source = stats.apply(&train_raw)?;
    let validation = val_raw.map(|v| stats.apply(&v)).transpose()?;
    let target = stats.apply(&data.target_train)?;
    let source_test = data.source_test.clone();
    let target_test = data.target_test_labelled();

    let jobs: Vec<(Method, u64)> = methods
        .iter()
        .flat_map(|&m| config.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let results: Vec<Result<(Method, SeedResult)>> = jobs
        .par_iter()
        .map(|&(method, seed)| {
            let cfg = TrainConfig {
                cell: method.cell,
                ..config.clone()
            };
            let meta = |final_loss: f64| CheckpointMeta {
                seed,
                epoch: cfg.epochs,
                final_loss: Some(final_loss),
                source_validation_rmse: None,
            };
            let (ck, final_loss, train_acc, disc_acc) = if method.dsvb {
                let out = train(&cfg, seed, &source, &target, validation.as_ref(), &mut NullLogger)?;
                let last = out.history.last().expect("epochs > 0");
                let disc = out.discriminator.as_ref().expect("dsvb trains a discriminator");
                let s_test = window(&stats.apply(&source_test)?, cfg.seq_len, cfg.seq_len)?;
                let t_test = window(&stats.apply(&data.target_test)?, cfg.seq_len, cfg.seq_len)?;
                let acc = discriminator_accuracy(
                    &out.model,
                    disc,
                    &s_test,
                    &t_test,
                    cfg.n_particles,
                    &mut stream(seed, 99),
                )?;
                (
                    Checkpoint::from_vrnn(&out.model, Some(disc), Some(stats.clone()), meta(last.generator_total)),
                    last.generator_total,
                    last.discriminator_accuracy,
                    Some(acc),
                )
            } else {
                let out = train_baseline(&cfg, seed, &source, validation.as_ref(), &mut NullLogger)?;
                let last = out.history.last().expect("epochs > 0").generator_total;
                (
                    Checkpoint::from_baseline(&out.model, Some(stats.clone()), meta(last)),
                    last,
                    None,
                    None,
                )
            };
            let result = SeedResult {
                seed,
                source: evaluate_checkpoint(&ck, &source_test, cfg.seq_len)?,
                target: evaluate_checkpoint(&ck, &target_test, cfg.seq_len)?,
                final_loss,
                discriminator_accuracy: disc_acc,
                final_epoch_train_accuracy: train_acc,
            };
            log::info!(
                "{method} seed {seed}: source {:.4} target {:.4}",
                result.source.rmse,
                result.target.rmse
            );
            Ok((method, result))
        })
        .collect();

    let mut rows = Vec::new();
    let mut done: Vec<(Method, SeedResult)> = Vec::with_capacity(results.len());
    for r in results {
        done.push(r?);
    }
    for &m in methods {
        let seeds: Vec<SeedResult> = done
            .iter()
            .filter(|(dm, _)| *dm == m)
            .map(|(_, r)| r.clone())
            .collect();
        rows.push(MethodRow::from_seeds(m.to_string(), seeds));
    }
    Ok(ExperimentReport {
        scenario: data.scenario.id,
        rows,
    })
}
