//! Deterministic recurrent regressor trained on source labels only.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cells::{CellType, RnnCell};
use crate::data::{chunk_layout, steps_for, window, SequenceBatch, SequenceDataset, Window};
use crate::diffcore::{Graph, Tensor, Var};
use crate::error::{DsvbError, Result};
use crate::nn::{Activation, Bound, Mlp, ParamStore};

use crate::checkpoint::{Checkpoint, CheckpointMeta};

use super::adam::{clip_global_norm, Adam};
use super::{diverged, rmse_of, stream, EpochRecord, TrainConfig, TrainLogger, TrainOutcome, DATA_STREAM, INIT_STREAM};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineArch {
    pub n_y: usize,
    pub n_x: usize,
    pub cell: CellType,
    pub hidden_size: usize,
    pub head_hidden: Vec<usize>,
}

impl BaselineArch {
    /// Hidden state 128 followed by a {128} head.
    pub fn standard(n_y: usize, n_x: usize, cell: CellType) -> Self {
        BaselineArch {
            n_y,
            n_x,
            cell,
            hidden_size: 128,
            head_hidden: vec![128],
        }
    }

    pub fn tiny(n_y: usize, n_x: usize, cell: CellType, width: usize) -> Self {
        BaselineArch {
            n_y,
            n_x,
            cell,
            hidden_size: width,
            head_hidden: vec![width],
        }
    }
}

#[derive(Clone, Debug)]
pub struct BaselineModel {
    pub arch: BaselineArch,
    pub params: ParamStore,
    pub rnn: RnnCell,
    pub head: Mlp,
}

impl BaselineModel {
    pub fn new<R: Rng + ?Sized>(arch: BaselineArch, rng: &mut R) -> Result<Self> {
        if arch.n_y == 0 || arch.n_x == 0 || arch.hidden_size == 0 || arch.head_hidden.contains(&0) {
            return Err(DsvbError::InvalidConfig("zero-sized baseline dimension".into()));
        }
        let mut params = ParamStore::new();
        let rnn = RnnCell::new(arch.cell, &mut params, "rnn", arch.n_y, arch.hidden_size, rng);
        let head = Mlp::new(
            &mut params,
            "head",
            arch.hidden_size,
            &arch.head_hidden,
            arch.n_x,
            Activation::Identity,
            rng,
        );
        Ok(BaselineModel {
            arch,
            params,
            rnn,
            head,
        })
    }

    /// State prediction at every step: `x̂_n = head(h_n)`, `h_n = rnn(y_n, h_{n-1})`.
    pub fn forward(&self, g: &mut Graph, p: &mut Bound, y_seq: &[Tensor]) -> Result<Vec<Var>> {
        let Some(first) = y_seq.first() else {
            return Err(DsvbError::EmptyDataset("baseline needs at least one step".into()));
        };
        let mut state = self.rnn.zero_state(g, first.rows());
        let mut out = Vec::with_capacity(y_seq.len());
        for y in y_seq {
            if y.cols() != self.arch.n_y || y.rows() != first.rows() {
                return Err(DsvbError::shape(
                    "baseline",
                    format!("step shape {:?}, expected [{}, {}]", y.shape(), first.rows(), self.arch.n_y),
                ));
            }
            let y = g.constant(y.clone());
            state = self.rnn.step(g, p, y, state)?;
            out.push(self.head.forward(g, p, state.hidden)?);
        }
        Ok(out)
    }

    /// Predictions for a measurement matrix `[T, n_y]`, run in consecutive
    /// chunks of `chunk_len` from a zero state.
    pub fn estimate(&self, measurements: &Tensor, chunk_len: usize) -> Result<Tensor> {
        let n_x = self.arch.n_x;
        let mut mean = Tensor::zeros(&[measurements.rows(), n_x]);
        for (len, starts) in chunk_layout(measurements.rows(), chunk_len) {
            let steps = steps_for(measurements, &starts, len);
            let mut g = Graph::new();
            let mut p = self.params.bind(false);
            let preds = self.forward(&mut g, &mut p, &steps)?;
            for (t, v) in preds.iter().enumerate() {
                let val = g.value(*v);
                for (b, &start) in starts.iter().enumerate() {
                    let row = start + t;
                    mean.data_mut()[row * n_x..(row + 1) * n_x].copy_from_slice(val.row_slice(b));
                }
            }
        }
        Ok(mean)
    }
}

/// Mean squared error over steps, rows and channels.
pub fn mse_loss(g: &mut Graph, preds: &[Var], targets: &[Tensor]) -> Result<Var> {
    let mut total: Option<Var> = None;
    for (p, t) in preds.iter().zip(targets) {
        let t = g.constant(t.clone());
        let d = g.sub(*p, t)?;
        let d2 = g.square(d)?;
        let s = g.mean(d2)?;
        total = Some(match total {
            Some(acc) => g.add(acc, s)?,
            None => s,
        });
    }
    let total = total.ok_or_else(|| DsvbError::EmptyDataset("no steps".into()))?;
    Ok(g.scale(total, 1.0 / preds.len() as f64))
}

/// One optimisation step on a labelled batch. Returns the batch MSE.
pub fn baseline_step(model: &mut BaselineModel, opt: &mut Adam, batch: &SequenceBatch, clip: Option<f64>) -> Result<f64> {
    let Some(states) = &batch.states else {
        return Err(DsvbError::InvalidConfig("baseline batches need state labels".into()));
    };
    let mut g = Graph::new();
    let mut p = model.params.bind(true);
    let preds = model.forward(&mut g, &mut p, &batch.measurements)?;
    let loss = mse_loss(&mut g, &preds, states)?;
    let value = g.value(loss).item();
    if !value.is_finite() {
        return Err(DsvbError::NumericalDivergence(format!("baseline loss is {value}")));
    }
    g.backward(loss)?;
    let mut grads = p.grads(&g);
    drop(p);
    if let Some(c) = clip {
        clip_global_norm(&mut grads, c);
    }
    if grads.iter().any(|t| !t.is_finite()) {
        return Err(DsvbError::NumericalDivergence("non-finite baseline gradient".into()));
    }
    opt.step(model.params.values_mut(), &grads)?;
    if !model.params.all_finite() {
        return Err(DsvbError::NumericalDivergence("non-finite baseline parameter".into()));
    }
    Ok(value)
}

/// Supervised training on normalised, labelled source data.
pub fn train_baseline(
    config: &TrainConfig,
    seed: u64,
    source: &SequenceDataset,
    validation: Option<&SequenceDataset>,
    logger: &mut dyn TrainLogger,
) -> Result<TrainOutcome<BaselineModel>> {
    config.validate()?;
    let Some(n_x) = source.n_x() else {
        return Err(DsvbError::InvalidConfig("baseline training needs labelled source data".into()));
    };
    let arch = config.baseline_arch(source.n_y(), n_x);
    let mut model = BaselineModel::new(arch, &mut stream(seed, INIT_STREAM))?;
    let mut data_rng = stream(seed, DATA_STREAM);
    let windows = window(source, config.seq_len, config.stride)?;
    let mut opt = Adam::new(model.params.values(), config.learning_rate);
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, BaselineModel)> = None;

    for epoch in 0..config.epochs {
        let snapshot = model.clone();
        let mut order: Vec<&Window> = windows.iter().collect();
        order.shuffle(&mut data_rng);
        let mut mean = 0.0;
        let mut count = 0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch = SequenceBatch::from_windows(chunk)?;
            let loss = baseline_step(&mut model, &mut opt, &batch, config.grad_clip).map_err(|e| {
                let good = if model.params.all_finite() { &model } else { &snapshot };
                diverged(e, epoch, b, || {
                    Some(Checkpoint::from_baseline(good, None, CheckpointMeta {
                        seed,
                        epoch,
                        ..CheckpointMeta::default()
                    }))
                })
            })?;
            count += 1;
            mean += (loss - mean) / count as f64;
            logger.batch(epoch, b, &serde_json::json!({ "mse": loss }))?;
        }
        let val = match validation {
            Some(v) => {
                let truth = v
                    .states
                    .as_ref()
                    .ok_or_else(|| DsvbError::InvalidConfig("validation split needs labels".into()))?;
                Some(rmse_of(&model.estimate(&v.measurements, config.seq_len)?, truth)?)
            }
            None => None,
        };
        let record = EpochRecord {
            epoch,
            batches: count,
            loss: None,
            mse: Some(mean),
            generator_total: mean,
            discriminator_accuracy: None,
            target_ss_audit: None,
            source_validation_rmse: val,
        };
        logger.epoch(&record)?;
        history.push(record);
        let score = val.unwrap_or(mean);
        if best.as_ref().is_none_or(|(s, _, _)| score < *s) {
            best = Some((score, epoch, model.clone()));
        }
    }
    let (_, best_epoch, best_model) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        model,
        discriminator: None,
        history,
        best: best_model,
        best_epoch,
    })
}
