use rand::seq::SliceRandom;
use rand::RngCore;

use crate::checkpoint::{Checkpoint, CheckpointMeta};
use crate::dat::{adversarial_round, Discriminator, RoundOptimizers, RoundSettings};
use crate::data::{window, SequenceBatch, SequenceDataset, Window};
use crate::diffcore::{Graph, Tensor};
use crate::error::{DsvbError, Result};
use crate::loss::{LossBreakdown, LossWeights};
use crate::vrnn::{filter_sequence, Noise, VrnnModel};

use super::{
    diverged, rmse_of, stream, EpochRecord, TrainConfig, TrainLogger, TrainOutcome, DATA_STREAM,
    INIT_STREAM, NOISE_STREAM,
};

/// Adversarial semi-supervised training.
///
/// `source` must be labelled; `target` labels, if any, are dropped before
/// training starts. Both are expected to be normalised already.
pub fn train(
    config: &TrainConfig,
    seed: u64,
    source: &SequenceDataset,
    target: &SequenceDataset,
    validation: Option<&SequenceDataset>,
    logger: &mut dyn TrainLogger,
) -> Result<TrainOutcome<VrnnModel>> {
    config.validate()?;
    let Some(n_x) = source.n_x() else {
        return Err(DsvbError::InvalidConfig("source data must carry state labels".into()));
    };
    if source.n_y() != target.n_y() {
        return Err(DsvbError::shape(
            "train",
            format!("source has {} measurement channels, target {}", source.n_y(), target.n_y()),
        ));
    }
    let target = target.without_labels();
    let mut init = stream(seed, INIT_STREAM);
    let mut model = VrnnModel::new(config.vrnn_arch(source.n_y(), n_x), &mut init)?;
    let mut disc = Discriminator::new(config.disc_arch(n_x), &mut init)?;
    let mut data_rng = stream(seed, DATA_STREAM);
    let mut noise_rng = stream(seed, NOISE_STREAM);

    let src_windows = window(source, config.seq_len, config.stride)?;
    let tgt_windows = window(&target, config.seq_len, config.stride)?;
    let half = config.batch_size / 2;
    let pairs = src_windows.len().min(tgt_windows.len());
    let batches_per_epoch = pairs.div_ceil(half);
    let total_batches = (batches_per_epoch * config.epochs) as f64;

    let mut opt = RoundOptimizers::new(&model, &disc, config.learning_rate);
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, VrnnModel)> = None;

    for epoch in 0..config.epochs {
        let snapshot = model.clone();
        let mut src: Vec<&Window> = src_windows.iter().collect();
        let mut tgt: Vec<&Window> = tgt_windows.iter().collect();
        src.shuffle(&mut data_rng);
        tgt.shuffle(&mut data_rng);

        let mut mean = LossBreakdown::default();
        let mut acc_mean = 0.0;
        let mut ss_audit: f64 = 0.0;
        let mut count = 0;
        for (b, (s_chunk, t_chunk)) in src[..pairs]
            .chunks(half)
            .zip(tgt[..pairs].chunks(half))
            .enumerate()
        {
            let src_batch = SequenceBatch::from_windows(s_chunk)?;
            let tgt_batch = SequenceBatch::from_windows(t_chunk)?;
            let progress = (epoch * batches_per_epoch + b) as f64 / total_batches;
            let settings = RoundSettings {
                n_particles: config.n_particles,
                weights: LossWeights {
                    kld_weight: config.kld_weight,
                    ss_weight: config.ss_weight,
                    lambda: config.lambda_at(progress),
                },
                bce_scope: config.bce_scope,
                adversarial_scale: config.adversarial_scale,
                grad_clip: config.grad_clip,
            };
            let report = adversarial_round(
                &src_batch,
                &tgt_batch,
                &mut model,
                &mut disc,
                &mut opt,
                &settings,
                &mut noise_rng,
            )
            .map_err(|e| {
                let good = if model.params.all_finite() { &model } else { &snapshot };
                diverged(e, epoch, b, || {
                    Some(Checkpoint::from_vrnn(
                        good,
                        Some(&disc),
                        None,
                        CheckpointMeta {
                            seed,
                            epoch,
                            ..CheckpointMeta::default()
                        },
                    ))
                })
            })?;
            count += 1;
            mean.accumulate_mean(&report.loss, count);
            acc_mean += (report.discriminator_accuracy - acc_mean) / count as f64;
            ss_audit = ss_audit.max(report.target_ss.abs());
            let n_y = source.n_y();
            logger.batch(
                epoch,
                b,
                &serde_json::json!({
                    "loss": report.loss,
                    "per_step_dim": report.loss.per_step_dim(n_y, n_x),
                    "discriminator_accuracy": report.discriminator_accuracy,
                    "target_ss": report.target_ss,
                }),
            )?;
        }
        let val = match validation {
            Some(v) => {
                let truth = v
                    .states
                    .as_ref()
                    .ok_or_else(|| DsvbError::InvalidConfig("validation split needs labels".into()))?;
                let (est, _) = model.estimate(&v.measurements, config.seq_len)?;
                Some(rmse_of(&est, truth)?)
            }
            None => None,
        };
        let record = EpochRecord {
            epoch,
            batches: count,
            generator_total: mean.total,
            loss: Some(mean),
            mse: None,
            discriminator_accuracy: Some(acc_mean),
            target_ss_audit: Some(ss_audit),
            source_validation_rmse: val,
        };
        log::info!(
            "seed {seed} epoch {epoch}: total {:.4} disc acc {:.3} val rmse {:?}",
            record.generator_total,
            acc_mean,
            val
        );
        logger.epoch(&record)?;
        let score = val.unwrap_or(record.generator_total);
        history.push(record);
        if best.as_ref().is_none_or(|(s, _, _)| score < *s) {
            best = Some((score, epoch, model.clone()));
        }
    }
    let (_, best_epoch, best_model) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        model,
        discriminator: Some(disc),
        history,
        best: best_model,
        best_epoch,
    })
}

/// Accuracy of `disc` on equal numbers of source and target windows, each
/// rolled out through `model` with sampled latents.
pub fn discriminator_accuracy(
    model: &VrnnModel,
    disc: &Discriminator,
    source: &[Window],
    target: &[Window],
    n_particles: usize,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    let n = source.len().min(target.len());
    if n == 0 {
        return Err(DsvbError::EmptyDataset("no windows to classify".into()));
    }
    let mut hits = 0usize;
    let mut total = 0usize;
    for (windows, label) in [(&source[..n], true), (&target[..n], false)] {
        let refs: Vec<&Window> = windows.iter().collect();
        for chunk in refs.chunks(64) {
            let batch = SequenceBatch::from_windows(chunk)?;
            let mut g = Graph::new();
            let mut p = model.params.bind(false);
            let rollout = filter_sequence(
                &mut g,
                &mut p,
                model,
                &batch.measurements,
                n_particles,
                &mut Noise::Sample(&mut *rng),
            )?;
            let latents: Vec<Tensor> = rollout.latents().iter().map(|&v| g.value(v).clone()).collect();
            for prob in disc.classify(&latents)? {
                total += 1;
                if (prob > 0.5) == label {
                    hits += 1;
                }
            }
        }
    }
    Ok(hits as f64 / total as f64)
}
