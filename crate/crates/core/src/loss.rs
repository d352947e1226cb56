//! Objective assembly: sequential ELBO terms, the label-gated state term and
//! the domain-classification cross entropy.
//!
//! Everything is expressed as a quantity to minimise. The generator objective
//! is `recon + w_kld·kld + w_ss·ss − λ·bce`; the discriminator minimises `bce`.

use serde::{Deserialize, Serialize};

use crate::diffcore::{softplus, Graph, Tensor, Var};
use crate::error::{DsvbError, Result};
use crate::vrnn::{gaussian_kld, gaussian_nll, Rollout};

/// Probabilities are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` before the log.
pub const BCE_CLAMP: f64 = 1e-7;

fn finite(name: &str, g: &Graph, v: Var) -> Result<()> {
    let x = g.value(v).item();
    if x.is_finite() {
        Ok(())
    } else {
        Err(DsvbError::NumericalDivergence(format!("{name} is {x}")))
    }
}

fn accumulate(g: &mut Graph, acc: Option<Var>, term: Var) -> Result<Var> {
    match acc {
        None => Ok(term),
        Some(a) => g.add(a, term),
    }
}

/// Reconstruction NLL and analytic KLD of a rollout, each summed over steps
/// and dimensions and averaged over particle rows.
pub fn selbo_loss(g: &mut Graph, rollout: &Rollout) -> Result<(Var, Var)> {
    let mut recon = None;
    let mut kld = None;
    for step in &rollout.steps {
        let r = gaussian_nll(g, step.observation, &step.decoded)?;
        recon = Some(accumulate(g, recon, r)?);
        let k = gaussian_kld(g, &step.posterior, &step.prior)?;
        kld = Some(accumulate(g, kld, k)?);
    }
    let (Some(recon), Some(kld)) = (recon, kld) else {
        return Err(DsvbError::EmptyDataset("rollout has no steps".into()));
    };
    let scale = 1.0 / rollout.rows() as f64;
    let recon = g.scale(recon, scale);
    let kld = g.scale(kld, scale);
    finite("reconstruction NLL", g, recon)?;
    finite("KLD", g, kld)?;
    Ok((recon, kld))
}

/// NLL of state labels under the prior, summed over the steps whose mask is
/// set and averaged over particle rows. Exactly zero when no step is labelled.
pub fn ss_loss(
    g: &mut Graph,
    rollout: &Rollout,
    states: Option<&[Tensor]>,
    mask: &[bool],
) -> Result<Var> {
    if mask.len() != rollout.steps.len() {
        return Err(DsvbError::shape(
            "ss_loss",
            format!("mask has {} steps, rollout {}", mask.len(), rollout.steps.len()),
        ));
    }
    if !mask.iter().any(|&m| m) {
        return Ok(g.constant(Tensor::scalar(0.0)));
    }
    let Some(states) = states else {
        return Err(DsvbError::shape("ss_loss", "mask is set but no state labels given"));
    };
    if states.len() != mask.len() {
        return Err(DsvbError::shape(
            "ss_loss",
            format!("{} label steps for {} rollout steps", states.len(), mask.len()),
        ));
    }
    let mut total = None;
    for ((step, labels), _) in rollout
        .steps
        .iter()
        .zip(states)
        .zip(mask)
        .filter(|(_, &m)| m)
    {
        let target = if rollout.particles == 1 {
            labels.clone()
        } else {
            labels.tile_rows(rollout.particles)
        };
        let target = g.constant(target);
        let nll = gaussian_nll(g, target, &step.prior)?;
        total = Some(accumulate(g, total, nll)?);
    }
    let total = g.scale(total.expect("mask has a set step"), 1.0 / rollout.rows() as f64);
    finite("state NLL", g, total)?;
    Ok(total)
}

/// Mean binary cross entropy of probabilities against `{0, 1}` labels.
pub fn bce_loss(probs: &[f64], labels: &[f64]) -> Result<f64> {
    if probs.len() != labels.len() || probs.is_empty() {
        return Err(DsvbError::shape(
            "bce_loss",
            format!("{} probabilities for {} labels", probs.len(), labels.len()),
        ));
    }
    let mut total = 0.0;
    for (&p, &a) in probs.iter().zip(labels) {
        if !(0.0..=1.0).contains(&p) {
            return Err(DsvbError::domain("bce_loss", format!("probability {p} outside [0, 1]")));
        }
        let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        total -= a * p.ln() + (1.0 - a) * (1.0 - p).ln();
    }
    Ok(total / probs.len() as f64)
}

/// Mean BCE computed from logits `[rows, 1]`:
/// `a·softplus(−z) + (1 − a)·softplus(z)`.
pub fn bce_with_logits(g: &mut Graph, logits: Var, labels: &[f64]) -> Result<Var> {
    let rows = g.value(logits).rows();
    if g.value(logits).numel() != rows || labels.len() != rows {
        return Err(DsvbError::shape(
            "bce_with_logits",
            format!("logits {:?} for {} labels", g.value(logits).shape(), labels.len()),
        ));
    }
    let pos = g.constant(Tensor::matrix(rows, 1, labels.to_vec())?);
    let neg = g.constant(Tensor::matrix(rows, 1, labels.iter().map(|a| 1.0 - a).collect())?);
    let neg_logits = g.neg(logits);
    let sp_neg = g.softplus(neg_logits)?;
    let sp_pos = g.softplus(logits)?;
    let a = g.mul(pos, sp_neg)?;
    let b = g.mul(neg, sp_pos)?;
    let per_row = g.add(a, b)?;
    g.mean(per_row)
}

/// Plain-value version of [`bce_with_logits`].
pub fn bce_from_logits(logits: &[f64], labels: &[f64]) -> f64 {
    let n = logits.len().max(1) as f64;
    logits
        .iter()
        .zip(labels)
        .map(|(&z, &a)| a * softplus(-z) + (1.0 - a) * softplus(z))
        .sum::<f64>()
        / n
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub kld_weight: f64,
    pub ss_weight: f64,
    pub lambda: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            kld_weight: 1.0,
            ss_weight: 1.0,
            lambda: 1.0,
        }
    }
}

/// Raw term values feeding [`dsvb_total`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub reconstruction_nll: f64,
    pub kld: f64,
    pub supervised_state_nll: f64,
    pub adversarial_bce: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub reconstruction_nll: f64,
    pub kld: f64,
    pub supervised_state_nll: f64,
    pub adversarial_bce: f64,
    /// Generator objective.
    pub total: f64,
    /// Discriminator objective.
    pub discriminator_bce: f64,
    pub kld_weight: f64,
    pub ss_weight: f64,
    pub lambda: f64,
    pub steps: usize,
    pub particles: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PerStepDim {
    pub reconstruction_nll: f64,
    pub kld: f64,
    pub supervised_state_nll: f64,
}

/// Combine loss parts with their weights.
pub fn dsvb_total(parts: LossParts, weights: LossWeights) -> LossBreakdown {
    let total = parts.reconstruction_nll + weights.kld_weight * parts.kld
        + weights.ss_weight * parts.supervised_state_nll
        - weights.lambda * parts.adversarial_bce;
    LossBreakdown {
        reconstruction_nll: parts.reconstruction_nll,
        kld: parts.kld,
        supervised_state_nll: parts.supervised_state_nll,
        adversarial_bce: parts.adversarial_bce,
        total,
        discriminator_bce: parts.adversarial_bce,
        kld_weight: weights.kld_weight,
        ss_weight: weights.ss_weight,
        lambda: weights.lambda,
        steps: 0,
        particles: 0,
    }
}

impl LossBreakdown {
    /// Running mean update used for epoch summaries.
    pub fn accumulate_mean(&mut self, other: &LossBreakdown, count: usize) {
        let w = 1.0 / count as f64;
        let mix = |a: &mut f64, b: f64| *a += (b - *a) * w;
        mix(&mut self.reconstruction_nll, other.reconstruction_nll);
        mix(&mut self.kld, other.kld);
        mix(&mut self.supervised_state_nll, other.supervised_state_nll);
        mix(&mut self.adversarial_bce, other.adversarial_bce);
        mix(&mut self.total, other.total);
        mix(&mut self.discriminator_bce, other.discriminator_bce);
        mix(&mut self.lambda, other.lambda);
        self.kld_weight = other.kld_weight;
        self.ss_weight = other.ss_weight;
        self.steps = other.steps;
        self.particles = other.particles;
    }

    /// Terms divided by steps × dimensions, for comparing runs with different
    /// window lengths. Source and target contributions are both included.
    pub fn per_step_dim(&self, n_y: usize, n_x: usize) -> PerStepDim {
        let steps = self.steps.max(1) as f64;
        PerStepDim {
            reconstruction_nll: self.reconstruction_nll / (steps * n_y as f64),
            kld: self.kld / (steps * n_x as f64),
            supervised_state_nll: self.supervised_state_nll / (steps * n_x as f64),
        }
    }

    pub fn is_finite(&self) -> bool {
        [
            self.reconstruction_nll,
            self.kld,
            self.supervised_state_nll,
            self.adversarial_bce,
            self.total,
            self.discriminator_bce,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}
