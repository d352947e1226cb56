//! Domain discriminator over latent trajectories and the alternating
//! adversarial update.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::cells::GruCell;
use crate::data::SequenceBatch;
use crate::diffcore::{sigmoid, Graph, Tensor, Var};
use crate::error::{DsvbError, Result};
use crate::loss::{bce_with_logits, dsvb_total, selbo_loss, ss_loss, LossBreakdown, LossParts, LossWeights};
use crate::nn::{Activation, Bound, Mlp, ParamStore};
use crate::trainer::adam::{clip_global_norm, Adam};
use crate::vrnn::{filter_sequence, Noise, VrnnModel};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscArch {
    pub n_x: usize,
    pub hidden_size: usize,
    pub head_hidden: Vec<usize>,
}

impl DiscArch {
    /// One GRU layer with 128 hidden units and a {128} head.
    pub fn standard(n_x: usize) -> Self {
        DiscArch {
            n_x,
            hidden_size: 128,
            head_hidden: vec![128],
        }
    }

    pub fn tiny(n_x: usize, width: usize) -> Self {
        DiscArch {
            n_x,
            hidden_size: width,
            head_hidden: vec![width],
        }
    }
}

/// Reads a latent sequence with a GRU and maps the final hidden state to the
/// logit of "source domain".
#[derive(Clone, Debug)]
pub struct Discriminator {
    pub arch: DiscArch,
    pub params: ParamStore,
    pub rnn: GruCell,
    pub head: Mlp,
}

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(arch: DiscArch, rng: &mut R) -> Result<Self> {
        if arch.n_x == 0 || arch.hidden_size == 0 || arch.head_hidden.contains(&0) {
            return Err(DsvbError::InvalidConfig("zero-sized discriminator dimension".into()));
        }
        let mut params = ParamStore::new();
        let rnn = GruCell::new(&mut params, "disc.rnn", arch.n_x, arch.hidden_size, rng);
        let head = Mlp::new(
            &mut params,
            "disc.head",
            arch.hidden_size,
            &arch.head_hidden,
            1,
            Activation::Identity,
            rng,
        );
        Ok(Discriminator {
            arch,
            params,
            rnn,
            head,
        })
    }

    /// `[rows, 1]` logits, one per latent sequence.
    pub fn logits(&self, g: &mut Graph, p: &mut Bound, latents: &[Var]) -> Result<Var> {
        let Some(&first) = latents.first() else {
            return Err(DsvbError::EmptyDataset("discriminator needs at least one step".into()));
        };
        let rows = g.value(first).rows();
        let mut h = g.constant(Tensor::zeros(&[rows, self.arch.hidden_size]));
        for &x in latents {
            if g.value(x).cols() != self.arch.n_x || g.value(x).rows() != rows {
                return Err(DsvbError::shape(
                    "classify",
                    format!("latent step {:?}, expected [{}, {}]", g.value(x).shape(), rows, self.arch.n_x),
                ));
            }
            h = self.rnn.step(g, p, x, h)?;
        }
        self.head.forward(g, p, h)
    }

    /// Probability that each sequence comes from the source domain. `latents`
    /// holds one `[rows, n_x]` tensor per step.
    pub fn classify(&self, latents: &[Tensor]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let mut p = self.params.bind(false);
        let xs: Vec<Var> = latents.iter().map(|t| g.constant(t.clone())).collect();
        let z = self.logits(&mut g, &mut p, &xs)?;
        Ok(g.value(z).data().iter().map(|&v| sigmoid(v)).collect())
    }
}

/// Which VRNN parameters receive the adversarial gradient.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BceScope {
    /// Everything upstream of the latent samples: encoder, recurrence and
    /// feature networks. The decoder and prior never influence the latents.
    #[default]
    LatentPath,
    /// Encoder network only.
    EncoderOnly,
}

/// Weight of the per-window BCE inside the generator objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdversarialScale {
    /// Plain mean BCE per window.
    Window,
    /// Mean BCE multiplied by `steps · n_x / 2`, putting it on the same
    /// footing as the step- and dimension-summed likelihood terms.
    #[default]
    StepDim,
}

impl AdversarialScale {
    pub fn factor(self, steps: usize, n_x: usize) -> f64 {
        match self {
            AdversarialScale::Window => 1.0,
            AdversarialScale::StepDim => (steps * n_x) as f64 / 2.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RoundSettings {
    pub n_particles: usize,
    /// `lambda` here is the effective (warmed-up) weight.
    pub weights: LossWeights,
    pub bce_scope: BceScope,
    pub adversarial_scale: AdversarialScale,
    pub grad_clip: Option<f64>,
}

impl Default for RoundSettings {
    fn default() -> Self {
        RoundSettings {
            n_particles: 1,
            weights: LossWeights::default(),
            bce_scope: BceScope::default(),
            adversarial_scale: AdversarialScale::default(),
            grad_clip: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RoundOptimizers {
    pub generator: Adam,
    pub discriminator: Adam,
}

impl RoundOptimizers {
    pub fn new(model: &VrnnModel, disc: &Discriminator, lr: f64) -> Self {
        RoundOptimizers {
            generator: Adam::new(model.params.values(), lr),
            discriminator: Adam::new(disc.params.values(), lr),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RoundReport {
    pub loss: LossBreakdown,
    /// Discriminator accuracy on this batch before its update.
    pub discriminator_accuracy: f64,
    /// Supervised-state term evaluated on the target half. Always 0.
    pub target_ss: f64,
}

fn labels(rows_s: usize, rows_t: usize) -> Vec<f64> {
    let mut l = vec![1.0; rows_s];
    l.resize(rows_s + rows_t, 0.0);
    l
}

/// Per-window BCE over both domains, weighted by row count.
fn combined_bce(
    g: &mut Graph,
    p: &mut Bound,
    disc: &Discriminator,
    lat_s: &[Var],
    lat_t: &[Var],
) -> Result<(Var, Vec<f64>)> {
    let zs = disc.logits(g, p, lat_s)?;
    let zt = disc.logits(g, p, lat_t)?;
    let (rs, rt) = (g.value(zs).rows(), g.value(zt).rows());
    let bs = bce_with_logits(g, zs, &vec![1.0; rs])?;
    let bt = bce_with_logits(g, zt, &vec![0.0; rt])?;
    let ws = g.scale(bs, rs as f64 / (rs + rt) as f64);
    let wt = g.scale(bt, rt as f64 / (rs + rt) as f64);
    let bce = g.add(ws, wt)?;
    let mut logits = g.value(zs).data().to_vec();
    logits.extend_from_slice(g.value(zt).data());
    Ok((bce, logits))
}

fn accuracy(logits: &[f64], labels: &[f64]) -> f64 {
    let hits = logits
        .iter()
        .zip(labels)
        .filter(|(&z, &a)| (z > 0.0) == (a > 0.5))
        .count();
    hits as f64 / logits.len().max(1) as f64
}

fn check_grads(grads: &[Tensor], what: &str) -> Result<()> {
    if grads.iter().all(Tensor::is_finite) {
        Ok(())
    } else {
        Err(DsvbError::NumericalDivergence(format!("non-finite {what} gradient")))
    }
}

/// One discriminator update on detached latents. Returns the pre-update BCE
/// and accuracy.
pub fn discriminator_step(
    disc: &mut Discriminator,
    opt: &mut Adam,
    lat_s: &[Tensor],
    lat_t: &[Tensor],
    grad_clip: Option<f64>,
) -> Result<(f64, f64)> {
    let mut g = Graph::new();
    let mut p = disc.params.bind(true);
    let xs: Vec<Var> = lat_s.iter().map(|t| g.constant(t.clone())).collect();
    let xt: Vec<Var> = lat_t.iter().map(|t| g.constant(t.clone())).collect();
    let (bce, logits) = combined_bce(&mut g, &mut p, disc, &xs, &xt)?;
    let value = g.value(bce).item();
    if !value.is_finite() {
        return Err(DsvbError::NumericalDivergence(format!("discriminator BCE is {value}")));
    }
    let acc = accuracy(&logits, &labels(lat_s[0].rows(), lat_t[0].rows()));
    g.backward(bce)?;
    let mut grads = p.grads(&g);
    drop(p);
    if let Some(c) = grad_clip {
        clip_global_norm(&mut grads, c);
    }
    check_grads(&grads, "discriminator")?;
    opt.step(disc.params.values_mut(), &grads)?;
    Ok((value, acc))
}

/// Alternating update on one source and one target batch.
///
/// 1. Roll the VRNN out on both batches.
/// 2. Update the discriminator on the detached latent samples.
/// 3. With the updated discriminator frozen, update the VRNN on
///    `recon + w_kld·kld + w_ss·ss − λ·bce`, where the state term only sees
///    the labelled source batch.
pub fn adversarial_round(
    source: &SequenceBatch,
    target: &SequenceBatch,
    model: &mut VrnnModel,
    disc: &mut Discriminator,
    opt: &mut RoundOptimizers,
    settings: &RoundSettings,
    rng: &mut dyn RngCore,
) -> Result<RoundReport> {
    let steps = source.steps();
    if steps == 0 || target.steps() != steps {
        return Err(DsvbError::shape(
            "adversarial_round",
            format!("source has {} steps, target {}", steps, target.steps()),
        ));
    }
    let n_x = model.arch.n_x;
    let w = settings.weights;
    let mut g = Graph::new();
    let mut p = model.params.bind(true);
    let (rs, rt) = {
        let mut noise = Noise::Sample(rng);
        let rs = filter_sequence(&mut g, &mut p, model, &source.measurements, settings.n_particles, &mut noise)?;
        let rt = filter_sequence(&mut g, &mut p, model, &target.measurements, settings.n_particles, &mut noise)?;
        (rs, rt)
    };
    let (recon_s, kld_s) = selbo_loss(&mut g, &rs)?;
    let (recon_t, kld_t) = selbo_loss(&mut g, &rt)?;
    let ss_s = ss_loss(&mut g, &rs, source.states.as_deref(), &source.label_mask)?;
    let ss_t = ss_loss(&mut g, &rt, target.states.as_deref(), &target.label_mask)?;
    let recon = g.add(recon_s, recon_t)?;
    let kld = g.add(kld_s, kld_t)?;
    let ss = g.add(ss_s, ss_t)?;
    let target_ss = g.value(ss_t).item();

    let lat_s: Vec<Tensor> = rs.latents().iter().map(|&v| g.value(v).clone()).collect();
    let lat_t: Vec<Tensor> = rt.latents().iter().map(|&v| g.value(v).clone()).collect();
    let (disc_bce, disc_acc) =
        discriminator_step(disc, &mut opt.discriminator, &lat_s, &lat_t, settings.grad_clip)?;

    let scale = settings.adversarial_scale.factor(steps, n_x);
    let weighted_kld = g.scale(kld, w.kld_weight);
    let weighted_ss = g.scale(ss, w.ss_weight);
    let base = g.add(recon, weighted_kld)?;
    let base = g.add(base, weighted_ss)?;

    let mut grads;
    let adversarial_bce;
    if w.lambda != 0.0 {
        let mut pd = disc.params.bind(false);
        let (bce, _) = combined_bce(&mut g, &mut pd, disc, &rs.latents(), &rt.latents())?;
        let adv = g.scale(bce, scale);
        adversarial_bce = g.value(adv).item();
        if !adversarial_bce.is_finite() {
            return Err(DsvbError::NumericalDivergence(format!("adversarial BCE is {adversarial_bce}")));
        }
        match settings.bce_scope {
            BceScope::LatentPath => {
                let weighted = g.scale(adv, -w.lambda);
                let total = g.add(base, weighted)?;
                g.backward(total)?;
                grads = p.grads(&g);
            }
            BceScope::EncoderOnly => {
                g.backward(base)?;
                grads = p.grads(&g);
                g.backward(adv)?;
                let adv_grads = p.grads(&g);
                for ((gr, ga), name) in grads.iter_mut().zip(&adv_grads).zip(model.params.names()) {
                    if name.starts_with("enc.") {
                        for (a, b) in gr.data_mut().iter_mut().zip(ga.data()) {
                            *a -= w.lambda * b;
                        }
                    }
                }
            }
        }
    } else {
        adversarial_bce = disc_bce * scale;
        g.backward(base)?;
        grads = p.grads(&g);
    }
    drop(p);

    if let Some(c) = settings.grad_clip {
        clip_global_norm(&mut grads, c);
    }
    check_grads(&grads, "generator")?;
    opt.generator.step(model.params.values_mut(), &grads)?;
    if !model.params.all_finite() {
        return Err(DsvbError::NumericalDivergence("non-finite VRNN parameter after update".into()));
    }

    let mut loss = dsvb_total(
        LossParts {
            reconstruction_nll: g.value(recon).item(),
            kld: g.value(kld).item(),
            supervised_state_nll: g.value(ss).item(),
            adversarial_bce,
        },
        w,
    );
    loss.discriminator_bce = disc_bce;
    loss.steps = steps;
    loss.particles = settings.n_particles;
    Ok(RoundReport {
        loss,
        discriminator_accuracy: disc_acc,
        target_ss,
    })
}
