//! Variational recurrent network: prior, encoder and decoder Gaussians
//! conditioned on a recurrent memory state, plus the rollout that draws
//! reparameterised latent particles step by step.
//!
//! At step `n` the memory is
//! `h_n = rnn([φ_y(y_{n-1}), φ_x(x_{n-1})], h_{n-1})` with `h_0 = 0`, and
//!
//! * prior     `p(x_n | h_n)          = N(μ_x,  σ_x)`
//! * posterior `q(x_n | y_n, h_n)     = N(μ_xy, σ_xy)`
//! * likelihood `p(y_n | x_n, h_n)    = N(μ_y,  σ_y)`
//!
//! All standard deviations come out of a softplus.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cells::{CellType, RnnCell, RnnState};
use crate::diffcore::{Graph, Tensor, Var};
use crate::error::{DsvbError, Result};
use crate::nn::{Activation, Bound, Mlp, ParamStore};

/// `½·ln(2π)`, the per-dimension Gaussian NLL at the mode with unit std.
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Layer sizes of every component network.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VrnnArch {
    pub n_y: usize,
    pub n_x: usize,
    pub hidden_size: usize,
    pub cell: CellType,
    pub prior_hidden: Vec<usize>,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub state_feature_hidden: Vec<usize>,
    pub measurement_feature_hidden: Vec<usize>,
}

impl VrnnArch {
    /// Hidden state 128; prior {128}, encoder {128, 128}, decoder {128, 64};
    /// state features {32}, measurement features {22}.
    pub fn standard(n_y: usize, n_x: usize, cell: CellType) -> Self {
        VrnnArch {
            n_y,
            n_x,
            hidden_size: 128,
            cell,
            prior_hidden: vec![128],
            encoder_hidden: vec![128, 128],
            decoder_hidden: vec![128, 64],
            state_feature_hidden: vec![32],
            measurement_feature_hidden: vec![22],
        }
    }

    /// Same topology with every width replaced, for fast tests.
    pub fn tiny(n_y: usize, n_x: usize, cell: CellType, width: usize) -> Self {
        VrnnArch {
            n_y,
            n_x,
            hidden_size: width,
            cell,
            prior_hidden: vec![width],
            encoder_hidden: vec![width, width],
            decoder_hidden: vec![width, width],
            state_feature_hidden: vec![width],
            measurement_feature_hidden: vec![width],
        }
    }

    fn validate(&self) -> Result<()> {
        let widths = [
            &self.prior_hidden,
            &self.encoder_hidden,
            &self.decoder_hidden,
            &self.state_feature_hidden,
            &self.measurement_feature_hidden,
        ];
        if self.n_x == 0 || self.n_y == 0 || self.hidden_size == 0 {
            return Err(DsvbError::InvalidConfig("zero-sized VRNN dimension".into()));
        }
        if widths.iter().any(|w| w.is_empty() || w.contains(&0)) {
            return Err(DsvbError::InvalidConfig(
                "every VRNN sub-network needs at least one non-empty hidden layer".into(),
            ));
        }
        Ok(())
    }

    pub fn state_feature_dim(&self) -> usize {
        *self.state_feature_hidden.last().expect("validated")
    }

    pub fn measurement_feature_dim(&self) -> usize {
        *self.measurement_feature_hidden.last().expect("validated")
    }
}

/// Diagonal Gaussian living on a graph.
#[derive(Clone, Copy, Debug)]
pub struct GaussianParams {
    pub mean: Var,
    pub std: Var,
}

/// Recurrent memory for every particle row, plus the step counter.
#[derive(Clone, Copy, Debug)]
pub struct FilterState {
    pub rnn: RnnState,
    pub step_index: usize,
}

impl FilterState {
    pub fn hidden(&self) -> Var {
        self.rnn.hidden
    }
}

/// Split a `[rows, 2d]` head output into mean and softplus std.
fn gaussian_head(g: &mut Graph, raw: Var, d: usize) -> Result<GaussianParams> {
    let mean = g.slice(raw, 0, d)?;
    let pre = g.slice(raw, d, d)?;
    let std = g.softplus(pre)?;
    Ok(GaussianParams { mean, std })
}

#[derive(Clone, Debug)]
pub struct VrnnModel {
    pub arch: VrnnArch,
    pub params: ParamStore,
    pub measurement_features: Mlp,
    pub state_features: Mlp,
    pub prior_net: Mlp,
    pub encoder_net: Mlp,
    pub decoder_net: Mlp,
    pub rnn: RnnCell,
}

impl VrnnModel {
    pub fn new<R: Rng + ?Sized>(arch: VrnnArch, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let mut params = ParamStore::new();
        let fy = arch.measurement_feature_dim();
        let fx = arch.state_feature_dim();
        let h = arch.hidden_size;
        let measurement_features = Mlp::new(
            &mut params,
            "phi_y",
            arch.n_y,
            &arch.measurement_feature_hidden,
            fy,
            Activation::Tanh,
            rng,
        );
        let state_features = Mlp::new(
            &mut params,
            "phi_x",
            arch.n_x,
            &arch.state_feature_hidden,
            fx,
            Activation::Tanh,
            rng,
        );
        let prior_net = Mlp::new(
            &mut params,
            "prior",
            h,
            &arch.prior_hidden,
            2 * arch.n_x,
            Activation::Identity,
            rng,
        );
        let encoder_net = Mlp::new(
            &mut params,
            "enc",
            fy + h,
            &arch.encoder_hidden,
            2 * arch.n_x,
            Activation::Identity,
            rng,
        );
        let decoder_net = Mlp::new(
            &mut params,
            "dec",
            fx + h,
            &arch.decoder_hidden,
            2 * arch.n_y,
            Activation::Identity,
            rng,
        );
        let rnn = RnnCell::new(arch.cell, &mut params, "rnn", fy + fx, h, rng);
        Ok(VrnnModel {
            arch,
            params,
            measurement_features,
            state_features,
            prior_net,
            encoder_net,
            decoder_net,
            rnn,
        })
    }

    /// `h_0 = 0` for `rows` particle rows.
    pub fn initial_state(&self, g: &mut Graph, rows: usize) -> FilterState {
        FilterState {
            rnn: self.rnn.zero_state(g, rows),
            step_index: 0,
        }
    }

    pub fn prior(&self, g: &mut Graph, p: &mut Bound, state: &FilterState) -> Result<GaussianParams> {
        let raw = self.prior_net.forward(g, p, state.hidden())?;
        gaussian_head(g, raw, self.arch.n_x)
    }

    pub fn encode(
        &self,
        g: &mut Graph,
        p: &mut Bound,
        y: Var,
        state: &FilterState,
    ) -> Result<GaussianParams> {
        check_cols("encode", g, y, self.arch.n_y)?;
        let fy = self.measurement_features.forward(g, p, y)?;
        let input = g.concat(&[fy, state.hidden()])?;
        let raw = self.encoder_net.forward(g, p, input)?;
        gaussian_head(g, raw, self.arch.n_x)
    }

    pub fn decode(
        &self,
        g: &mut Graph,
        p: &mut Bound,
        x: Var,
        state: &FilterState,
    ) -> Result<GaussianParams> {
        check_cols("decode", g, x, self.arch.n_x)?;
        let fx = self.state_features.forward(g, p, x)?;
        let input = g.concat(&[fx, state.hidden()])?;
        let raw = self.decoder_net.forward(g, p, input)?;
        gaussian_head(g, raw, self.arch.n_y)
    }

    /// One recurrence step from the previous measurement and latent.
    pub fn recur(
        &self,
        g: &mut Graph,
        p: &mut Bound,
        y_prev: Var,
        x_prev: Var,
        state: &FilterState,
    ) -> Result<FilterState> {
        check_cols("recur", g, y_prev, self.arch.n_y)?;
        check_cols("recur", g, x_prev, self.arch.n_x)?;
        let fy = self.measurement_features.forward(g, p, y_prev)?;
        let fx = self.state_features.forward(g, p, x_prev)?;
        let input = g.concat(&[fy, fx])?;
        let rnn = self.rnn.step(g, p, input, state.rnn)?;
        Ok(FilterState {
            rnn,
            step_index: state.step_index + 1,
        })
    }

    /// Posterior-mean filtering of a measurement matrix `[T, n_y]`.
    ///
    /// The sequence is cut into consecutive chunks of `chunk_len` rows, each
    /// started from `h_0 = 0`; no noise is injected, so the latent fed back at
    /// each step is the posterior mean. Returns posterior means and stds, both
    /// `[T, n_x]`.
    pub fn estimate(&self, measurements: &Tensor, chunk_len: usize) -> Result<(Tensor, Tensor)> {
        if measurements.cols() != self.arch.n_y {
            return Err(DsvbError::shape(
                "estimate",
                format!("{} measurement columns, model expects {}", measurements.cols(), self.arch.n_y),
            ));
        }
        let chunks = crate::data::chunk_layout(measurements.rows(), chunk_len);
        let n_x = self.arch.n_x;
        let mut mean = Tensor::zeros(&[measurements.rows(), n_x]);
        let mut std = Tensor::zeros(&[measurements.rows(), n_x]);
        for (len, starts) in chunks {
            let steps = crate::data::steps_for(measurements, &starts, len);
            let mut g = Graph::new();
            let mut p = self.params.bind(false);
            let rollout = filter_sequence(&mut g, &mut p, self, &steps, 1, &mut Noise::Zero)?;
            for (t, step) in rollout.steps.iter().enumerate() {
                let (m, s) = (g.value(step.posterior.mean), g.value(step.posterior.std));
                for (b, &start) in starts.iter().enumerate() {
                    let row = start + t;
                    mean.data_mut()[row * n_x..(row + 1) * n_x].copy_from_slice(m.row_slice(b));
                    std.data_mut()[row * n_x..(row + 1) * n_x].copy_from_slice(s.row_slice(b));
                }
            }
        }
        Ok((mean, std))
    }
}

fn check_cols(op: &'static str, g: &Graph, v: Var, cols: usize) -> Result<()> {
    if g.value(v).cols() != cols || g.value(v).rank() != 2 {
        return Err(DsvbError::shape(
            op,
            format!("expected [rows, {}], got {:?}", cols, g.value(v).shape()),
        ));
    }
    Ok(())
}

/// Standard-normal noise source for the reparameterisation.
pub enum Noise<'a> {
    /// ε = 0: every particle sits at the posterior mean.
    Zero,
    Sample(&'a mut dyn RngCore),
}

impl Noise<'_> {
    pub fn draw(&mut self, shape: &[usize]) -> Tensor {
        match self {
            Noise::Zero => Tensor::zeros(shape),
            Noise::Sample(rng) => {
                let numel = shape.iter().product();
                let data = (0..numel).map(|_| rng.sample(StandardNormal)).collect();
                Tensor::new(shape.to_vec(), data).expect("shape product")
            }
        }
    }
}

/// `μ + ε ⊙ σ`. `noise` is a constant, so gradients reach only μ and σ.
pub fn reparameterize(g: &mut Graph, gp: &GaussianParams, noise: Tensor) -> Result<Var> {
    if noise.shape() != g.value(gp.mean).shape() {
        return Err(DsvbError::shape(
            "reparameterize",
            format!("noise {:?} vs mean {:?}", noise.shape(), g.value(gp.mean).shape()),
        ));
    }
    let eps = g.constant(noise);
    let spread = g.mul(eps, gp.std)?;
    g.add(gp.mean, spread)
}

fn check_std(op: &'static str, g: &Graph, std: Var) -> Result<()> {
    if let Some(bad) = g.value(std).data().iter().find(|&&s| !(s > 0.0)) {
        return Err(DsvbError::domain(op, format!("non-positive std {}", bad)));
    }
    Ok(())
}

/// `KL(q ‖ p)` summed over every element (rows and dimensions).
///
/// Per dimension: `ln σ_p − ln σ_q + (σ_q² + (μ_q − μ_p)²) / (2 σ_p²) − ½`.
pub fn gaussian_kld(g: &mut Graph, q: &GaussianParams, p: &GaussianParams) -> Result<Var> {
    if g.value(q.mean).shape() != g.value(p.mean).shape()
        || g.value(q.std).shape() != g.value(p.std).shape()
    {
        return Err(DsvbError::shape(
            "gaussian_kld",
            format!("{:?} vs {:?}", g.value(q.mean).shape(), g.value(p.mean).shape()),
        ));
    }
    check_std("gaussian_kld", g, q.std)?;
    check_std("gaussian_kld", g, p.std)?;
    let numel = g.value(q.mean).numel();
    let log_q = g.log(q.std)?;
    let log_p = g.log(p.std)?;
    let var_q = g.square(q.std)?;
    let diff = g.sub(q.mean, p.mean)?;
    let diff2 = g.square(diff)?;
    let num = g.add(var_q, diff2)?;
    let var_p = g.square(p.std)?;
    let ratio = g.div(num, var_p)?;
    let log_ratio = g.sub(log_p, log_q)?;
    let half_ratio = g.scale(ratio, 0.5);
    let per_dim = g.add(log_ratio, half_ratio)?;
    let total = g.sum(per_dim)?;
    Ok(g.add_scalar(total, -0.5 * numel as f64))
}

/// Gaussian negative log-likelihood summed over every element.
///
/// Per dimension: `½ ln(2π σ²) + (y − μ)² / (2σ²)`.
pub fn gaussian_nll(g: &mut Graph, y: Var, gp: &GaussianParams) -> Result<Var> {
    if g.value(y).shape() != g.value(gp.mean).shape() {
        return Err(DsvbError::shape(
            "gaussian_nll",
            format!("y {:?} vs mean {:?}", g.value(y).shape(), g.value(gp.mean).shape()),
        ));
    }
    check_std("gaussian_nll", g, gp.std)?;
    let numel = g.value(y).numel();
    let diff = g.sub(y, gp.mean)?;
    let z = g.div(diff, gp.std)?;
    let z2 = g.square(z)?;
    let half_z2 = g.scale(z2, 0.5);
    let log_std = g.log(gp.std)?;
    let per_dim = g.add(log_std, half_z2)?;
    let total = g.sum(per_dim)?;
    Ok(g.add_scalar(total, HALF_LN_2PI * numel as f64))
}

/// Closed-form `KL(N(μ_q, σ_q) ‖ N(μ_p, σ_p))` over plain slices.
pub fn gaussian_kld_values(mu_q: &[f64], sd_q: &[f64], mu_p: &[f64], sd_p: &[f64]) -> Result<f64> {
    let n = mu_q.len();
    if sd_q.len() != n || mu_p.len() != n || sd_p.len() != n {
        return Err(DsvbError::shape("gaussian_kld", "argument lengths differ"));
    }
    let mut total = 0.0;
    for i in 0..n {
        if !(sd_q[i] > 0.0 && sd_p[i] > 0.0) {
            return Err(DsvbError::domain("gaussian_kld", "non-positive std"));
        }
        let d = mu_q[i] - mu_p[i];
        total += (sd_p[i] / sd_q[i]).ln() + (sd_q[i] * sd_q[i] + d * d) / (2.0 * sd_p[i] * sd_p[i])
            - 0.5;
    }
    Ok(total)
}

/// Per-step outputs of a rollout. Every `Var` has `rows = particles × batch`
/// rows, particle-major (`row = i · batch + b`).
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub observation: Var,
    pub state: FilterState,
    pub prior: GaussianParams,
    pub posterior: GaussianParams,
    pub latent: Var,
    pub decoded: GaussianParams,
}

#[derive(Clone, Debug)]
pub struct Rollout {
    pub steps: Vec<StepRecord>,
    pub batch: usize,
    pub particles: usize,
}

impl Rollout {
    pub fn rows(&self) -> usize {
        self.batch * self.particles
    }

    pub fn latents(&self) -> Vec<Var> {
        self.steps.iter().map(|s| s.latent).collect()
    }
}

/// Run the filter over `y_seq` (one `[batch, n_y]` tensor per step).
///
/// Each of the `n_particles` copies of the batch carries its own memory: step
/// `n > 0` first advances `h` with `(y_{n-1}, x^i_{n-1})`, then evaluates the
/// prior, the posterior, draws `x^i_n` by reparameterisation and decodes it.
pub fn filter_sequence(
    g: &mut Graph,
    p: &mut Bound,
    model: &VrnnModel,
    y_seq: &[Tensor],
    n_particles: usize,
    noise: &mut Noise,
) -> Result<Rollout> {
    if n_particles == 0 {
        return Err(DsvbError::InvalidConfig("n_particles must be at least 1".into()));
    }
    let Some(first) = y_seq.first() else {
        return Err(DsvbError::EmptyDataset("filter_sequence needs at least one step".into()));
    };
    let batch = first.rows();
    let rows = batch * n_particles;
    let n_x = model.arch.n_x;
    let mut steps: Vec<StepRecord> = Vec::with_capacity(y_seq.len());
    let mut state = model.initial_state(g, rows);
    for (n, y) in y_seq.iter().enumerate() {
        if y.rows() != batch || y.cols() != model.arch.n_y {
            return Err(DsvbError::shape(
                "filter_sequence",
                format!("step {} has shape {:?}, expected [{}, {}]", n, y.shape(), batch, model.arch.n_y),
            ));
        }
        let obs = if n_particles == 1 {
            g.constant(y.clone())
        } else {
            g.constant(y.tile_rows(n_particles))
        };
        if let Some(prev) = steps.last() {
            state = model.recur(g, p, prev.observation, prev.latent, &state)?;
        }
        let prior = model.prior(g, p, &state)?;
        let posterior = model.encode(g, p, obs, &state)?;
        if !g.value(posterior.mean).is_finite() || !g.value(posterior.std).is_finite() {
            return Err(DsvbError::NumericalDivergence(format!(
                "non-finite posterior at step {}",
                n
            )));
        }
        let eps = noise.draw(&[rows, n_x]);
        let latent = reparameterize(g, &posterior, eps)?;
        let decoded = model.decode(g, p, latent, &state)?;
        steps.push(StepRecord {
            observation: obs,
            state,
            prior,
            posterior,
            latent,
            decoded,
        });
    }
    Ok(Rollout {
        steps,
        batch,
        particles: n_particles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gp(g: &mut Graph, mean: &[f64], std: &[f64]) -> GaussianParams {
        GaussianParams {
            mean: g.constant(Tensor::row(mean)),
            std: g.constant(Tensor::row(std)),
        }
    }

    #[test]
    fn kld_closed_form_values() {
        let mut g = Graph::new();
        let q = gp(&mut g, &[1.0], &[1.0]);
        let p = gp(&mut g, &[0.0], &[1.0]);
        let k = gaussian_kld(&mut g, &q, &p).unwrap();
        assert!((g.value(k).item() - 0.5).abs() < 1e-12);

        let q = gp(&mut g, &[0.3], &[2.0]);
        let p = gp(&mut g, &[0.3], &[1.0]);
        let k = gaussian_kld(&mut g, &q, &p).unwrap();
        let expected = 0.5f64.ln() + 2.0 - 0.5;
        assert!((g.value(k).item() - expected).abs() < 1e-12);
        assert!((g.value(k).item() - 0.80685).abs() < 1e-5);

        let k = gaussian_kld(&mut g, &q, &q).unwrap();
        assert_eq!(g.value(k).item(), 0.0);
    }

    #[test]
    fn kld_rejects_non_positive_std() {
        let mut g = Graph::new();
        let q = gp(&mut g, &[0.0], &[0.0]);
        let p = gp(&mut g, &[0.0], &[1.0]);
        assert!(matches!(
            gaussian_kld(&mut g, &q, &p),
            Err(DsvbError::DomainError { .. })
        ));
        assert!(gaussian_kld_values(&[0.0], &[-1.0], &[0.0], &[1.0]).is_err());
    }

    #[test]
    fn nll_values() {
        let mut g = Graph::new();
        let d = gp(&mut g, &[0.7], &[1.0]);
        let y = g.constant(Tensor::row(&[0.7]));
        let at_mode = gaussian_nll(&mut g, y, &d).unwrap();
        assert!((g.value(at_mode).item() - 0.918939).abs() < 1e-6);
        let d2 = gp(&mut g, &[0.7], &[2.5]);
        let y2 = g.constant(Tensor::row(&[3.2]));
        let m2 = g.constant(Tensor::row(&[0.7]));
        let base = gaussian_nll(&mut g, m2, &d2).unwrap();
        let shifted = gaussian_nll(&mut g, y2, &d2).unwrap();
        assert!((g.value(shifted).item() - g.value(base).item() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn nll_is_symmetric() {
        let mut g = Graph::new();
        let a = gp(&mut g, &[0.4, -1.0], &[0.5, 2.0]);
        let b = gp(&mut g, &[-0.4, 1.0], &[0.5, 2.0]);
        let y = g.constant(Tensor::row(&[1.1, 0.2]));
        let ny = g.constant(Tensor::row(&[-1.1, -0.2]));
        let l1 = gaussian_nll(&mut g, y, &a).unwrap();
        let l2 = gaussian_nll(&mut g, ny, &b).unwrap();
        assert_eq!(g.value(l1).item(), g.value(l2).item());
    }

    #[test]
    fn reparameterize_passthrough() {
        let mut g = Graph::new();
        let d = gp(&mut g, &[1.5, -2.0], &[0.3, 4.0]);
        let x = reparameterize(&mut g, &d, Tensor::row(&[0.0, 0.0])).unwrap();
        assert_eq!(g.value(x).data(), &[1.5, -2.0]);
        let unit = gp(&mut g, &[0.0, 0.0], &[1.0, 1.0]);
        let e = Tensor::row(&[0.25, -1.75]);
        let x = reparameterize(&mut g, &unit, e.clone()).unwrap();
        assert_eq!(g.value(x), &e);
        assert!(reparameterize(&mut g, &unit, Tensor::row(&[0.0])).is_err());
    }

    #[test]
    fn zero_weight_heads_are_standard() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut model = VrnnModel::new(VrnnArch::tiny(2, 3, CellType::Gru, 6), &mut rng).unwrap();
        model.params.zero_all();
        let mut g = Graph::new();
        let mut p = model.params.bind(false);
        let s = model.initial_state(&mut g, 1);
        let pr = model.prior(&mut g, &mut p, &s).unwrap();
        let y = g.constant(Tensor::row(&[0.4, -0.9]));
        let post = model.encode(&mut g, &mut p, y, &s).unwrap();
        let x = g.constant(Tensor::row(&[0.1, 0.2, 0.3]));
        let dec = model.decode(&mut g, &mut p, x, &s).unwrap();
        for gp in [pr, post] {
            assert_eq!(g.value(gp.mean).data(), &[0.0; 3]);
            for s in g.value(gp.std).data() {
                assert!((s - 0.6931).abs() < 1e-4);
            }
        }
        assert_eq!(g.value(dec.mean).shape(), &[1, 2]);
        assert!(g.value(dec.std).data().iter().all(|s| (s - std::f64::consts::LN_2).abs() < 1e-15));
    }

    #[test]
    fn recur_increments_step_and_keeps_zero_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut model = VrnnModel::new(VrnnArch::tiny(2, 3, CellType::Gru, 4), &mut rng).unwrap();
        model.params.zero_all();
        let mut g = Graph::new();
        let mut p = model.params.bind(false);
        let s0 = model.initial_state(&mut g, 1);
        let y = g.constant(Tensor::row(&[1.0, 2.0]));
        let x = g.constant(Tensor::row(&[1.0, 2.0, 3.0]));
        let s1 = model.recur(&mut g, &mut p, y, x, &s0).unwrap();
        assert_eq!(s1.step_index, 1);
        assert_eq!(g.value(s1.hidden()).data(), &[0.0; 4]);
    }

    #[test]
    fn single_step_rollout_has_no_recurrence() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = VrnnModel::new(VrnnArch::tiny(2, 3, CellType::Lstm, 4), &mut rng).unwrap();
        let mut g = Graph::new();
        let mut p = model.params.bind(false);
        let y = vec![Tensor::row(&[0.1, 0.2])];
        let r = filter_sequence(&mut g, &mut p, &model, &y, 1, &mut Noise::Zero).unwrap();
        assert_eq!(r.steps.len(), 1);
        assert_eq!(r.steps[0].state.step_index, 0);
        assert_eq!(g.value(r.steps[0].state.hidden()).data(), &[0.0; 4]);
    }
}
