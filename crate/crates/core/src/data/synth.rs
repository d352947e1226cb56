//! Planar actuated finger: a serial chain of torsional spring-damper joints
//! driven by a pressure-proportional torque, pressed against a compliant
//! round obstacle either at the fingertip or somewhere along its length.
//!
//! The chain lies along +X at rest and bends toward +Z. Each joint carries a
//! lumped rotational inertia; the equations are integrated with semi-implicit
//! Euler at `substeps` internal steps per output sample.

use std::f64::consts::TAU;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::error::{DsvbError, Result};

use super::csv_io::N_MARKERS;
use super::{Domain, SequenceDataset, N_X};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContactMode {
    Tip,
    Surface,
}

impl FromStr for ContactMode {
    type Err = DsvbError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tip" => Ok(ContactMode::Tip),
            "surface" => Ok(ContactMode::Surface),
            _ => Err(DsvbError::InvalidConfig(format!("unknown contact mode `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActuationPattern {
    #[serde(rename = "osc")]
    Oscillatory,
    #[serde(rename = "rand")]
    Random,
}

impl FromStr for ActuationPattern {
    type Err = DsvbError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "osc" | "oscillatory" => Ok(ActuationPattern::Oscillatory),
            "rand" | "random" => Ok(ActuationPattern::Random),
            _ => Err(DsvbError::InvalidConfig(format!("unknown actuation `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_links: usize,
    pub finger_length: f64,
    pub joint_stiffness: f64,
    pub joint_damping: f64,
    pub joint_inertia: f64,
    pub pressure_gain: f64,
    pub contact_mode: ContactMode,
    pub contact_stiffness: f64,
    pub obstacle_radius: f64,
    /// Obstacle centre used in tip mode.
    pub tip_obstacle: [f64; 2],
    /// Surface mode: the obstacle centre sits at
    /// `(s, radius + surface_curvature·s² + surface_clearance)`.
    pub surface_curvature: f64,
    pub surface_clearance: f64,
    /// Per-sample random-walk std of `s` and its allowed range.
    pub surface_drift: f64,
    pub surface_range: [f64; 2],
    pub actuation: ActuationPattern,
    /// Oscillatory cycles: period range in samples.
    pub osc_period: [usize; 2],
    /// Oscillatory cycles: amplitude range.
    pub osc_amplitude: [f64; 2],
    /// Random actuation: hold-duration range in samples.
    pub rand_hold: [usize; 2],
    /// Random actuation: per-sample first-order smoothing factor.
    pub rand_smoothing: f64,
    pub noise_std: f64,
    pub sample_rate_hz: f64,
    pub substeps: usize,
    pub seed: u64,
    pub samples: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_links: 5,
            finger_length: 1.0,
            joint_stiffness: 1.0,
            joint_damping: 0.1,
            joint_inertia: 0.01,
            pressure_gain: 0.32,
            contact_mode: ContactMode::Tip,
            contact_stiffness: 60.0,
            obstacle_radius: 0.15,
            tip_obstacle: [0.80, 0.48],
            surface_curvature: 0.6,
            surface_clearance: 0.02,
            surface_drift: 0.03,
            surface_range: [0.35, 1.0],
            actuation: ActuationPattern::Oscillatory,
            osc_period: [60, 120],
            osc_amplitude: [0.3, 1.0],
            rand_hold: [5, 20],
            rand_smoothing: 0.5,
            noise_std: 0.01,
            sample_rate_hz: 10.0,
            substeps: 100,
            seed: 0,
            samples: 6000,
        }
    }
}

impl SynthConfig {
    pub fn dt(&self) -> f64 {
        1.0 / (self.sample_rate_hz * self.substeps as f64)
    }

    pub fn link_length(&self) -> f64 {
        self.finger_length / self.n_links as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(DsvbError::UnstableConfig(msg.to_string()));
        if self.n_links == 0 || self.n_links > N_MARKERS {
            return bad("n_links must be between 1 and 10");
        }
        if self.substeps == 0 || !(self.sample_rate_hz > 0.0) {
            return bad("sample rate and substeps must be positive");
        }
        if !(self.joint_inertia > 0.0) || self.joint_stiffness < 0.0 || self.joint_damping < 0.0 {
            return bad("inertia must be positive, stiffness and damping non-negative");
        }
        if self.contact_stiffness < 0.0 || !(self.obstacle_radius > 0.0) || self.noise_std < 0.0 {
            return bad("contact stiffness, obstacle radius and noise must be non-negative");
        }
        if self.osc_period[0] == 0 || self.osc_period[0] > self.osc_period[1] {
            return bad("invalid oscillation period range");
        }
        if self.rand_hold[0] == 0 || self.rand_hold[0] > self.rand_hold[1] {
            return bad("invalid hold range");
        }
        let dt = self.dt();
        let damping = dt * self.joint_damping / self.joint_inertia;
        let stiffest = self.joint_stiffness
            + self.contact_stiffness * self.n_links as f64 * self.finger_length * self.finger_length;
        let oscillation = dt * (stiffest / self.joint_inertia).sqrt();
        if damping >= 1.0 || oscillation >= 1.0 {
            return Err(DsvbError::UnstableConfig(format!(
                "time step {dt:.2e} too large: damping factor {damping:.3}, stiffness factor {oscillation:.3} (both must be < 1)"
            )));
        }
        Ok(())
    }
}

/// Generated dataset plus the obstacle centre and chain–obstacle gap
/// recorded at every sample.
#[derive(Clone, Debug)]
pub struct SynthTrace {
    pub dataset: SequenceDataset,
    pub pressure: Vec<f64>,
    pub obstacle_centers: Vec<[f64; 2]>,
    pub gaps: Vec<f64>,
}

fn pressure_profile(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let t = cfg.samples;
    let mut p = Vec::with_capacity(t);
    match cfg.actuation {
        ActuationPattern::Oscillatory => {
            while p.len() < t {
                let period = rng.random_range(cfg.osc_period[0]..=cfg.osc_period[1]);
                let amp = rng.random_range(cfg.osc_amplitude[0]..=cfg.osc_amplitude[1]);
                for j in 0..period {
                    p.push(amp * (0.5 - 0.5 * (TAU * j as f64 / period as f64).cos()));
                }
            }
        }
        ActuationPattern::Random => {
            let mut level = 0.0;
            while p.len() < t {
                let hold = rng.random_range(cfg.rand_hold[0]..=cfg.rand_hold[1]);
                let target: f64 = rng.random_range(0.0..1.0);
                for _ in 0..hold {
                    level += (target - level) * cfg.rand_smoothing;
                    p.push(level);
                }
            }
        }
    }
    p.truncate(t);
    p
}

struct Chain {
    angles: Vec<f64>,
    points: Vec<[f64; 2]>,
}

impl Chain {
    fn new(n: usize) -> Self {
        Chain {
            angles: vec![0.0; n],
            points: vec![[0.0; 2]; n + 1],
        }
    }

    fn update(&mut self, q: &[f64], link: f64) {
        let mut theta = 0.0;
        for (i, qi) in q.iter().enumerate() {
            theta += qi;
            self.angles[i] = theta;
            let [x, z] = self.points[i];
            self.points[i + 1] = [x + link * theta.cos(), z + link * theta.sin()];
        }
    }
}

struct Contact {
    gap: f64,
    link: usize,
    point: [f64; 2],
    force: [f64; 2],
}

/// Closest point on the chain to the obstacle (the fingertip in tip mode) and
/// the resulting penalty force on the finger.
fn contact(chain: &Chain, center: [f64; 2], cfg: &SynthConfig) -> Contact {
    let n = cfg.n_links;
    let mut best: Option<(f64, usize, [f64; 2])> = None;
    let links: Box<dyn Iterator<Item = usize>> = match cfg.contact_mode {
        ContactMode::Tip => Box::new(std::iter::once(n - 1)),
        ContactMode::Surface => Box::new(0..n),
    };
    for i in links {
        let a = chain.points[i];
        let b = chain.points[i + 1];
        let u = match cfg.contact_mode {
            ContactMode::Tip => 1.0,
            ContactMode::Surface => {
                let d = [b[0] - a[0], b[1] - a[1]];
                let proj = ((center[0] - a[0]) * d[0] + (center[1] - a[1]) * d[1])
                    / (d[0] * d[0] + d[1] * d[1]);
                proj.clamp(0.0, 1.0)
            }
        };
        let p = [a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])];
        let gap = (p[0] - center[0]).hypot(p[1] - center[1]) - cfg.obstacle_radius;
        if best.is_none_or(|(g, _, _)| gap < g) {
            best = Some((gap, i, p));
        }
    }
    let (gap, link, point) = best.expect("at least one link");
    let mut force = [0.0; 2];
    if gap < 0.0 {
        let d = [point[0] - center[0], point[1] - center[1]];
        let norm = d[0].hypot(d[1]);
        if norm > 0.0 {
            let mag = cfg.contact_stiffness * (-gap);
            force = [mag * d[0] / norm, mag * d[1] / norm];
        }
    }
    Contact {
        gap,
        link,
        point,
        force,
    }
}

/// Simulate and keep the per-sample obstacle geometry.
pub fn synth_trace(cfg: &SynthConfig) -> Result<SynthTrace> {
    cfg.validate()?;
    if cfg.samples == 0 {
        return Err(DsvbError::EmptyDataset("synthetic dataset needs at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pressure = pressure_profile(cfg, &mut rng);
    let noise = Normal::new(0.0, cfg.noise_std.max(0.0)).map_err(|e| DsvbError::InvalidConfig(e.to_string()))?;
    let drift = Normal::new(0.0, cfg.surface_drift.max(0.0)).map_err(|e| DsvbError::InvalidConfig(e.to_string()))?;

    let n = cfg.n_links;
    let link = cfg.link_length();
    let dt = cfg.dt();
    let mut q = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut tau = vec![0.0; n];
    let mut chain = Chain::new(n);
    let mut s = 0.5 * (cfg.surface_range[0] + cfg.surface_range[1]);

    let t = cfg.samples;
    let mut meas = Vec::with_capacity(t * 2);
    let mut states = Vec::with_capacity(t * N_X);
    let mut centers = Vec::with_capacity(t);
    let mut gaps = Vec::with_capacity(t);

    for &p in &pressure {
        let center = match cfg.contact_mode {
            ContactMode::Tip => cfg.tip_obstacle,
            ContactMode::Surface => {
                s = (s + drift.sample(&mut rng)).clamp(cfg.surface_range[0], cfg.surface_range[1]);
                [
                    s,
                    cfg.obstacle_radius + cfg.surface_curvature * s * s + cfg.surface_clearance,
                ]
            }
        };
        for _ in 0..cfg.substeps {
            chain.update(&q, link);
            let c = contact(&chain, center, cfg);
            tau.iter_mut().for_each(|v| *v = 0.0);
            if c.force != [0.0, 0.0] {
                for (j, tj) in tau.iter_mut().enumerate().take(c.link + 1) {
                    let r = [c.point[0] - chain.points[j][0], c.point[1] - chain.points[j][1]];
                    *tj = r[0] * c.force[1] - r[1] * c.force[0];
                }
            }
            for j in 0..n {
                let acc = (cfg.pressure_gain * p - cfg.joint_stiffness * q[j] - cfg.joint_damping * w[j]
                    + tau[j])
                    / cfg.joint_inertia;
                w[j] += dt * acc;
                q[j] += dt * w[j];
            }
        }
        chain.update(&q, link);
        let c = contact(&chain, center, cfg);

        let flex: f64 = q.iter().sum();
        meas.push(p + noise.sample(&mut rng));
        meas.push(flex + noise.sample(&mut rng));
        for m in 0..N_MARKERS {
            match chain.points.get(m + 1) {
                Some(pt) => states.extend_from_slice(pt),
                None => states.extend_from_slice(&[0.0, 0.0]),
            }
        }
        states.extend_from_slice(&c.force);
        centers.push(center);
        gaps.push(c.gap);
        if !q.iter().all(|v| v.is_finite()) {
            return Err(DsvbError::UnstableConfig("simulation produced non-finite joint angles".into()));
        }
    }

    let time = (0..t).map(|i| i as f64 / cfg.sample_rate_hz).collect();
    let dataset = SequenceDataset::new(
        time,
        Tensor::matrix(t, 2, meas)?,
        Some(Tensor::matrix(t, N_X, states)?),
        Domain::Source,
        cfg.sample_rate_hz,
    )?;
    Ok(SynthTrace {
        dataset,
        pressure,
        obstacle_centers: centers,
        gaps,
    })
}

/// Simulate `cfg.samples` output samples; states are always present.
pub fn synth_generate(cfg: &SynthConfig) -> Result<SequenceDataset> {
    synth_trace(cfg).map(|t| t.dataset)
}
