//! GRU and LSTM recurrent cells.
//!
//! GRU (reset applied to the hidden projection):
//!
//! ```text
//! r  = σ(W_ir x + b_ir + W_hr h + b_hr)
//! z  = σ(W_iz x + b_iz + W_hz h + b_hz)
//! n  = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn))
//! h' = (1 − z) ⊙ n + z ⊙ h
//! ```
//!
//! LSTM with forget gate:
//!
//! ```text
//! i = σ(·), f = σ(·), g = tanh(·), o = σ(·)
//! c' = f ⊙ c + i ⊙ g
//! h' = o ⊙ tanh(c')
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{Graph, Var};
use crate::error::{DsvbError, Result};
use crate::nn::{Bound, Linear, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellType {
    Gru,
    Lstm,
}

impl CellType {
    pub fn as_str(self) -> &'static str {
        match self {
            CellType::Gru => "gru",
            CellType::Lstm => "lstm",
        }
    }
}

impl std::str::FromStr for CellType {
    type Err = DsvbError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gru" => Ok(CellType::Gru),
            "lstm" => Ok(CellType::Lstm),
            other => Err(DsvbError::InvalidConfig(format!("unknown cell type `{other}`"))),
        }
    }
}

/// Input and hidden projections feeding one gate.
#[derive(Clone, Debug)]
pub struct Gate {
    pub input: Linear,
    pub hidden: Linear,
}

impl Gate {
    fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input_size: usize,
        hidden_size: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (hidden_size as f64).sqrt();
        Gate {
            input: Linear::with_bound(store, &format!("{name}.i"), input_size, hidden_size, bound, rng),
            hidden: Linear::with_bound(store, &format!("{name}.h"), hidden_size, hidden_size, bound, rng),
        }
    }

    fn pre_activation(&self, g: &mut Graph, p: &mut Bound, x: Var, h: Var) -> Result<Var> {
        let a = self.input.forward(g, p, x)?;
        let b = self.hidden.forward(g, p, h)?;
        g.add(a, b)
    }
}

fn check_shapes(
    op: &'static str,
    g: &Graph,
    x: Var,
    h: Var,
    input_size: usize,
    hidden_size: usize,
) -> Result<()> {
    let (xv, hv) = (g.value(x), g.value(h));
    if xv.cols() != input_size || hv.cols() != hidden_size || xv.rows() != hv.rows() {
        return Err(DsvbError::shape(
            op,
            format!(
                "input {:?} / hidden {:?} for cell {}→{}",
                xv.shape(),
                hv.shape(),
                input_size,
                hidden_size
            ),
        ));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct GruCell {
    pub input_size: usize,
    pub hidden_size: usize,
    pub reset: Gate,
    pub update: Gate,
    pub candidate: Gate,
}

impl GruCell {
    /// All weights and biases uniform in `±1/sqrt(hidden_size)`.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input_size: usize,
        hidden_size: usize,
        rng: &mut R,
    ) -> Self {
        GruCell {
            input_size,
            hidden_size,
            reset: Gate::new(store, &format!("{name}.reset"), input_size, hidden_size, rng),
            update: Gate::new(store, &format!("{name}.update"), input_size, hidden_size, rng),
            candidate: Gate::new(store, &format!("{name}.candidate"), input_size, hidden_size, rng),
        }
    }

    pub fn step(&self, g: &mut Graph, p: &mut Bound, x: Var, h: Var) -> Result<Var> {
        check_shapes("gru_step", g, x, h, self.input_size, self.hidden_size)?;
        let r = self.reset.pre_activation(g, p, x, h)?;
        let r = g.sigmoid(r)?;
        let z = self.update.pre_activation(g, p, x, h)?;
        let z = g.sigmoid(z)?;
        let nx = self.candidate.input.forward(g, p, x)?;
        let nh = self.candidate.hidden.forward(g, p, h)?;
        let gated = g.mul(r, nh)?;
        let n = g.add(nx, gated)?;
        let n = g.tanh(n)?;
        // (1 - z) * n + z * h == n + z * (h - n)
        let diff = g.sub(h, n)?;
        let keep = g.mul(z, diff)?;
        g.add(n, keep)
    }
}

/// Convenience wrapper matching the single-step signature.
pub fn gru_step(g: &mut Graph, p: &mut Bound, cell: &GruCell, x: Var, h: Var) -> Result<Var> {
    cell.step(g, p, x, h)
}

#[derive(Clone, Debug)]
pub struct LstmCell {
    pub input_size: usize,
    pub hidden_size: usize,
    pub input_gate: Gate,
    pub forget_gate: Gate,
    pub cell_gate: Gate,
    pub output_gate: Gate,
}

impl LstmCell {
    /// Uniform `±1/sqrt(hidden_size)` initialisation with the forget-gate bias
    /// set to 1.0 (input-side bias 1, hidden-side bias 0).
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input_size: usize,
        hidden_size: usize,
        rng: &mut R,
    ) -> Self {
        let cell = LstmCell {
            input_size,
            hidden_size,
            input_gate: Gate::new(store, &format!("{name}.input"), input_size, hidden_size, rng),
            forget_gate: Gate::new(store, &format!("{name}.forget"), input_size, hidden_size, rng),
            cell_gate: Gate::new(store, &format!("{name}.cell"), input_size, hidden_size, rng),
            output_gate: Gate::new(store, &format!("{name}.output"), input_size, hidden_size, rng),
        };
        store
            .get_mut(cell.forget_gate.input.bias)
            .data_mut()
            .iter_mut()
            .for_each(|b| *b = 1.0);
        store
            .get_mut(cell.forget_gate.hidden.bias)
            .data_mut()
            .iter_mut()
            .for_each(|b| *b = 0.0);
        cell
    }

    pub fn step(
        &self,
        g: &mut Graph,
        p: &mut Bound,
        x: Var,
        (h, c): (Var, Var),
    ) -> Result<(Var, Var)> {
        check_shapes("lstm_step", g, x, h, self.input_size, self.hidden_size)?;
        if g.value(c).shape() != g.value(h).shape() {
            return Err(DsvbError::shape(
                "lstm_step",
                format!("cell {:?} vs hidden {:?}", g.value(c).shape(), g.value(h).shape()),
            ));
        }
        let i = self.input_gate.pre_activation(g, p, x, h)?;
        let i = g.sigmoid(i)?;
        let f = self.forget_gate.pre_activation(g, p, x, h)?;
        let f = g.sigmoid(f)?;
        let cand = self.cell_gate.pre_activation(g, p, x, h)?;
        let cand = g.tanh(cand)?;
        let o = self.output_gate.pre_activation(g, p, x, h)?;
        let o = g.sigmoid(o)?;
        let kept = g.mul(f, c)?;
        let written = g.mul(i, cand)?;
        let c_next = g.add(kept, written)?;
        let squashed = g.tanh(c_next)?;
        let h_next = g.mul(o, squashed)?;
        Ok((h_next, c_next))
    }
}

pub fn lstm_step(
    g: &mut Graph,
    p: &mut Bound,
    cell: &LstmCell,
    x: Var,
    state: (Var, Var),
) -> Result<(Var, Var)> {
    cell.step(g, p, x, state)
}

/// Recurrent state: hidden vector plus the LSTM cell vector when present.
#[derive(Clone, Copy, Debug)]
pub struct RnnState {
    pub hidden: Var,
    pub cell: Option<Var>,
}

#[derive(Clone, Debug)]
pub enum RnnCell {
    Gru(GruCell),
    Lstm(LstmCell),
}

impl RnnCell {
    pub fn new<R: Rng + ?Sized>(
        kind: CellType,
        store: &mut ParamStore,
        name: &str,
        input_size: usize,
        hidden_size: usize,
        rng: &mut R,
    ) -> Self {
        match kind {
            CellType::Gru => RnnCell::Gru(GruCell::new(store, name, input_size, hidden_size, rng)),
            CellType::Lstm => {
                RnnCell::Lstm(LstmCell::new(store, name, input_size, hidden_size, rng))
            }
        }
    }

    pub fn kind(&self) -> CellType {
        match self {
            RnnCell::Gru(_) => CellType::Gru,
            RnnCell::Lstm(_) => CellType::Lstm,
        }
    }

    pub fn input_size(&self) -> usize {
        match self {
            RnnCell::Gru(c) => c.input_size,
            RnnCell::Lstm(c) => c.input_size,
        }
    }

    pub fn hidden_size(&self) -> usize {
        match self {
            RnnCell::Gru(c) => c.hidden_size,
            RnnCell::Lstm(c) => c.hidden_size,
        }
    }

    /// Zero state for `rows` parallel sequences.
    pub fn zero_state(&self, g: &mut Graph, rows: usize) -> RnnState {
        let h = g.constant(crate::diffcore::Tensor::zeros(&[rows, self.hidden_size()]));
        let cell = match self {
            RnnCell::Gru(_) => None,
            RnnCell::Lstm(_) => Some(h),
        };
        RnnState { hidden: h, cell }
    }

    pub fn step(&self, g: &mut Graph, p: &mut Bound, x: Var, state: RnnState) -> Result<RnnState> {
        match self {
            RnnCell::Gru(cell) => Ok(RnnState {
                hidden: cell.step(g, p, x, state.hidden)?,
                cell: None,
            }),
            RnnCell::Lstm(cell) => {
                let c = state
                    .cell
                    .ok_or_else(|| DsvbError::shape("lstm_step", "missing cell state"))?;
                let (h, c) = cell.step(g, p, x, (state.hidden, c))?;
                Ok(RnnState {
                    hidden: h,
                    cell: Some(c),
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_gru_halves_hidden() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let cell = GruCell::new(&mut store, "gru", 3, 4, &mut rng);
        store.zero_all();
        let mut g = Graph::new();
        let mut p = store.bind(false);
        let x = g.constant(Tensor::row(&[0.3, -2.0, 1.0]));
        let h = g.constant(Tensor::row(&[1.0, -0.4, 2.0, 0.0]));
        let out = cell.step(&mut g, &mut p, x, h).unwrap();
        assert_eq!(g.value(out).data(), &[0.5, -0.2, 1.0, 0.0]);
    }

    #[test]
    fn zero_lstm_halves_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let cell = LstmCell::new(&mut store, "lstm", 2, 3, &mut rng);
        store.zero_all();
        let mut g = Graph::new();
        let mut p = store.bind(false);
        let x = g.constant(Tensor::row(&[1.0, 1.0]));
        let h = g.constant(Tensor::row(&[0.1, 0.2, 0.3]));
        let c = g.constant(Tensor::row(&[2.0, -1.0, 0.5]));
        let (h2, c2) = cell.step(&mut g, &mut p, x, (h, c)).unwrap();
        assert_eq!(g.value(c2).data(), &[1.0, -0.5, 0.25]);
        for (hv, cv) in g.value(h2).data().iter().zip([2.0f64, -1.0, 0.5]) {
            assert!((hv - 0.5 * (0.5 * cv).tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn forget_bias_initialised_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let cell = LstmCell::new(&mut store, "lstm", 2, 3, &mut rng);
        assert!(store.get(cell.forget_gate.input.bias).data().iter().all(|&b| b == 1.0));
        assert!(store.get(cell.forget_gate.hidden.bias).data().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn shape_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let cell = GruCell::new(&mut store, "gru", 3, 4, &mut rng);
        let mut g = Graph::new();
        let mut p = store.bind(false);
        let x = g.constant(Tensor::row(&[0.3, -2.0]));
        let h = g.constant(Tensor::row(&[1.0, -0.4, 2.0, 0.0]));
        assert!(matches!(
            cell.step(&mut g, &mut p, x, h),
            Err(DsvbError::ShapeMismatch { .. })
        ));
    }
}
