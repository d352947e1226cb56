//! Parameter storage and the small feed-forward building blocks shared by
//! every model.

use rand::Rng;

use crate::diffcore::{Graph, Tensor, Var};
use crate::error::{DsvbError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, ordered collection of parameter tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::numel).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(Tensor::is_finite)
    }

    /// Overwrite every value from `other`, which must have the same layout.
    pub fn load_from(&mut self, names: &[String], values: Vec<Tensor>) -> Result<()> {
        if names != self.names.as_slice() {
            return Err(DsvbError::Checkpoint(
                "parameter names do not match the model layout".into(),
            ));
        }
        for (dst, src) in self.values.iter().zip(&values) {
            if dst.shape() != src.shape() {
                return Err(DsvbError::Checkpoint(format!(
                    "parameter shape {:?} does not match {:?}",
                    src.shape(),
                    dst.shape()
                )));
            }
        }
        self.values = values;
        Ok(())
    }

    /// Set every parameter to zero.
    pub fn zero_all(&mut self) {
        for v in &mut self.values {
            v.data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// Order-sensitive checksum of all values (bit patterns).
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in &self.values {
            for x in v.data() {
                h ^= x.to_bits();
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    /// Bind this store to a graph. Parameters become leaves lazily, on first use.
    pub fn bind(&self, trainable: bool) -> Bound<'_> {
        Bound {
            store: self,
            vars: vec![None; self.values.len()],
            trainable,
        }
    }
}

/// A [`ParamStore`] attached to one graph.
pub struct Bound<'a> {
    store: &'a ParamStore,
    vars: Vec<Option<Var>>,
    trainable: bool,
}

impl Bound<'_> {
    pub fn var(&mut self, g: &mut Graph, id: ParamId) -> Var {
        if let Some(v) = self.vars[id.0] {
            return v;
        }
        let v = g.leaf(self.store.values[id.0].clone(), self.trainable);
        self.vars[id.0] = Some(v);
        v
    }

    /// Gradients for every parameter, zero for those the graph never used.
    pub fn grads(&self, g: &Graph) -> Vec<Tensor> {
        self.store
            .values
            .iter()
            .zip(&self.vars)
            .map(|(value, var)| match var {
                Some(v) => g.grad_or_zeros(*v),
                None => Tensor::zeros(value.shape()),
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

/// Dense layer `y = x · w + b` with `w` stored `[in, out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    /// Weights and biases uniform in `±1/sqrt(in_dim)`.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (in_dim.max(1) as f64).sqrt();
        Self::with_bound(store, name, in_dim, out_dim, bound, rng)
    }

    pub fn with_bound<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bound: f64,
        rng: &mut R,
    ) -> Self {
        let weight = store.add(
            format!("{name}.weight"),
            Tensor::uniform(&[in_dim, out_dim], bound, rng),
        );
        let bias = store.add(
            format!("{name}.bias"),
            Tensor::uniform(&[out_dim], bound, rng),
        );
        Linear {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &mut Bound, x: Var) -> Result<Var> {
        let w = p.var(g, self.weight);
        let b = p.var(g, self.bias);
        g.linear(x, w, b)
    }
}

/// Feed-forward network: tanh hidden layers, configurable output activation.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub output: Activation,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: &[usize],
        out_dim: usize,
        output: Activation,
        rng: &mut R,
    ) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = in_dim;
        for (i, &h) in hidden.iter().chain(std::iter::once(&out_dim)).enumerate() {
            layers.push(Linear::new(store, &format!("{name}.{i}"), prev, h, rng));
            prev = h;
        }
        Mlp { layers, output }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").out_dim
    }

    pub fn forward(&self, g: &mut Graph, p: &mut Bound, x: Var) -> Result<Var> {
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, p, h)?;
            if i < last || self.output == Activation::Tanh {
                h = g.tanh(h)?;
            }
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mlp_shapes_and_names() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "enc", 5, &[8, 4], 3, Activation::Identity, &mut rng);
        assert_eq!(store.len(), 6);
        assert_eq!(store.names()[0], "enc.0.weight");
        assert_eq!(store.get(mlp.layers[2].weight).shape(), &[4, 3]);

        let mut g = Graph::new();
        let mut p = store.bind(true);
        let x = g.constant(Tensor::zeros(&[7, 5]));
        let y = mlp.forward(&mut g, &mut p, x).unwrap();
        assert_eq!(g.value(y).shape(), &[7, 3]);
    }

    #[test]
    fn unused_params_get_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let a = Linear::new(&mut store, "a", 2, 2, &mut rng);
        let _b = Linear::new(&mut store, "b", 2, 2, &mut rng);
        let mut g = Graph::new();
        let mut p = store.bind(true);
        let x = g.constant(Tensor::row(&[1.0, 2.0]));
        let y = a.forward(&mut g, &mut p, x).unwrap();
        let s = g.sum(y).unwrap();
        g.backward(s).unwrap();
        let grads = p.grads(&g);
        assert_eq!(grads.len(), 4);
        assert_eq!(grads[1].data(), &[1.0, 1.0]);
        assert!(grads[2].data().iter().all(|&v| v == 0.0));
    }
}
