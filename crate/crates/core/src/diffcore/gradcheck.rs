use super::{Graph, Tensor, Var};
use crate::error::Result;

/// Fixed projection weights in `[0.5, 1.5)` used to reduce non-scalar outputs.
fn projection(n: usize) -> Vec<f64> {
    let mut state: u64 = 0x9e37_79b9_7f4a_7c15;
    (0..n)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            0.5 + (state >> 11) as f64 / (1u64 << 53) as f64
        })
        .collect()
}

fn scalarize(g: &mut Graph, out: Var) -> Result<Var> {
    let n = g.value(out).numel();
    if n == 1 {
        return g.sum(out);
    }
    let w = Tensor::new(g.value(out).shape().to_vec(), projection(n))?;
    let w = g.constant(w);
    let prod = g.mul(out, w)?;
    g.sum(prod)
}

/// Largest relative discrepancy between the reverse-mode gradient of `f` at
/// `point` and a central finite difference with the given `step`.
///
/// Non-scalar outputs are reduced by a fixed weighted sum first. A NaN anywhere
/// propagates into the returned value.
pub fn grad_check<F>(f: F, point: &Tensor, step: f64) -> f64
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    grad_check_with(f, point, step).unwrap_or(f64::NAN)
}

pub fn grad_check_with<F>(f: F, point: &Tensor, step: f64) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let analytic = {
        let mut g = Graph::new();
        let x = g.variable(point.clone());
        let out = f(&mut g, x)?;
        let s = scalarize(&mut g, out)?;
        g.backward(s)?;
        g.grad_or_zeros(x)
    };
    let eval = |p: &Tensor| -> Result<f64> {
        let mut g = Graph::new();
        let x = g.constant(p.clone());
        let out = f(&mut g, x)?;
        let s = scalarize(&mut g, out)?;
        Ok(g.value(s).item())
    };
    let mut worst: f64 = 0.0;
    let mut probe = point.clone();
    for i in 0..point.numel() {
        let x0 = point.data()[i];
        probe.data_mut()[i] = x0 + step;
        let fp = eval(&probe)?;
        probe.data_mut()[i] = x0 - step;
        let fm = eval(&probe)?;
        probe.data_mut()[i] = x0;
        let central = (fp - fm) / (2.0 * step);
        let a = analytic.data()[i];
        let err = (a - central).abs() / a.abs().max(central.abs()).max(1e-8);
        if err.is_nan() {
            return Ok(f64::NAN);
        }
        worst = worst.max(err);
    }
    Ok(worst)
}
