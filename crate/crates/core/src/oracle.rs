//! Reference computations used to check the kernel, written without sharing
//! any code path with it.
//!
//! The LIF oracle enumerates every path through the unrolled computation
//! graph of one neuron (nodes `U_t`, `S_t`, loss) and sums the products of
//! local derivatives. The BN oracle re-derives the forward pass with a
//! two-pass variance and differentiates it numerically.

use crate::kernel::{LifParams, Tensor};

/// Per-neuron forward trace: potentials and spikes.
fn neuron_forward(input: &[f64], p: &LifParams) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut u = Vec::with_capacity(input.len());
    let mut s = Vec::with_capacity(input.len());
    let mut mask = Vec::with_capacity(input.len());
    for (t, &x) in input.iter().enumerate() {
        let carried = if t == 0 { 0.0 } else { p.leak * u[t - 1] * (1.0 - s[t - 1]) };
        let ut = carried + x;
        u.push(ut);
        s.push(if ut >= p.fire_threshold { 1.0 } else { 0.0 });
        mask.push(if ut > p.fire_threshold && ut < p.surrogate_upper { 1.0 } else { 0.0 });
    }
    (u, s, mask)
}

#[derive(Clone, Copy)]
enum Node {
    U(usize),
    S(usize),
}

/// Sum over all paths from `node` to the loss `L = sum_t MM_t * S_t`.
///
/// Edges: `U_t -> S_t` weighs `mask_t`; `U_t -> U_{t+1}` weighs
/// `leak * (1 - S_t)`; `S_t -> U_{t+1}` weighs `-leak * U_t`; `S_t -> L`
/// weighs `MM_t`.
fn paths(node: Node, u: &[f64], s: &[f64], mask: &[f64], mm: &[f64], leak: f64) -> f64 {
    let last = u.len() - 1;
    match node {
        Node::U(t) => {
            let mut total = mask[t] * paths(Node::S(t), u, s, mask, mm, leak);
            if t < last {
                total += leak * (1.0 - s[t]) * paths(Node::U(t + 1), u, s, mask, mm, leak);
            }
            total
        }
        Node::S(t) => {
            let mut total = mm[t];
            if t < last {
                total += -leak * u[t] * paths(Node::U(t + 1), u, s, mask, mm, leak);
            }
            total
        }
    }
}

/// Potential and spike gradients over `(T, X)` by explicit path enumeration.
pub fn unrolled_lif_grads(
    bn_out: &Tensor,
    mm_grad: &Tensor,
    p: &LifParams,
) -> (Tensor, Tensor) {
    let (steps, width) = (bn_out.shape()[0], bn_out.shape()[1]);
    let mut du = Tensor::zeros(vec![steps, width]);
    let mut ds = Tensor::zeros(vec![steps, width]);
    for x in 0..width {
        let col = |t: &Tensor| (0..steps).map(|i| t.data()[i * width + x]).collect::<Vec<_>>();
        let input = col(bn_out);
        let mm = col(mm_grad);
        let (u, s, mask) = neuron_forward(&input, p);
        for t in 0..steps {
            du.data_mut()[t * width + x] = paths(Node::U(t), &u, &s, &mask, &mm, p.leak);
            ds.data_mut()[t * width + x] = paths(Node::S(t), &u, &s, &mask, &mm, p.leak);
        }
    }
    (du, ds)
}

/// Batch-norm forward with a two-pass variance.
pub fn reference_bn(x: &[f64], m: usize, d: usize, gamma: &[f64], beta: &[f64], eps: f64) -> Vec<f64> {
    let mut y = vec![0.0; m * d];
    for f in 0..d {
        let mean = (0..m).map(|i| x[i * d + f]).sum::<f64>() / m as f64;
        let var = (0..m).map(|i| (x[i * d + f] - mean).powi(2)).sum::<f64>() / m as f64;
        let denom = (var + eps).sqrt();
        for i in 0..m {
            y[i * d + f] = gamma[f] * (x[i * d + f] - mean) / denom + beta[f];
        }
    }
    y
}

/// Central-difference gradients of `L = sum(g * bn(x))` with respect to
/// `x`, `gamma` and `beta`.
pub struct FiniteDiff {
    pub dx: Vec<f64>,
    pub dgamma: Vec<f64>,
    pub dbeta: Vec<f64>,
}

pub fn bn_finite_diff(
    x: &[f64],
    m: usize,
    d: usize,
    gamma: &[f64],
    beta: &[f64],
    eps: f64,
    g: &[f64],
    h: f64,
) -> FiniteDiff {
    let loss = |x: &[f64], gamma: &[f64], beta: &[f64]| -> f64 {
        reference_bn(x, m, d, gamma, beta, eps)
            .iter()
            .zip(g)
            .map(|(a, b)| a * b)
            .sum()
    };
    let central = |v: &[f64], f: &dyn Fn(&[f64]) -> f64| -> Vec<f64> {
        (0..v.len())
            .map(|i| {
                let mut plus = v.to_vec();
                let mut minus = v.to_vec();
                plus[i] += h;
                minus[i] -= h;
                (f(&plus) - f(&minus)) / (2.0 * h)
            })
            .collect()
    };
    FiniteDiff {
        dx: central(x, &|xv| loss(xv, gamma, beta)),
        dgamma: central(gamma, &|gv| loss(x, gv, beta)),
        dbeta: central(beta, &|bv| loss(x, gamma, bv)),
    }
}

/// Triple-loop product `(B, C) x (C, K)`.
pub fn dense_matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (rows, inner) = (a.shape()[0], a.shape()[1]);
    let cols = b.shape()[1];
    let mut out = Tensor::zeros(vec![rows, cols]);
    for r in 0..rows {
        for k in 0..cols {
            let mut acc = 0.0;
            for c in 0..inner {
                acc += a.data()[r * inner + c] * b.data()[c * cols + k];
            }
            out.data_mut()[r * cols + k] = acc;
        }
    }
    out
}

/// `max|a - b| / max(max|b|, floor)`.
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let den = b.iter().map(|v| v.abs()).fold(floor, f64::max);
    num / den
}
