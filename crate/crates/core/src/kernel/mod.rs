//! Small-tensor reference implementation of the spiking training math.
//!
//! These routines exist to check the hand-derived equations and to measure
//! the sparsity statistics the energy model consumes. They are not fast.

mod bn;
mod lif;
mod sparsity;
mod tensor;

pub use bn::{bn_backward, bn_forward, BnCache, BnGrads, RunningStats};
pub use lif::{grad_backward, soma_forward, GradState, LifParams, LifState};
pub use sparsity::{measure_sparsity, run_desk_pass, DeskPass, DeskRun, SparsityStats};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in input")]
    NonFinite,
    #[error("operand must be binary (0/1): {0}")]
    NotBinary(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("empty pass: no artifacts to measure")]
    EmptyPass,
}

/// Dense reference product `(B, C) x (C, K)`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, KernelError> {
    let (rows, inner) = a.dims2()?;
    let (inner_b, cols) = b.dims2()?;
    if inner != inner_b {
        return Err(KernelError::Shape(format!(
            "inner extents differ: {inner} vs {inner_b}"
        )));
    }
    let mut out = Tensor::zeros(vec![rows, cols]);
    for r in 0..rows {
        for c in 0..inner {
            let av = a.at2(r, c);
            if av == 0.0 {
                continue;
            }
            let brow = &b.data()[c * cols..(c + 1) * cols];
            let orow = &mut out.data_mut()[r * cols..(r + 1) * cols];
            for (o, w) in orow.iter_mut().zip(brow) {
                *o += av * w;
            }
        }
    }
    Ok(out)
}

pub fn transpose(a: &Tensor) -> Result<Tensor, KernelError> {
    let (r, c) = a.dims2()?;
    Ok(Tensor::from_fn(vec![c, r], |i| a.at2(i % r, i / r)))
}

/// Product with a binary left operand, computed by accumulating the selected
/// weight rows. No multiplications are performed.
pub fn spike_matmul(spikes: &Tensor, weights: &Tensor) -> Result<Tensor, KernelError> {
    if !spikes.is_binary() {
        return Err(KernelError::NotBinary("spikes"));
    }
    let (rows, inner) = spikes.dims2()?;
    let (inner_w, cols) = weights.dims2()?;
    if inner != inner_w {
        return Err(KernelError::Shape(format!(
            "inner extents differ: {inner} vs {inner_w}"
        )));
    }
    let mut out = Tensor::zeros(vec![rows, cols]);
    for r in 0..rows {
        for c in 0..inner {
            if spikes.at2(r, c) == 1.0 {
                let wrow = &weights.data()[c * cols..(c + 1) * cols];
                let orow = &mut out.data_mut()[r * cols..(r + 1) * cols];
                for (o, w) in orow.iter_mut().zip(wrow) {
                    *o += w;
                }
            }
        }
    }
    Ok(out)
}

/// Spiking self-attention for one head instance: `(Q K^T V) * scale`.
pub fn ssa_forward(q: &Tensor, k: &Tensor, v: &Tensor, scale: f64) -> Result<Tensor, KernelError> {
    for (name, t) in [("Q", q), ("K", k), ("V", v)] {
        if !t.is_binary() {
            return Err(KernelError::NotBinary(name));
        }
    }
    if q.shape() != k.shape() || k.dims2()?.0 != v.dims2()?.0 {
        return Err(KernelError::Shape(format!(
            "Q {:?}, K {:?}, V {:?}",
            q.shape(),
            k.shape(),
            v.shape()
        )));
    }
    let scores = spike_matmul(q, &transpose(k)?)?;
    let mut out = matmul(&scores, v)?;
    for x in out.data_mut() {
        *x *= scale;
    }
    Ok(out)
}

pub fn residual_add(a: &Tensor, b: &Tensor) -> Result<Tensor, KernelError> {
    if a.shape() != b.shape() {
        return Err(KernelError::Shape(format!(
            "{:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(Tensor::from_fn(a.shape().to_vec(), |i| a.data()[i] + b.data()[i]))
}
