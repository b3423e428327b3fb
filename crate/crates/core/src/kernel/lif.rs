//! Leaky integrate-and-fire dynamics and their surrogate-gradient backward pass.
//!
//! Forward, per neuron `x` and timestep `t` (with `U_0 = S_0 = 0`):
//!
//! ```text
//! U_t    = leak * U_{t-1} * (1 - S_{t-1}) + BN_t
//! S_t    = 1 if U_t >= th_f else 0
//! mask_t = 1 if th_f < U_t < th_r else 0
//! ```
//!
//! Backward, for `t = T..1` with `dU_{T+1} = 0`:
//!
//! ```text
//! dS_t = dU_{t+1} * (-leak * U_t) + MM_t
//! dU_t = dU_{t+1} * leak * (1 - S_t) + dS_t * mask_t
//! ```
//!
//! The surrogate derivative of the step function is the binary mask itself.

use serde::{Deserialize, Serialize};

use super::{KernelError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifParams {
    pub leak: f64,
    pub fire_threshold: f64,
    pub surrogate_upper: f64,
}

impl LifParams {
    pub fn from_model(cfg: &crate::model::ModelConfig) -> Self {
        LifParams {
            leak: cfg.leak,
            fire_threshold: cfg.fire_threshold,
            surrogate_upper: cfg.surrogate_upper,
        }
    }
}

/// Membrane potentials, spikes and spike-gradient mask over `(T, X)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifState {
    pub u: Tensor,
    pub s: Tensor,
    pub mask: Tensor,
}

/// Potential and spike gradients over `(T, X)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradState {
    pub du: Tensor,
    pub ds: Tensor,
}

pub fn soma_forward(bn_out: &Tensor, p: &LifParams) -> Result<LifState, KernelError> {
    let (steps, width) = bn_out.dims2()?;
    if bn_out.data().iter().any(|v| !v.is_finite()) {
        return Err(KernelError::NonFinite);
    }
    if !(p.surrogate_upper > p.fire_threshold) {
        return Err(KernelError::InvalidParameter(
            "surrogate upper threshold must exceed the firing threshold".into(),
        ));
    }
    let shape = vec![steps, width];
    let mut u = Tensor::zeros(shape.clone());
    let mut s = Tensor::zeros(shape.clone());
    let mut mask = Tensor::zeros(shape);
    let input = bn_out.data();
    for x in 0..width {
        let mut u_prev = 0.0;
        let mut s_prev = 0.0;
        for t in 0..steps {
            let i = t * width + x;
            let ut = p.leak * u_prev * (1.0 - s_prev) + input[i];
            let st = if ut >= p.fire_threshold { 1.0 } else { 0.0 };
            u.data_mut()[i] = ut;
            s.data_mut()[i] = st;
            mask.data_mut()[i] = if p.fire_threshold < ut && ut < p.surrogate_upper {
                1.0
            } else {
                0.0
            };
            u_prev = ut;
            s_prev = st;
        }
    }
    Ok(LifState { u, s, mask })
}

pub fn grad_backward(
    lif: &LifState,
    mm_grad: &Tensor,
    p: &LifParams,
) -> Result<GradState, KernelError> {
    let (steps, width) = lif.u.dims2()?;
    if mm_grad.shape() != lif.u.shape() {
        return Err(KernelError::Shape(format!(
            "gradient shape {:?} does not match state shape {:?}",
            mm_grad.shape(),
            lif.u.shape()
        )));
    }
    if mm_grad.data().iter().any(|v| !v.is_finite()) {
        return Err(KernelError::NonFinite);
    }
    let shape = vec![steps, width];
    let mut du = Tensor::zeros(shape.clone());
    let mut ds = Tensor::zeros(shape);
    let (u, s, mask, mm) = (lif.u.data(), lif.s.data(), lif.mask.data(), mm_grad.data());
    for x in 0..width {
        let mut du_next = 0.0;
        for t in (0..steps).rev() {
            let i = t * width + x;
            let ds_t = du_next * (-p.leak * u[i]) + mm[i];
            let du_t = du_next * p.leak * (1.0 - s[i]) + ds_t * mask[i];
            ds.data_mut()[i] = ds_t;
            du.data_mut()[i] = du_t;
            du_next = du_t;
        }
    }
    Ok(GradState { du, ds })
}
