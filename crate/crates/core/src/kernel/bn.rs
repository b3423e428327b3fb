//! Batch normalization over `(m, D)`: statistics per feature column.
//!
//! The forward pass keeps the centered inputs and `sqrt(var + eps)` so the
//! backward pass can form its column sums without recomputing them.

use serde::{Deserialize, Serialize};

use super::{KernelError, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnCache {
    pub mu: Vec<f64>,
    /// Per-feature mean of squares.
    pub xsq: Vec<f64>,
    pub var: Vec<f64>,
    pub sqrt_d: Vec<f64>,
    /// Centered inputs `x - mu`, shape `(m, D)`.
    pub centered: Tensor,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnGrads {
    pub dx: Tensor,
    pub dgamma: Vec<f64>,
    pub dbeta: Vec<f64>,
}

/// Exponential running statistics used only at inference.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub momentum: f64,
}

impl RunningStats {
    pub fn new(features: usize, momentum: f64) -> Self {
        RunningStats {
            mean: vec![0.0; features],
            var: vec![1.0; features],
            momentum,
        }
    }

    pub fn update(&mut self, cache: &BnCache) {
        let m = self.momentum;
        for d in 0..self.mean.len() {
            self.mean[d] = (1.0 - m) * self.mean[d] + m * cache.mu[d];
            self.var[d] = (1.0 - m) * self.var[d] + m * cache.var[d];
        }
    }
}

pub fn bn_forward(
    x: &Tensor,
    gamma: &[f64],
    beta: &[f64],
    eps: f64,
) -> Result<(Tensor, BnCache), KernelError> {
    let (m, feats) = x.dims2()?;
    if m < 2 {
        return Err(KernelError::InvalidParameter(format!(
            "batch normalization needs at least 2 samples, got {m}"
        )));
    }
    if gamma.len() != feats || beta.len() != feats {
        return Err(KernelError::Shape(format!(
            "gamma/beta length must equal feature count {feats}"
        )));
    }
    if !(eps >= 0.0) {
        return Err(KernelError::InvalidParameter("eps must be >= 0".into()));
    }
    let inv_m = 1.0 / m as f64;
    let mut mu = vec![0.0; feats];
    let mut xsq = vec![0.0; feats];
    for i in 0..m {
        for d in 0..feats {
            let v = x.at2(i, d);
            mu[d] += v;
            xsq[d] += v * v;
        }
    }
    for d in 0..feats {
        mu[d] *= inv_m;
        xsq[d] *= inv_m;
    }
    let var: Vec<f64> = (0..feats).map(|d| xsq[d] - mu[d] * mu[d]).collect();
    // var can dip below zero by rounding when the column is constant
    let sqrt_d: Vec<f64> = var.iter().map(|v| (v.max(0.0) + eps).sqrt()).collect();
    if sqrt_d.contains(&0.0) {
        return Err(KernelError::InvalidParameter(
            "zero variance with eps = 0".into(),
        ));
    }
    let centered = Tensor::from_fn(vec![m, feats], |idx| x.data()[idx] - mu[idx % feats]);
    let y = Tensor::from_fn(vec![m, feats], |idx| {
        let d = idx % feats;
        gamma[d] * centered.data()[idx] / sqrt_d[d] + beta[d]
    });
    let cache = BnCache {
        mu,
        xsq,
        var,
        sqrt_d,
        centered,
        gamma: gamma.to_vec(),
        beta: beta.to_vec(),
    };
    Ok((y, cache))
}

pub fn bn_backward(g: &Tensor, cache: &BnCache) -> Result<BnGrads, KernelError> {
    let (m, feats) = g.dims2()?;
    if g.shape() != cache.centered.shape() {
        return Err(KernelError::Shape(format!(
            "gradient shape {:?} does not match cached shape {:?}",
            g.shape(),
            cache.centered.shape()
        )));
    }
    if let Some(d) = cache.gamma.iter().position(|&v| v == 0.0) {
        return Err(KernelError::InvalidParameter(format!(
            "gamma[{d}] is zero; the scale gradient divides by gamma"
        )));
    }
    let n = &cache.centered;
    let mf = m as f64;
    let mut big_m = Tensor::zeros(vec![m, feats]);
    let mut s_n = vec![0.0; feats];
    let mut s_m = vec![0.0; feats];
    let mut s_mn = vec![0.0; feats];
    let mut dbeta = vec![0.0; feats];
    for i in 0..m {
        for d in 0..feats {
            let idx = i * feats + d;
            let mv = cache.gamma[d] * g.data()[idx] / cache.sqrt_d[d];
            big_m.data_mut()[idx] = mv;
            s_n[d] += n.data()[idx];
            s_m[d] += mv;
            s_mn[d] += mv * n.data()[idx];
            dbeta[d] += g.data()[idx];
        }
    }
    let dgamma: Vec<f64> = (0..feats).map(|d| s_mn[d] / cache.gamma[d]).collect();
    let dx = Tensor::from_fn(vec![m, feats], |idx| {
        let d = idx % feats;
        let sq = cache.sqrt_d[d] * cache.sqrt_d[d];
        big_m.data()[idx] - n.data()[idx] * s_mn[d] / (mf * sq) + s_n[d] * s_mn[d] / (sq * mf * mf)
            - s_m[d] / mf
    });
    Ok(BnGrads { dx, dgamma, dbeta })
}
