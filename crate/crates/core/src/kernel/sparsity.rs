use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{
    bn_backward, bn_forward, grad_backward, soma_forward, spike_matmul, transpose, matmul,
    GradState, KernelError, LifParams, LifState, Tensor,
};

/// Fractions of active elements that scale the sparse cost terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsityStats {
    /// Fraction of ones in the spike maps.
    pub s_s: f64,
    /// Fraction of ones in the spike-gradient masks.
    pub s_smg: f64,
    /// Fraction of nonzero potential gradients.
    pub s_pg: f64,
}

impl SparsityStats {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [("s_s", self.s_s), ("s_smg", self.s_smg), ("s_pg", self.s_pg)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} = {v} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

pub fn measure_sparsity(
    lifs: &[&LifState],
    grads: &[&GradState],
) -> Result<SparsityStats, KernelError> {
    let spikes: usize = lifs.iter().map(|l| l.s.len()).sum();
    let potentials: usize = grads.iter().map(|g| g.du.len()).sum();
    if spikes == 0 || potentials == 0 {
        return Err(KernelError::EmptyPass);
    }
    let count = |t: &Tensor, pred: fn(f64) -> bool| t.data().iter().filter(|&&v| pred(v)).count();
    let fired: usize = lifs.iter().map(|l| count(&l.s, |v| v == 1.0)).sum();
    let masked: usize = lifs.iter().map(|l| count(&l.mask, |v| v == 1.0)).sum();
    let live: usize = grads.iter().map(|g| count(&g.du, |v| v != 0.0)).sum();
    Ok(SparsityStats {
        s_s: fired as f64 / spikes as f64,
        s_smg: masked as f64 / spikes as f64,
        s_pg: live as f64 / potentials as f64,
    })
}

/// Two spiking layers (BN, LIF, spike matmul, BN, LIF) run forward and back
/// on zero-mean unit-variance pseudorandom data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeskPass {
    pub samples: usize,
    pub width: usize,
    pub timesteps: usize,
    pub seed: u64,
    pub lif: LifParams,
    pub bn_eps: f64,
}

impl Default for DeskPass {
    fn default() -> Self {
        DeskPass {
            samples: 32,
            width: 64,
            timesteps: 4,
            seed: 0x5eed,
            lif: LifParams {
                leak: 0.5,
                fire_threshold: 1.0,
                surrogate_upper: 2.0,
            },
            bn_eps: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DeskRun {
    pub lifs: [LifState; 2],
    pub grads: [GradState; 2],
    pub stats: SparsityStats,
}

fn gaussian(shape: Vec<usize>, scale: f64, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let z: f64 = StandardNormal.sample(rng);
        z * scale
    })
}

pub fn run_desk_pass(p: &DeskPass) -> Result<DeskRun, KernelError> {
    let (t, b, d) = (p.timesteps, p.samples, p.width);
    if t == 0 || b == 0 || d == 0 {
        return Err(KernelError::EmptyPass);
    }
    let rows = t * b;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let x = gaussian(vec![rows, d], 1.0, &mut rng);
    let w = gaussian(vec![d, d], 1.0 / (d as f64).sqrt(), &mut rng);
    let upstream = gaussian(vec![t, b * d], 1.0, &mut rng);
    let (gamma, beta) = (vec![1.0; d], vec![0.0; d]);

    // Rows are ordered timestep-major, so (T*B, D) and (T, B*D) share storage.
    let (bn1, c1) = bn_forward(&x, &gamma, &beta, p.bn_eps)?;
    let lif1 = soma_forward(&bn1.reshape(vec![t, b * d])?, &p.lif)?;
    let mm = spike_matmul(&lif1.s.clone().reshape(vec![rows, d])?, &w)?;
    let (bn2, c2) = bn_forward(&mm, &gamma, &beta, p.bn_eps)?;
    let lif2 = soma_forward(&bn2.reshape(vec![t, b * d])?, &p.lif)?;

    let g2 = grad_backward(&lif2, &upstream, &p.lif)?;
    let dmm = bn_backward(&g2.du.clone().reshape(vec![rows, d])?, &c2)?.dx;
    let ds1 = matmul(&dmm, &transpose(&w)?)?.reshape(vec![t, b * d])?;
    let g1 = grad_backward(&lif1, &ds1, &p.lif)?;
    bn_backward(&g1.du.clone().reshape(vec![rows, d])?, &c1)?;

    let stats = measure_sparsity(&[&lif1, &lif2], &[&g1, &g2])?;
    Ok(DeskRun {
        lifs: [lif1, lif2],
        grads: [g1, g2],
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silent_input_gives_zero_sparsity() {
        let p = LifParams {
            leak: 0.5,
            fire_threshold: 1.0,
            surrogate_upper: 2.0,
        };
        let lif = soma_forward(&Tensor::zeros(vec![4, 8]), &p).unwrap();
        let g = grad_backward(&lif, &Tensor::zeros(vec![4, 8]), &p).unwrap();
        let st = measure_sparsity(&[&lif], &[&g]).unwrap();
        assert_eq!((st.s_s, st.s_smg, st.s_pg), (0.0, 0.0, 0.0));
    }

    #[test]
    fn always_fire_limit() {
        let p = LifParams {
            leak: 0.5,
            fire_threshold: -1e9,
            surrogate_upper: 2.0,
        };
        let lif = soma_forward(&Tensor::from_fn(vec![4, 8], |i| i as f64 * 0.1), &p).unwrap();
        let g = grad_backward(&lif, &Tensor::zeros(vec![4, 8]), &p).unwrap();
        assert_eq!(measure_sparsity(&[&lif], &[&g]).unwrap().s_s, 1.0);
    }

    #[test]
    fn empty_pass_rejected() {
        assert_eq!(measure_sparsity(&[], &[]).unwrap_err(), KernelError::EmptyPass);
    }

    #[test]
    fn desk_pass_is_reproducible() {
        let a = run_desk_pass(&DeskPass::default()).unwrap();
        let b = run_desk_pass(&DeskPass::default()).unwrap();
        assert_eq!(a.stats, b.stats);
        for v in [a.stats.s_s, a.stats.s_smg, a.stats.s_pg] {
            assert!(v > 0.0 && v < 1.0, "{:?}", a.stats);
        }
    }
}
