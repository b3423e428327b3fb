//! Randomized checks of the kernel's hand-derived gradients against the
//! independent references in [`crate::oracle`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::kernel::{
    bn_backward, bn_forward, grad_backward, soma_forward, spike_matmul, KernelError, LifParams,
    Tensor,
};
use crate::model::ModelConfig;
use crate::oracle::{bn_finite_diff, dense_matmul, rel_err, unrolled_lif_grads};

pub const LIF_TOL: f64 = 1e-10;
pub const BN_TOL: f64 = 1e-4;
pub const COLUMN_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub cases: usize,
    /// Largest error seen; relative for gradient checks, absolute otherwise.
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// First failing case, if any.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckSummary {
    pub seed: u64,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckOptions {
    pub lif_cases: usize,
    pub bn_cases: usize,
    pub matmul_cases: usize,
    /// Perturb kernel gradients before comparing (negative control).
    pub corrupt: bool,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            lif_cases: 1000,
            bn_cases: 50,
            matmul_cases: 1000,
            corrupt: false,
        }
    }
}

struct Tracker {
    result: CheckResult,
}

impl Tracker {
    fn new(name: &str, tolerance: f64) -> Self {
        Tracker {
            result: CheckResult {
                name: name.into(),
                cases: 0,
                max_error: 0.0,
                tolerance,
                passed: true,
                failure: None,
            },
        }
    }

    fn record(&mut self, err: f64, describe: impl FnOnce() -> String) {
        let r = &mut self.result;
        r.cases += 1;
        r.max_error = r.max_error.max(err);
        let ok = err <= r.tolerance;
        if !ok && r.failure.is_none() {
            r.failure = Some(describe());
        }
        r.passed &= ok;
    }
}

fn gaussian(shape: Vec<usize>, scale: f64, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let z: f64 = StandardNormal.sample(rng);
        z * scale
    })
}

fn corrupt(t: &mut Tensor, on: bool) {
    if on {
        for v in t.data_mut() {
            *v = *v * 1.01 + 1e-3;
        }
    }
}

pub fn check_lif(p: &LifParams, cases: usize, tamper: bool, rng: &mut ChaCha8Rng) -> Result<CheckResult, KernelError> {
    let mut tr = Tracker::new("lif_bptt_vs_unrolled", LIF_TOL);
    for case in 0..cases {
        let steps = rng.gen_range(1..=4);
        let width = rng.gen_range(1..=8);
        let bn = gaussian(vec![steps, width], 1.5, rng);
        let mm = gaussian(vec![steps, width], 1.0, rng);
        let st = soma_forward(&bn, p)?;
        let mut g = grad_backward(&st, &mm, p)?;
        corrupt(&mut g.du, tamper);
        let (du, ds) = unrolled_lif_grads(&bn, &mm, p);
        let err = rel_err(g.du.data(), du.data(), f64::MIN_POSITIVE)
            .max(rel_err(g.ds.data(), ds.data(), f64::MIN_POSITIVE));
        tr.record(err, || format!("case {case}: T={steps}, X={width}, input={:?}", bn.data()));
    }
    Ok(tr.result)
}

pub fn check_bn(eps: f64, cases: usize, tamper: bool, rng: &mut ChaCha8Rng) -> Result<[CheckResult; 2], KernelError> {
    let (m, d) = (8, 4);
    let mut grads = Tracker::new("bn_backward_vs_finite_diff", BN_TOL);
    let mut sums = Tracker::new("bn_dx_column_sum", COLUMN_SUM_TOL);
    for case in 0..cases {
        let x = gaussian(vec![m, d], 1.0, rng);
        let gamma: Vec<f64> = (0..d).map(|_| rng.gen_range(0.5..1.5)).collect();
        let beta: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g = gaussian(vec![m, d], 1.0, rng);
        let (_, cache) = bn_forward(&x, &gamma, &beta, eps)?;
        let mut gr = bn_backward(&g, &cache)?;
        corrupt(&mut gr.dx, tamper);
        let fd = bn_finite_diff(x.data(), m, d, &gamma, &beta, eps, g.data(), 1e-5);
        let err = rel_err(gr.dx.data(), &fd.dx, 1e-12)
            .max(rel_err(&gr.dgamma, &fd.dgamma, 1e-12))
            .max(rel_err(&gr.dbeta, &fd.dbeta, 1e-12));
        grads.record(err, || format!("case {case}: x={:?}", x.data()));
        let worst = (0..d)
            .map(|f| (0..m).map(|i| gr.dx.at2(i, f)).sum::<f64>().abs())
            .fold(0.0, f64::max);
        sums.record(worst, || format!("case {case}: column sum {worst:e}"));
    }
    Ok([grads.result, sums.result])
}

pub fn check_spike_matmul(cases: usize, rng: &mut ChaCha8Rng) -> Result<CheckResult, KernelError> {
    let mut tr = Tracker::new("spike_matmul_vs_dense", 0.0);
    for case in 0..cases {
        let (b, c, k) = (rng.gen_range(1..=8), rng.gen_range(1..=8), rng.gen_range(1..=8));
        let density: f64 = rng.gen_range(0.0..=1.0);
        let s = Tensor::from_fn(vec![b, c], |_| f64::from(u8::from(rng.gen_bool(density))));
        let w = gaussian(vec![c, k], 1.0, rng);
        let got = spike_matmul(&s, &w)?;
        let want = dense_matmul(&s, &w);
        let err = got
            .data()
            .iter()
            .zip(want.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        tr.record(err, || format!("case {case}: {b}x{c} by {c}x{k}"));
    }
    Ok(tr.result)
}

pub fn run_gradcheck(
    model: &ModelConfig,
    seed: u64,
    opts: GradcheckOptions,
) -> Result<GradcheckSummary, KernelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = LifParams::from_model(model);
    let mut checks = vec![check_lif(&p, opts.lif_cases, opts.corrupt, &mut rng)?];
    checks.extend(check_bn(model.bn_eps, opts.bn_cases, opts.corrupt, &mut rng)?);
    checks.push(check_spike_matmul(opts.matmul_cases, &mut rng)?);
    let passed = checks.iter().all(|c| c.passed);
    Ok(GradcheckSummary {
        seed,
        checks,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(corrupt: bool) -> GradcheckOptions {
        GradcheckOptions {
            lif_cases: 100,
            bn_cases: 10,
            matmul_cases: 100,
            corrupt,
        }
    }

    #[test]
    fn clean_run_passes() {
        let s = run_gradcheck(&ModelConfig::default(), 1, quick(false)).unwrap();
        assert!(s.passed, "{:#?}", s.checks);
        assert_eq!(s.checks.len(), 4);
    }

    #[test]
    fn corrupted_gradients_fail() {
        let s = run_gradcheck(&ModelConfig::default(), 1, quick(true)).unwrap();
        assert!(!s.passed);
        assert!(s.checks.iter().any(|c| c.failure.is_some()));
    }
}
