//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stsim_core::config::RunConfig;
use stsim_core::energy::compute_energy;
use stsim_core::gradcheck::{run_gradcheck, GradcheckOptions};
use stsim_core::kernel::{run_desk_pass, DeskPass, LifParams, SparsityStats};
use stsim_core::latency::{stage_latency, tile_latency};
use stsim_core::mapper::{enumerate_dataflows, map_dims, ArrayConfig, Dataflow, LoopDim, Stationarity};
use stsim_core::model::ModelConfig;
use stsim_core::report::{to_json, RunOutput};
use stsim_core::sim::{evaluate, run_simulate, run_sweep, CostReport};
use stsim_core::workload::{MmDims, OperatorClass, Phase, StageKind, Workload};

const UTIL_RANGE: (f64, f64) = (0.73, 0.93);
const PEAK_TFLOPS: f64 = 4.096;
const TFLOPS_TARGET: f64 = 3.4;
const TFLOPS_BAND: f64 = 0.15;
const IDENTITY_TOL: f64 = 1e-9;
const REDUCTION_RANGE: (f64, f64) = (0.05, 0.40);
const RANDOM_CONFIGS: usize = 100;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn os_c() -> Dataflow {
    Dataflow::new(Stationarity::Os, LoopDim::C)
}

fn latency_goldens() -> Outcome {
    let tile = tile_latency(64, 64, 64);
    let arr = ArrayConfig::default();
    let plan = map_dims("golden", Phase::Fp, MmDims::new(12544, 512, 512), 1, os_c(), &arr);
    let stage = stage_latency(&plan, &arr);
    check(
        tile == 254 && stage == 1_100_736,
        format!("tile_latency = {tile} (want 254), stage_latency = {stage} (want 1100736)"),
    )
}

fn utilization(r: &CostReport) -> Outcome {
    let u = r.latency.mm_utilization;
    check(
        (UTIL_RANGE.0..=UTIL_RANGE.1).contains(&u),
        format!("{} MM utilization {u:.4} in [{}, {}]", r.dataflow, UTIL_RANGE.0, UTIL_RANGE.1),
    )
}

fn throughput(r: &CostReport) -> Outcome {
    let tflops = r.power.tflops;
    let predicted = PEAK_TFLOPS * r.latency.utilization;
    let identity = (tflops - predicted).abs() / predicted;
    let band = (tflops - TFLOPS_TARGET).abs() / TFLOPS_TARGET;
    check(
        identity <= IDENTITY_TOL && band <= TFLOPS_BAND && r.power.peak_tflops == PEAK_TFLOPS,
        format!(
            "{tflops:.4} TFLOPS, identity rel err {identity:.1e}, {:.1}% from {TFLOPS_TARGET}",
            band * 100.0
        ),
    )
}

fn ranking(cfg: &RunConfig) -> Outcome {
    let sweep = run_sweep(cfg).map_err(|e| e.to_string())?;
    let best_e = &sweep.by_energy[0].dataflow;
    let best_l = &sweep.by_latency[0].dataflow;
    let base = sweep.by_latency[0].value;
    let reductions: Vec<f64> = sweep.by_latency[1..].iter().map(|e| 1.0 - base / e.value).collect();
    let lo = reductions.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = reductions.iter().cloned().fold(0.0, f64::max);
    check(
        best_e == "OS_C" && best_l == "OS_C" && lo >= REDUCTION_RANGE.0 && hi <= REDUCTION_RANGE.1,
        format!(
            "energy argmin {best_e}, latency argmin {best_l}, reductions {:.1}%..{:.1}%",
            lo * 100.0,
            hi * 100.0
        ),
    )
}

fn random_model(rng: &mut ChaCha8Rng) -> ModelConfig {
    let heads = [1, 2, 4, 8][rng.gen_range(0..4)];
    ModelConfig {
        heads,
        d_model: heads * 8 * rng.gen_range(1..=8),
        patch_grid: rng.gen_range(1..=6),
        timesteps: rng.gen_range(1..=4),
        batch_size: rng.gen_range(1..=8),
        blocks: rng.gen_range(1..=3),
        mlp_ratio: rng.gen_range(1..=4),
        ..ModelConfig::default()
    }
}

fn breakdown(default: &CostReport) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let dataflows = enumerate_dataflows();
    for i in 0..RANDOM_CONFIGS {
        let cfg = RunConfig {
            model: random_model(&mut rng),
            ..RunConfig::default()
        };
        let stats = SparsityStats {
            s_s: rng.gen(),
            s_smg: rng.gen(),
            s_pg: rng.gen(),
        };
        let df = dataflows[rng.gen_range(0..dataflows.len())];
        let w = Workload::build(&cfg.model).map_err(|e| e.to_string())?;
        let e = evaluate(&cfg, &w, df, stats, "x").map_err(|e| e.to_string())?.energy;
        let cells_ok = e.cells.iter().all(|c| c.total_j == c.compute_j + c.memory_j);
        let mut grand = 0.0;
        let mut classes_ok = true;
        for c in &e.classes {
            let sum = e.cell(Phase::Fp, c.class).total_j
                + e.cell(Phase::Bp, c.class).total_j
                + e.cell(Phase::Wg, c.class).total_j;
            classes_ok &= c.total_j == sum;
            grand += c.total_j;
        }
        if !(cells_ok && classes_ok && e.grand_total_j == grand) {
            return Err(format!("config {i} ({}) breaks an exact sum", df.name()));
        }
    }
    let e = &default.energy;
    for phase in [Phase::Fp, Phase::Bp, Phase::Wg] {
        let mm = e.cell(phase, OperatorClass::Mm).total_j;
        for class in [OperatorClass::Bn, OperatorClass::Lif, OperatorClass::Res] {
            if e.cell(phase, class).total_j >= mm {
                return Err(format!("{} {} exceeds MM", phase.as_str(), class.as_str()));
            }
        }
    }
    Ok(format!("{RANDOM_CONFIGS} random configs exact; MM largest in FP, BP, WG"))
}

fn kernel_oracles() -> Outcome {
    let s = run_gradcheck(&ModelConfig::default(), 0, GradcheckOptions::default()).map_err(|e| e.to_string())?;
    let detail = s
        .checks
        .iter()
        .map(|c| format!("{} {}x max {:.1e}", c.name, c.cases, c.max_error))
        .collect::<Vec<_>>()
        .join(", ");
    check(s.passed && s.checks.len() == 4, detail)
}

fn sparsity_monotonicity() -> Outcome {
    let grid: Vec<f64> = (0..=10).map(|i| f64::from(i) / 10.0).collect();
    let model = ModelConfig::default();
    let w = Workload::build(&model).map_err(|e| e.to_string())?;
    let coeffs = stsim_core::energy::EnergyCoefficients::default();
    let fp_mm: Vec<f64> = grid
        .iter()
        .map(|&s_s| {
            let st = SparsityStats { s_s, s_smg: 0.5, s_pg: 0.5 };
            w.fp
                .stages
                .iter()
                .filter(|s| s.kind == StageKind::Mm)
                .map(|s| compute_energy(s, &st, &coeffs, true))
                .sum()
        })
        .collect();
    let energy_ok = fp_mm.windows(2).all(|p| p[0] <= p[1]);

    let base = DeskPass::default();
    let thresholds: Vec<f64> = (0..=8).map(|i| 0.25 + f64::from(i) * 0.25).collect();
    let mut s_s = Vec::new();
    for &th in &thresholds {
        let pass = DeskPass {
            lif: LifParams { fire_threshold: th, surrogate_upper: th + 1.0, ..base.lif },
            ..base.clone()
        };
        s_s.push(run_desk_pass(&pass).map_err(|e| e.to_string())?.stats.s_s);
    }
    let spikes_ok = s_s.windows(2).all(|p| p[1] <= p[0]) && s_s[s_s.len() - 1] < s_s[0];
    check(
        energy_ok && spikes_ok,
        format!(
            "FP MM energy {:.3e}..{:.3e} J over s_s 0..1; s_s {:.4} -> {:.4} as th_f {} -> {}",
            fp_mm[0],
            fp_mm[fp_mm.len() - 1],
            s_s[0],
            s_s[s_s.len() - 1],
            thresholds[0],
            thresholds[thresholds.len() - 1]
        ),
    )
}

fn determinism(cfg: &RunConfig) -> Outcome {
    let render = || -> Result<String, String> {
        let r = run_simulate(cfg, os_c()).map_err(|e| e.to_string())?;
        to_json(&RunOutput::single(cfg, r)).map_err(|e| e.to_string())
    };
    let (a, b) = (render()?, render()?);
    check(a == b, format!("two runs, {} bytes each, identical = {}", a.len(), a == b))
}

fn main() -> ExitCode {
    let cfg = RunConfig::default();
    let started = Instant::now();
    let default = match run_simulate(&cfg, os_c()) {
        Ok(r) => Some(r),
        Err(e) => {
            println!("FAIL setup: {e}");
            None
        }
    };
    let missing = || Err("default simulation unavailable".to_string());
    let results: Vec<(&str, Outcome)> = vec![
        ("latency goldens", latency_goldens()),
        ("MM utilization", default.as_ref().map_or_else(missing, utilization)),
        ("throughput", default.as_ref().map_or_else(missing, throughput)),
        ("dataflow ranking", ranking(&cfg)),
        ("breakdown identities", default.as_ref().map_or_else(missing, breakdown)),
        ("kernel oracles", kernel_oracles()),
        ("sparsity monotonicity", sparsity_monotonicity()),
        ("determinism", determinism(&cfg)),
    ];
    let mut failed = default.is_none();
    for (i, (name, outcome)) in results.iter().enumerate() {
        match outcome {
            Ok(d) => println!("PASS criterion {} ({name}): {d}", i + 1),
            Err(d) => {
                failed = true;
                println!("FAIL criterion {} ({name}): {d}", i + 1);
            }
        }
    }
    println!("acceptance finished in {:.1} s", started.elapsed().as_secs_f64());
    if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
