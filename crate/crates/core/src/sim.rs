//! End-to-end evaluation of one dataflow or all nine.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{RunConfig, SparsityMode};
use crate::energy::{
    assemble_energy, compute_energy, derive_power_efficiency, memory_energy, EnergyError,
    EnergyReport, PowerSummary, StageEnergy,
};
use crate::kernel::{run_desk_pass, KernelError, SparsityStats};
use crate::latency::{evaluate_latency, LatencyError, LatencyReport};
use crate::mapper::{enumerate_dataflows, map_stage, Dataflow, MapError};
use crate::model::ConfigError;
use crate::workload::Workload;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("sparsity measurement failed: {0}")]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Latency(#[from] LatencyError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub dataflow: String,
    pub config_digest: String,
    pub sparsity: SparsityStats,
    pub latency: LatencyReport,
    pub energy: EnergyReport,
    pub power: PowerSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub rank: usize,
    pub dataflow: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub reports: Vec<CostReport>,
    /// Ascending total energy, ties broken by name.
    pub by_energy: Vec<RankEntry>,
    /// Ascending total cycles, ties broken by name.
    pub by_latency: Vec<RankEntry>,
}

/// Sparsity statistics for a run: measured by the kernel or taken as given.
pub fn resolve_sparsity(cfg: &RunConfig) -> Result<SparsityStats, SimError> {
    match cfg.sparsity.mode {
        SparsityMode::Fixed => cfg.sparsity.fixed.ok_or_else(|| {
            SimError::Config(ConfigError::invalid("sparsity.fixed", "missing in fixed mode"))
        }),
        SparsityMode::Measured => Ok(run_desk_pass(&cfg.desk_pass())?.stats),
    }
}

pub fn evaluate_energy(
    cfg: &RunConfig,
    w: &Workload,
    df: Dataflow,
    stats: &SparsityStats,
) -> Result<EnergyReport, SimError> {
    let gate = cfg.sparsity.gate_bp_mm;
    let mut stages = Vec::new();
    for s in w.stages() {
        let plan = if s.is_mm() {
            Some(map_stage(s, df, &cfg.array)?)
        } else {
            None
        };
        let ec = compute_energy(s, stats, &cfg.coefficients, gate);
        let em = memory_energy(s, plan.as_ref(), &cfg.memory, stats, gate)?;
        stages.push(StageEnergy::new(s, ec, em));
    }
    Ok(assemble_energy(stages))
}

/// Evaluates one dataflow with known sparsity statistics.
pub fn evaluate(
    cfg: &RunConfig,
    w: &Workload,
    df: Dataflow,
    stats: SparsityStats,
    digest: &str,
) -> Result<CostReport, SimError> {
    let latency = evaluate_latency(w, df, &cfg.array)?;
    let energy = evaluate_energy(cfg, w, df, &stats)?;
    let power = derive_power_efficiency(&energy, &latency, cfg.array.peak_ops())?;
    Ok(CostReport {
        dataflow: df.name(),
        config_digest: digest.to_string(),
        sparsity: stats,
        latency,
        energy,
        power,
    })
}

pub fn run_simulate(cfg: &RunConfig, df: Dataflow) -> Result<CostReport, SimError> {
    cfg.validate()?;
    let w = Workload::build(&cfg.model)?;
    let stats = resolve_sparsity(cfg)?;
    evaluate(cfg, &w, df, stats, &cfg.digest())
}

fn rank(reports: &[CostReport], key: impl Fn(&CostReport) -> f64) -> Vec<RankEntry> {
    let mut rows: Vec<(String, f64)> = reports.iter().map(|r| (r.dataflow.clone(), key(r))).collect();
    rows.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    rows.into_iter()
        .enumerate()
        .map(|(i, (dataflow, value))| RankEntry {
            rank: i + 1,
            dataflow,
            value,
        })
        .collect()
}

pub fn run_sweep(cfg: &RunConfig) -> Result<SweepResult, SimError> {
    cfg.validate()?;
    let w = Workload::build(&cfg.model)?;
    let stats = resolve_sparsity(cfg)?;
    let digest = cfg.digest();
    let reports = enumerate_dataflows()
        .into_par_iter()
        .map(|df| evaluate(cfg, &w, df, stats, &digest))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SweepResult {
        by_energy: rank(&reports, |r| r.energy.grand_total_j),
        by_latency: rank(&reports, |r| r.latency.total_cycles as f64),
        reports,
    })
}
