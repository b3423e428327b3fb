//! Computation and memory-access energy per stage, operator class and phase.
//!
//! Every number here is a product of an operation or bit count with a
//! configurable per-primitive energy. The default coefficients are rough
//! 28 nm-class placeholders, not measured values.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::SparsityStats;
use crate::latency::LatencyReport;
use crate::mapper::{Axis, MapError, Stationarity, TilingPlan};
use crate::model::ConfigError;
use crate::workload::{OperatorClass, Phase, SparsityBinding, StageKind, StageSpec};

const PJ: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnergyError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("stage {0} needs a tiling plan")]
    MissingPlan(String),
    #[error("{0}")]
    Sparsity(String),
    #[error("no memory level with role {0:?}")]
    MissingLevel(MemoryRole),
    #[error("latency is zero; power is undefined")]
    ZeroLatency,
}

/// Per-primitive energies in picojoules at the configured operand width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyCoefficients {
    pub process: String,
    pub mac_pj: f64,
    pub add_pj: f64,
    pub sub_pj: f64,
    pub mul_pj: f64,
    pub mux_pj: f64,
    pub sqrt_pj: f64,
    pub div_pj: f64,
}

impl Default for EnergyCoefficients {
    fn default() -> Self {
        EnergyCoefficients {
            process: "28nm (placeholder)".into(),
            mac_pj: 0.75,
            add_pj: 0.2,
            sub_pj: 0.2,
            mul_pj: 0.55,
            mux_pj: 0.01,
            sqrt_pj: 1.6,
            div_pj: 1.6,
        }
    }
}

impl EnergyCoefficients {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fields = [
            ("coefficients.mac_pj", self.mac_pj),
            ("coefficients.add_pj", self.add_pj),
            ("coefficients.sub_pj", self.sub_pj),
            ("coefficients.mul_pj", self.mul_pj),
            ("coefficients.mux_pj", self.mux_pj),
            ("coefficients.sqrt_pj", self.sqrt_pj),
            ("coefficients.div_pj", self.div_pj),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::invalid(name, "must be finite and > 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MemoryKind {
    Dram,
    Sram,
    Register,
}

/// What a memory level holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryRole {
    Dram,
    /// Spikes feeding the array.
    SpikeInput,
    Weight,
    /// MM outputs and partial sums.
    Output,
    /// Backward gradients feeding the array.
    GradInput,
    /// Normalization statistics kept from FP for BP.
    BnCache,
    MembranePotential,
    /// Spikes and surrogate masks kept from FP for BP and WG.
    SpikeStore,
    /// Potential gradients.
    GradStore,
    Scratch,
    Register1,
    RegisterWide,
}

impl MemoryRole {
    pub const ALL: [MemoryRole; 12] = [
        MemoryRole::Dram,
        MemoryRole::SpikeInput,
        MemoryRole::Weight,
        MemoryRole::Output,
        MemoryRole::GradInput,
        MemoryRole::BnCache,
        MemoryRole::MembranePotential,
        MemoryRole::SpikeStore,
        MemoryRole::GradStore,
        MemoryRole::Scratch,
        MemoryRole::Register1,
        MemoryRole::RegisterWide,
    ];

    fn kind(self) -> MemoryKind {
        match self {
            MemoryRole::Dram => MemoryKind::Dram,
            MemoryRole::Register1 | MemoryRole::RegisterWide => MemoryKind::Register,
            _ => MemoryKind::Sram,
        }
    }

    fn one_bit(self) -> bool {
        matches!(
            self,
            MemoryRole::SpikeInput | MemoryRole::SpikeStore | MemoryRole::Register1
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryLevel {
    pub name: String,
    pub kind: MemoryKind,
    pub role: MemoryRole,
    /// Capacity in bits; `None` is unlimited.
    pub volume_bits: Option<u64>,
    pub word_bits: u32,
    pub read_pj_per_bit: f64,
    pub write_pj_per_bit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoryConfig {
    pub levels: Vec<MemoryLevel>,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        // 16-bit banks hold the largest activation (12544 x 2048 x 16 bit);
        // 1-bit banks hold the largest spike map.
        let wide = 1u64 << 29;
        let narrow = 1u64 << 26;
        let sram = |name: &str, role: MemoryRole| {
            let one = role.one_bit();
            MemoryLevel {
                name: name.into(),
                kind: MemoryKind::Sram,
                role,
                volume_bits: Some(if one { narrow } else { wide }),
                word_bits: if one { 1 } else { 16 },
                read_pj_per_bit: if one { 0.30 } else { 0.45 },
                write_pj_per_bit: if one { 0.35 } else { 0.50 },
            }
        };
        let reg = |name: &str, role: MemoryRole, bits: u32| MemoryLevel {
            name: name.into(),
            kind: MemoryKind::Register,
            role,
            volume_bits: None,
            word_bits: bits,
            read_pj_per_bit: 0.008,
            write_pj_per_bit: 0.009,
        };
        MemoryConfig {
            levels: vec![
                MemoryLevel {
                    name: "d0".into(),
                    kind: MemoryKind::Dram,
                    role: MemoryRole::Dram,
                    volume_bits: None,
                    word_bits: 16,
                    read_pj_per_bit: 20.0,
                    write_pj_per_bit: 20.0,
                },
                sram("s0", MemoryRole::SpikeInput),
                sram("s1", MemoryRole::Weight),
                sram("s2", MemoryRole::Output),
                sram("s3", MemoryRole::GradInput),
                sram("s4", MemoryRole::BnCache),
                sram("s5", MemoryRole::MembranePotential),
                sram("s6", MemoryRole::SpikeStore),
                sram("s7", MemoryRole::GradStore),
                sram("s8", MemoryRole::Scratch),
                reg("r0", MemoryRole::Register1, 1),
                reg("r1", MemoryRole::RegisterWide, 16),
            ],
        }
    }
}

impl MemoryConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for role in MemoryRole::ALL {
            let n = self.levels.iter().filter(|l| l.role == role).count();
            if n != 1 {
                return Err(ConfigError::invalid(
                    "memory.levels",
                    format!("role {role:?} must appear exactly once, found {n}"),
                ));
            }
        }
        for l in &self.levels {
            let field = |f: &str| format!("memory.levels[{}].{f}", l.name);
            if l.kind != l.role.kind() {
                return Err(ConfigError::invalid(
                    field("kind"),
                    format!("role {:?} needs kind {:?}", l.role, l.role.kind()),
                ));
            }
            if l.role.one_bit() && l.word_bits != 1 {
                return Err(ConfigError::invalid(field("word_bits"), "spike levels are 1 bit wide"));
            }
            if l.word_bits == 0 {
                return Err(ConfigError::invalid(field("word_bits"), "must be >= 1"));
            }
            for (f, v) in [
                ("read_pj_per_bit", l.read_pj_per_bit),
                ("write_pj_per_bit", l.write_pj_per_bit),
            ] {
                if !(v.is_finite() && v > 0.0) {
                    return Err(ConfigError::invalid(field(f), "must be finite and > 0"));
                }
            }
            if l.volume_bits == Some(0) {
                return Err(ConfigError::invalid(field("volume_bits"), "must be >= 1"));
            }
        }
        Ok(())
    }

    pub fn level(&self, role: MemoryRole) -> Result<&MemoryLevel, EnergyError> {
        self.levels
            .iter()
            .find(|l| l.role == role)
            .ok_or(EnergyError::MissingLevel(role))
    }

    /// Copy with every per-bit energy set to `value`.
    pub fn with_uniform_energy(&self, value: f64) -> MemoryConfig {
        let mut m = self.clone();
        for l in &mut m.levels {
            l.read_pj_per_bit = value;
            l.write_pj_per_bit = value;
        }
        m
    }
}

/// Sparsity factor applied to a stage's compute.
pub fn gate(stage: &StageSpec, stats: &SparsityStats, gate_bp_mm: bool) -> f64 {
    match stage.sparsity {
        SparsityBinding::Spike => stats.s_s,
        SparsityBinding::SpikeGradMask if gate_bp_mm => stats.s_smg,
        SparsityBinding::PotentialGrad => stats.s_pg,
        _ => 1.0,
    }
}

/// Computation energy in joules.
pub fn compute_energy(
    stage: &StageSpec,
    stats: &SparsityStats,
    c: &EnergyCoefficients,
    gate_bp_mm: bool,
) -> f64 {
    let e = stage.elements() as f64;
    let pj = match stage.kind {
        StageKind::Mm => {
            let macs = stage.macs() as f64;
            let g = gate(stage, stats, gate_bp_mm);
            match stage.phase {
                // Binary operand: accumulation only.
                Phase::Fp | Phase::Wg => macs * g * c.add_pj,
                Phase::Bp => macs * g * c.mac_pj,
            }
        }
        StageKind::Soma => {
            e * (c.mul_pj + c.add_pj + 2.0 * c.mux_pj + 2.0 * c.sub_pj)
        }
        StageKind::Grad => {
            let recurrence = stats.s_pg * (2.0 * c.mul_pj + c.add_pj);
            e * (recurrence + c.add_pj + c.mux_pj)
        }
        StageKind::Bn => {
            let m = bn_batch(stage) as f64;
            match stage.phase {
                Phase::Fp => {
                    let per_element = 3.0 * c.add_pj + 2.0 * c.mul_pj + c.sub_pj + c.div_pj;
                    let per_feature = c.add_pj + c.mul_pj + c.sub_pj + c.div_pj + c.sqrt_pj;
                    e * (per_element + per_feature / m)
                }
                _ => {
                    // scaled gradient, three column sums and the bias sum,
                    // then the input gradient with reciprocals hoisted out
                    let scaled = 2.0 * c.mul_pj + c.div_pj;
                    let sums = 3.0 * c.add_pj + c.mul_pj + c.add_pj;
                    let dx = 3.0 * c.mul_pj + 2.0 * c.mul_pj + c.add_pj + 2.0 * c.sub_pj;
                    let per_feature = 2.0 * c.div_pj + 2.0 * c.mul_pj;
                    e * (scaled + sums + dx + per_feature / m)
                }
            }
        }
        StageKind::Res => e * c.add_pj,
    };
    pj * PJ
}

/// Samples sharing one set of per-feature statistics.
fn bn_batch(stage: &StageSpec) -> u64 {
    stage.bn_rows.max(1)
}

/// Bits moved at each memory level by one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Traffic {
    pub role: MemoryRole,
    pub read_bits: f64,
    pub write_bits: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MemoryBreakdown {
    pub dram_j: f64,
    pub sram_j: f64,
    pub register_j: f64,
}

impl MemoryBreakdown {
    pub fn total(&self) -> f64 {
        self.dram_j + self.sram_j + self.register_j
    }
}

fn operand_roles(stage: &StageSpec) -> (MemoryRole, MemoryRole) {
    let left = match (stage.phase, stage.input_bits == 1) {
        (Phase::Fp, true) => MemoryRole::SpikeInput,
        (_, true) => MemoryRole::SpikeStore,
        (_, false) => MemoryRole::GradInput,
    };
    let right = match (stage.phase, stage.weight_bits == 1) {
        (_, true) => MemoryRole::SpikeStore,
        (Phase::Wg, false) => MemoryRole::GradStore,
        (_, false) => MemoryRole::Weight,
    };
    (left, right)
}

fn register_role(bits: u32) -> MemoryRole {
    if bits == 1 {
        MemoryRole::Register1
    } else {
        MemoryRole::RegisterWide
    }
}

/// Access counts for an MM stage under its tiling plan.
///
/// The stationary operand is loaded once per visit of each spatial tile. A
/// streamed operand spans the stream and one spatial axis and is re-read for
/// every tile along the spatial axis it does not span. Outputs held in place
/// are written once per visit and read back on every revisit; streamed-out
/// outputs are rewritten once per reduction tile.
pub fn mm_traffic(
    stage: &StageSpec,
    plan: &TilingPlan,
    stats: &SparsityStats,
    gate_bp_mm: bool,
) -> Vec<Traffic> {
    let d = plan.dims;
    let inst = plan.instances as f64;
    let (left, right) = operand_roles(stage);
    let event = matches!(stage.phase, Phase::Fp | Phase::Wg);
    let operands = [
        (Axis::Rows, Axis::Reduction, d.b * d.c, stage.input_bits, left, true),
        (Axis::Reduction, Axis::Cols, d.c * d.k, stage.weight_bits, right, false),
    ];
    let stationary_input = match plan.dataflow.stationarity {
        Stationarity::Is => Some(0),
        Stationarity::Ws => Some(1),
        Stationarity::Os => None,
    };
    let mut out = Vec::new();
    for (i, (a0, a1, elems, bits, role, is_left)) in operands.into_iter().enumerate() {
        // event-driven skipping of silent spikes on the binary input
        let scale = if event && is_left && bits == 1 { stats.s_s } else { 1.0 };
        let base = elems as f64 * bits as f64 * inst * scale;
        let reads = if stationary_input == Some(i) {
            base * plan.visits as f64
        } else {
            let other = [plan.spatial_axes.0, plan.spatial_axes.1]
                .into_iter()
                .find(|&ax| ax != a0 && ax != a1)
                .expect("streamed operand spans one spatial axis");
            base * plan.tiles_along(other) as f64
        };
        out.push(Traffic {
            role,
            read_bits: reads,
            write_bits: 0.0,
        });
    }
    let out_bits = (d.b * d.k) as f64 * stage.output_bits as f64 * inst;
    let writes = match plan.dataflow.stationarity {
        Stationarity::Os => plan.visits as f64,
        _ => plan.reduction_tiles() as f64,
    };
    out.push(Traffic {
        role: MemoryRole::Output,
        read_bits: out_bits * (writes - 1.0),
        write_bits: out_bits * writes,
    });

    let g = gate(stage, stats, gate_bp_mm);
    let active = stage.macs() as f64 * g;
    for bits in [stage.input_bits, stage.weight_bits, stage.output_bits] {
        let moved = active * bits as f64;
        out.push(Traffic {
            role: register_role(bits),
            read_bits: moved,
            write_bits: moved,
        });
    }
    out
}

/// Access counts for an element-wise stage, including the FP-to-BP state
/// that BN and SOMA persist.
pub fn elementwise_traffic(stage: &StageSpec) -> Vec<Traffic> {
    let e = stage.elements() as f64;
    let w = stage.input_bits as f64;
    let t = |role, read_bits, write_bits| Traffic {
        role,
        read_bits,
        write_bits,
    };
    use MemoryRole::*;
    match (stage.kind, stage.phase) {
        (StageKind::Bn, Phase::Fp) => vec![
            t(Output, e * w, 0.0),
            t(Scratch, 0.0, e * w),
            t(BnCache, 0.0, e * w),
        ],
        (StageKind::Bn, _) => vec![
            t(GradStore, e * w, 0.0),
            t(BnCache, e * w, 0.0),
            t(GradInput, 0.0, e * w),
        ],
        (StageKind::Soma, _) => vec![
            t(Scratch, e * w, 0.0),
            t(MembranePotential, e * w, e * w),
            t(SpikeInput, 0.0, e),
            t(SpikeStore, 0.0, 2.0 * e),
        ],
        (StageKind::Grad, _) => vec![
            t(Output, e * w, 0.0),
            t(MembranePotential, e * w, 0.0),
            t(SpikeStore, 2.0 * e, 0.0),
            t(GradStore, e * w, e * w),
        ],
        (StageKind::Res, _) => vec![t(Output, e * w, 0.0), t(Scratch, e * w, e * w)],
        (StageKind::Mm, _) => Vec::new(),
    }
}

/// Unique bits of each operand spilled to DRAM when it overflows its level.
fn dram_traffic(stage: &StageSpec, plan: Option<&TilingPlan>, mem: &MemoryConfig) -> Result<(f64, f64), EnergyError> {
    let Some(plan) = plan else {
        return Ok((0.0, 0.0));
    };
    let d = plan.dims;
    let (left, right) = operand_roles(stage);
    let mut reads = 0.0;
    let mut writes = 0.0;
    let tensors = [
        (left, d.b * d.c, stage.input_bits, false),
        (right, d.c * d.k, stage.weight_bits, false),
        (MemoryRole::Output, d.b * d.k, stage.output_bits, true),
    ];
    for (role, elems, bits, is_out) in tensors {
        let size = elems as f64 * bits as f64 * plan.instances as f64;
        let level = mem.level(role)?;
        if level.volume_bits.is_some_and(|v| size > v as f64) {
            if is_out {
                writes += size;
            } else {
                reads += size;
            }
        }
    }
    Ok((reads, writes))
}

pub fn memory_energy(
    stage: &StageSpec,
    plan: Option<&TilingPlan>,
    mem: &MemoryConfig,
    stats: &SparsityStats,
    gate_bp_mm: bool,
) -> Result<MemoryBreakdown, EnergyError> {
    let traffic = if stage.is_mm() {
        let plan = plan.ok_or_else(|| EnergyError::MissingPlan(stage.label.clone()))?;
        mm_traffic(stage, plan, stats, gate_bp_mm)
    } else {
        elementwise_traffic(stage)
    };
    let mut b = MemoryBreakdown::default();
    for t in &traffic {
        let level = mem.level(t.role)?;
        let pj = t.read_bits * level.read_pj_per_bit + t.write_bits * level.write_pj_per_bit;
        match level.kind {
            MemoryKind::Dram => b.dram_j += pj * PJ,
            MemoryKind::Sram => b.sram_j += pj * PJ,
            MemoryKind::Register => b.register_j += pj * PJ,
        }
    }
    let (r, w) = dram_traffic(stage, plan, mem)?;
    let dram = mem.level(MemoryRole::Dram)?;
    b.dram_j += (r * dram.read_pj_per_bit + w * dram.write_pj_per_bit) * PJ;
    Ok(b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEnergy {
    pub label: String,
    pub phase: Phase,
    pub kind: StageKind,
    pub class: OperatorClass,
    pub compute_j: f64,
    pub memory: MemoryBreakdown,
    pub memory_j: f64,
    pub total_j: f64,
}

impl StageEnergy {
    pub fn new(stage: &StageSpec, compute_j: f64, memory: MemoryBreakdown) -> Self {
        let memory_j = memory.total();
        StageEnergy {
            label: stage.label.clone(),
            phase: stage.phase,
            kind: stage.kind,
            class: stage.class(),
            compute_j,
            memory,
            memory_j,
            total_j: compute_j + memory_j,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyCell {
    pub phase: Phase,
    pub class: OperatorClass,
    pub compute_j: f64,
    pub memory_j: f64,
    pub total_j: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassEnergy {
    pub class: OperatorClass,
    pub fp_j: f64,
    pub bp_j: f64,
    pub wg_j: f64,
    pub total_j: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseEnergy {
    pub phase: Phase,
    pub total_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub stages: Vec<StageEnergy>,
    /// Phase-major, classes in [`OperatorClass::ALL`] order.
    pub cells: Vec<EnergyCell>,
    pub phases: Vec<PhaseEnergy>,
    pub classes: Vec<ClassEnergy>,
    pub grand_total_j: f64,
}

impl EnergyReport {
    pub fn cell(&self, phase: Phase, class: OperatorClass) -> &EnergyCell {
        self.cells
            .iter()
            .find(|c| c.phase == phase && c.class == class)
            .expect("every phase/class cell is present")
    }

    pub fn phase_total(&self, phase: Phase) -> f64 {
        self.phases
            .iter()
            .find(|p| p.phase == phase)
            .map_or(0.0, |p| p.total_j)
    }
}

/// Groups stage energies into cells, phase totals, class totals and the
/// grand total.
///
/// Cells accumulate compute and memory separately in stage order and add
/// them last. Class totals add FP, BP and WG in that order; the grand total
/// adds class totals in class order.
pub fn assemble_energy(stages: Vec<StageEnergy>) -> EnergyReport {
    let mut cells = Vec::with_capacity(12);
    for phase in Phase::ALL {
        for class in OperatorClass::ALL {
            let mut compute_j = 0.0;
            let mut memory_j = 0.0;
            for s in stages.iter().filter(|s| s.phase == phase && s.class == class) {
                compute_j += s.compute_j;
                memory_j += s.memory_j;
            }
            cells.push(EnergyCell {
                phase,
                class,
                compute_j,
                memory_j,
                total_j: compute_j + memory_j,
            });
        }
    }
    let find = |p: Phase, c: OperatorClass| {
        cells
            .iter()
            .find(|x| x.phase == p && x.class == c)
            .map_or(0.0, |x| x.total_j)
    };
    let phases = Phase::ALL
        .iter()
        .map(|&p| PhaseEnergy {
            phase: p,
            total_j: OperatorClass::ALL.iter().fold(0.0, |acc, &c| acc + find(p, c)),
        })
        .collect();
    let classes: Vec<ClassEnergy> = OperatorClass::ALL
        .iter()
        .map(|&c| {
            let (fp_j, bp_j, wg_j) = (find(Phase::Fp, c), find(Phase::Bp, c), find(Phase::Wg, c));
            ClassEnergy {
                class: c,
                fp_j,
                bp_j,
                wg_j,
                total_j: fp_j + bp_j + wg_j,
            }
        })
        .collect();
    let grand_total_j = classes.iter().fold(0.0, |acc, c| acc + c.total_j);
    EnergyReport {
        stages,
        cells,
        phases,
        classes,
        grand_total_j,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSummary {
    pub watts: f64,
    pub tflops: f64,
    pub tflops_per_watt: f64,
    pub peak_tflops: f64,
}

pub fn derive_power_efficiency(
    e: &EnergyReport,
    l: &LatencyReport,
    peak_ops: f64,
) -> Result<PowerSummary, EnergyError> {
    if !(l.wall_seconds > 0.0) {
        return Err(EnergyError::ZeroLatency);
    }
    let watts = e.grand_total_j / l.wall_seconds;
    let tflops = 2.0 * l.total_macs as f64 / l.wall_seconds / 1e12;
    Ok(PowerSummary {
        watts,
        tflops,
        tflops_per_watt: tflops / watts,
        peak_tflops: peak_ops / 1e12,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapper::{map_dims, ArrayConfig, Dataflow, LoopDim};
    use crate::workload::{MmDims, StageDims};

    fn stats(s_s: f64, s_smg: f64, s_pg: f64) -> SparsityStats {
        SparsityStats { s_s, s_smg, s_pg }
    }

    fn mm(phase: Phase, dims: (u64, u64, u64), sparsity: SparsityBinding) -> StageSpec {
        let spike = phase != Phase::Bp;
        StageSpec {
            phase,
            kind: StageKind::Mm,
            dims: StageDims::Mm(MmDims::new(dims.0, dims.1, dims.2)),
            instances: 1,
            input_bits: if spike { 1 } else { 16 },
            weight_bits: 16,
            output_bits: 16,
            sparsity,
            group: 1,
            block: 0,
            label: "L0.mm".into(),
            bn_rows: 0,
        }
    }

    fn plan(s: &StageSpec, st: Stationarity, d: LoopDim) -> TilingPlan {
        map_dims(
            "t",
            s.phase,
            s.mm_dims().unwrap(),
            s.instances,
            Dataflow::new(st, d),
            &ArrayConfig::default(),
        )
    }

    #[test]
    fn silent_spikes_cost_nothing() {
        let s = mm(Phase::Fp, (12544, 512, 512), SparsityBinding::Spike);
        let c = EnergyCoefficients::default();
        assert_eq!(compute_energy(&s, &stats(0.0, 0.5, 0.5), &c, true), 0.0);
    }

    #[test]
    fn fp_mm_hand_value() {
        let s = mm(Phase::Fp, (12544, 512, 512), SparsityBinding::Spike);
        let c = EnergyCoefficients {
            add_pj: 0.05,
            ..EnergyCoefficients::default()
        };
        let e = compute_energy(&s, &stats(0.2, 1.0, 1.0), &c, true);
        let expect = 12544.0 * 512.0 * 512.0 * 0.2 * 0.05e-12;
        assert!((e - expect).abs() <= 1e-15 * expect);
        assert!((e - 32.9e-6).abs() < 0.05e-6);
    }

    #[test]
    fn dense_bp_mm_is_mac_count() {
        let s = mm(Phase::Bp, (100, 30, 7), SparsityBinding::SpikeGradMask);
        let c = EnergyCoefficients::default();
        let e = compute_energy(&s, &stats(0.3, 1.0, 0.3), &c, true);
        assert_eq!(e, 100.0 * 30.0 * 7.0 * 0.75 * PJ);
        let ungated = compute_energy(&s, &stats(0.3, 0.1, 0.3), &c, false);
        assert_eq!(ungated, e);
    }

    #[test]
    fn resident_stage_has_no_dram() {
        let s = mm(Phase::Fp, (1024, 512, 512), SparsityBinding::Spike);
        let p = plan(&s, Stationarity::Os, LoopDim::C);
        let m = memory_energy(&s, Some(&p), &MemoryConfig::default(), &stats(0.2, 0.1, 0.1), true)
            .unwrap();
        assert_eq!(m.dram_j, 0.0);
        assert!(m.sram_j > 0.0 && m.register_j > 0.0);
    }

    #[test]
    fn overflow_spills_to_dram() {
        let s = mm(Phase::Fp, (1024, 512, 512), SparsityBinding::Spike);
        let p = plan(&s, Stationarity::Os, LoopDim::C);
        let mut mem = MemoryConfig::default();
        for l in &mut mem.levels {
            if l.role == MemoryRole::Weight {
                l.volume_bits = Some(1024);
            }
        }
        let m = memory_energy(&s, Some(&p), &mem, &stats(0.2, 0.1, 0.1), true).unwrap();
        assert!((m.dram_j - 512.0 * 512.0 * 16.0 * 20.0 * PJ).abs() < 1e-18);
    }

    #[test]
    fn output_stationary_writes_outputs_once() {
        let s = mm(Phase::Bp, (12544, 512, 512), SparsityBinding::SpikeGradMask);
        let st = stats(0.2, 0.1, 0.1);
        let out = |p: &TilingPlan| {
            mm_traffic(&s, p, &st, true)
                .into_iter()
                .find(|t| t.role == MemoryRole::Output)
                .unwrap()
        };
        let os = out(&plan(&s, Stationarity::Os, LoopDim::C));
        let ws = out(&plan(&s, Stationarity::Ws, LoopDim::C));
        assert_eq!(os.write_bits, 12544.0 * 512.0 * 16.0);
        assert_eq!(os.read_bits, 0.0);
        assert!(os.write_bits + os.read_bits <= ws.write_bits + ws.read_bits);
    }

    #[test]
    fn spike_read_once_is_unit_traffic() {
        // 1 x X spikes against a 1-wide weight on one tile: one pass over X bits
        let x = 40u64;
        let s = mm(Phase::Fp, (1, x, 1), SparsityBinding::Spike);
        let p = plan(&s, Stationarity::Os, LoopDim::C);
        let t = mm_traffic(&s, &p, &stats(1.0, 1.0, 1.0), true);
        let spikes = t.iter().find(|t| t.role == MemoryRole::SpikeInput).unwrap();
        assert_eq!(spikes.read_bits, x as f64);
        let mem = MemoryConfig::default();
        let r = mem.level(MemoryRole::SpikeInput).unwrap().read_pj_per_bit;
        assert_eq!(spikes.read_bits * r * PJ, x as f64 * 0.30 * PJ);
    }

    #[test]
    fn default_memory_is_valid_and_shaped() {
        let m = MemoryConfig::default();
        m.validate().unwrap();
        let count = |k: MemoryKind, bits: u32| {
            m.levels.iter().filter(|l| l.kind == k && l.word_bits == bits).count()
        };
        assert_eq!(count(MemoryKind::Sram, 1), 2);
        assert_eq!(count(MemoryKind::Sram, 16), 7);
        assert_eq!(count(MemoryKind::Register, 1), 1);
        assert_eq!(count(MemoryKind::Register, 16), 1);
        let mut bad = m.clone();
        bad.levels.retain(|l| l.kind != MemoryKind::Dram);
        assert!(bad.validate().is_err());
        let mut bad = m;
        bad.levels[3].read_pj_per_bit = 0.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn singleton_assembly() {
        let s = mm(Phase::Wg, (64, 64, 64), SparsityBinding::Spike);
        let se = StageEnergy::new(
            &s,
            1.5e-6,
            MemoryBreakdown {
                dram_j: 0.0,
                sram_j: 2.0e-6,
                register_j: 0.25e-6,
            },
        );
        let r = assemble_energy(vec![se.clone()]);
        let cell = r.cell(Phase::Wg, OperatorClass::Mm);
        assert_eq!((cell.compute_j, cell.memory_j), (se.compute_j, se.memory_j));
        assert_eq!(r.grand_total_j, se.total_j);
    }

    #[test]
    fn power_definitions() {
        let e = assemble_energy(vec![StageEnergy::new(
            &mm(Phase::Fp, (1, 1, 1), SparsityBinding::Spike),
            1.0,
            MemoryBreakdown::default(),
        )]);
        let arr = ArrayConfig::default();
        let l = crate::latency::aggregate(
            vec![crate::latency::StageLatency {
                label: "x".into(),
                phase: Phase::Fp,
                kind: StageKind::Mm,
                unit: crate::latency::Unit::Array,
                cycles: 500_000_000,
                macs: 1_000_000,
            }],
            &arr,
        );
        let p = derive_power_efficiency(&e, &l, arr.peak_ops()).unwrap();
        assert_eq!(p.watts, 1.0);
        assert!((p.peak_tflops - 4.096).abs() < 1e-12);
        let identity = 2.0 * 1e6 / e.grand_total_j / 1e12;
        assert!((p.tflops_per_watt - identity).abs() <= 1e-12 * identity);
    }
}
