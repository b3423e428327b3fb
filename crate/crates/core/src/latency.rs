//! Cycle counts, utilization and wall-clock latency.
//!
//! One pass of a spatial tile costs `2*D_row + D_col - 2` cycles of fill and
//! drain plus the streamed extent. A tile visited `n` times pays the fill and
//! drain `n` times; with a single visit this is the familiar
//! `2*D_row + D_col + T_stream - 2`.
//!
//! Element-wise stages run on dedicated units: one BN unit, one unit shared
//! by SOMA, GRAD and RES. With overlap enabled the phase lasts as long as its
//! busiest unit; otherwise every stage is serialized.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mapper::{map_stage, ArrayConfig, Dataflow, MapError, TilingPlan};
use crate::workload::{Phase, StageKind, StageSpec, Workload};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LatencyError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("stage {0} is a matrix multiply, not element-wise")]
    NotElementwise(String),
}

/// Fill, accumulate and drain one tile with a stream of `t_stream` rows.
pub fn tile_latency(d_row: u64, d_col: u64, t_stream: u64) -> u64 {
    2 * d_row + d_col + t_stream - 2
}

/// Cycles one spatial tile occupies the array, over all its visits.
pub fn plan_tile_latency(plan: &TilingPlan, arr: &ArrayConfig) -> u64 {
    plan.visits * (2 * arr.rows + arr.cols - 2) + plan.stream_extent
}

pub fn stage_latency(plan: &TilingPlan, arr: &ArrayConfig) -> u64 {
    plan_tile_latency(plan, arr) * plan.spatial_tiles() * plan.instances
}

pub fn stage_utilization(plan: &TilingPlan, arr: &ArrayConfig) -> f64 {
    plan.macs() as f64 / (stage_latency(plan, arr) as f64 * (arr.rows * arr.cols) as f64)
}

/// Register stages in each element-wise datapath.
pub fn pipeline_depth(kind: StageKind, phase: Phase) -> u64 {
    match (kind, phase) {
        (StageKind::Bn, Phase::Fp) => 13,
        (StageKind::Bn, _) => 16,
        (StageKind::Soma | StageKind::Grad, _) => 4,
        (StageKind::Res, _) => 1,
        (StageKind::Mm, _) => 0,
    }
}

pub fn elementwise_latency(stage: &StageSpec, lanes: u64) -> Result<u64, LatencyError> {
    if stage.is_mm() {
        return Err(LatencyError::NotElementwise(stage.label.clone()));
    }
    Ok(stage.elements().div_ceil(lanes) + pipeline_depth(stage.kind, stage.phase))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Array,
    Bn,
    Lif,
}

impl Unit {
    pub fn of(kind: StageKind) -> Unit {
        match kind {
            StageKind::Mm => Unit::Array,
            StageKind::Bn => Unit::Bn,
            StageKind::Soma | StageKind::Grad | StageKind::Res => Unit::Lif,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLatency {
    pub label: String,
    pub phase: Phase,
    pub kind: StageKind,
    pub unit: Unit,
    /// Busy cycles on the stage's unit.
    pub cycles: u64,
    pub macs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseLatency {
    pub phase: Phase,
    /// Wall cycles of the phase.
    pub cycles: u64,
    pub array_cycles: u64,
    pub bn_cycles: u64,
    pub lif_cycles: u64,
    pub macs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub stages: Vec<StageLatency>,
    pub phases: Vec<PhaseLatency>,
    pub total_cycles: u64,
    /// Cycles the MM array is busy.
    pub mm_cycles: u64,
    pub total_macs: u64,
    /// MACs over array capacity during the MM cycles.
    pub mm_utilization: f64,
    /// MACs over array capacity during the whole run.
    pub utilization: f64,
    pub wall_seconds: f64,
    pub overlapped: bool,
}

impl LatencyReport {
    pub fn phase(&self, phase: Phase) -> Option<&PhaseLatency> {
        self.phases.iter().find(|p| p.phase == phase)
    }
}

pub fn aggregate(stages: Vec<StageLatency>, arr: &ArrayConfig) -> LatencyReport {
    let mut phases = Vec::new();
    for phase in Phase::ALL {
        let mut p = PhaseLatency {
            phase,
            cycles: 0,
            array_cycles: 0,
            bn_cycles: 0,
            lif_cycles: 0,
            macs: 0,
        };
        let mut any = false;
        for s in stages.iter().filter(|s| s.phase == phase) {
            any = true;
            p.macs += s.macs;
            match s.unit {
                Unit::Array => p.array_cycles += s.cycles,
                Unit::Bn => p.bn_cycles += s.cycles,
                Unit::Lif => p.lif_cycles += s.cycles,
            }
        }
        if !any {
            continue;
        }
        p.cycles = if arr.overlap_elementwise {
            p.array_cycles.max(p.bn_cycles).max(p.lif_cycles)
        } else {
            p.array_cycles + p.bn_cycles + p.lif_cycles
        };
        phases.push(p);
    }
    let total_cycles: u64 = phases.iter().map(|p| p.cycles).sum();
    let mm_cycles: u64 = phases.iter().map(|p| p.array_cycles).sum();
    let total_macs: u64 = phases.iter().map(|p| p.macs).sum();
    let cells = (arr.rows * arr.cols) as f64;
    let ratio = |cycles: u64| {
        if cycles == 0 {
            0.0
        } else {
            total_macs as f64 / (cycles as f64 * cells)
        }
    };
    LatencyReport {
        mm_utilization: ratio(mm_cycles),
        utilization: ratio(total_cycles),
        wall_seconds: total_cycles as f64 / arr.freq_hz,
        stages,
        phases,
        total_cycles,
        mm_cycles,
        total_macs,
        overlapped: arr.overlap_elementwise,
    }
}

pub fn stage_cycles(
    stage: &StageSpec,
    df: Dataflow,
    arr: &ArrayConfig,
) -> Result<StageLatency, LatencyError> {
    let cycles = if stage.is_mm() {
        stage_latency(&map_stage(stage, df, arr)?, arr)
    } else {
        elementwise_latency(stage, arr.lanes())?
    };
    Ok(StageLatency {
        label: stage.label.clone(),
        phase: stage.phase,
        kind: stage.kind,
        unit: Unit::of(stage.kind),
        cycles,
        macs: stage.macs(),
    })
}

pub fn evaluate_latency(
    w: &Workload,
    df: Dataflow,
    arr: &ArrayConfig,
) -> Result<LatencyReport, LatencyError> {
    let stages = w
        .stages()
        .map(|s| stage_cycles(s, df, arr))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(aggregate(stages, arr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapper::{map_dims, LoopDim, Stationarity};
    use crate::workload::{MmDims, SparsityBinding, StageDims};

    fn os_c() -> Dataflow {
        Dataflow::new(Stationarity::Os, LoopDim::C)
    }

    fn plan(b: u64, c: u64, k: u64, df: Dataflow, arr: &ArrayConfig) -> TilingPlan {
        map_dims("t", Phase::Fp, MmDims::new(b, c, k), 1, df, arr)
    }

    fn ew(kind: StageKind, elements: u64) -> StageSpec {
        StageSpec {
            phase: Phase::Fp,
            kind,
            dims: StageDims::Elementwise { elements },
            instances: 1,
            input_bits: 16,
            weight_bits: 16,
            output_bits: 16,
            sparsity: SparsityBinding::None,
            group: 1,
            block: 0,
            label: "L0.e".into(),
            bn_rows: 0,
        }
    }

    #[test]
    fn tile_goldens() {
        assert_eq!(tile_latency(64, 64, 64), 254);
        assert_eq!(tile_latency(1, 1, 1), 2);
        assert_eq!(tile_latency(64, 64, 512), 702);
    }

    #[test]
    fn stage_goldens() {
        let arr = ArrayConfig::default();
        let p = plan(12544, 512, 512, os_c(), &arr);
        assert_eq!(stage_latency(&p, &arr), 1_100_736);
        let eta = stage_utilization(&p, &arr);
        assert!((eta - 12544.0 * 512.0 * 512.0 / (1_100_736.0 * 4096.0)).abs() < 1e-15);
        assert!((eta - 0.729).abs() < 5e-4);

        let p = plan(64, 64, 64, os_c(), &arr);
        assert_eq!(stage_latency(&p, &arr), 254);
        assert!((stage_utilization(&p, &arr) - 64.0 / 254.0).abs() < 1e-15);
    }

    #[test]
    fn doubling_rows_doubles_cost() {
        let arr = ArrayConfig::default();
        let a = stage_latency(&plan(640, 512, 512, os_c(), &arr), &arr);
        let b = stage_latency(&plan(1280, 512, 512, os_c(), &arr), &arr);
        assert_eq!(b, 2 * a);
    }

    #[test]
    fn long_stream_saturates() {
        let arr = ArrayConfig::unbounded(64, 64);
        let eta = stage_utilization(&plan(64, 1 << 24, 64, os_c(), &arr), &arr);
        assert!(eta > 0.9999 && eta <= 1.0);
    }

    #[test]
    fn elementwise_goldens() {
        assert_eq!(elementwise_latency(&ew(StageKind::Soma, 0), 64).unwrap(), 4);
        assert_eq!(
            elementwise_latency(&ew(StageKind::Soma, 6_400_000), 64).unwrap(),
            100_004
        );
        let a = elementwise_latency(&ew(StageKind::Res, 6_400_000), 64).unwrap() - 1;
        let b = elementwise_latency(&ew(StageKind::Res, 6_400_000), 128).unwrap() - 1;
        assert_eq!(a, 2 * b);
    }

    #[test]
    fn aggregate_sums() {
        let arr = ArrayConfig::default();
        let one = StageLatency {
            label: "a".into(),
            phase: Phase::Fp,
            kind: StageKind::Mm,
            unit: Unit::Array,
            cycles: 1000,
            macs: 64 * 64 * 500,
        };
        let r = aggregate(vec![one.clone()], &arr);
        assert_eq!(r.total_cycles, 1000);
        let mut two = one.clone();
        two.phase = Phase::Bp;
        let r = aggregate(vec![one, two], &arr);
        assert_eq!(r.total_cycles, r.phases.iter().map(|p| p.cycles).sum::<u64>());
        assert!((r.mm_utilization - 0.5).abs() < 1e-15);
    }

    #[test]
    fn overlap_takes_busiest_unit() {
        let mk = |kind, unit, cycles| StageLatency {
            label: "x".into(),
            phase: Phase::Fp,
            kind,
            unit,
            cycles,
            macs: 0,
        };
        let stages = vec![
            mk(StageKind::Mm, Unit::Array, 100),
            mk(StageKind::Bn, Unit::Bn, 30),
            mk(StageKind::Soma, Unit::Lif, 120),
        ];
        let arr = ArrayConfig::default();
        assert_eq!(aggregate(stages.clone(), &arr).total_cycles, 120);
        let serial = ArrayConfig {
            overlap_elementwise: false,
            ..arr
        };
        assert_eq!(aggregate(stages, &serial).total_cycles, 250);
    }
}
