//! Stage graphs for the three training phases of one Spiking Transformer block.
//!
//! Every linear layer is a matrix multiply `(B, C) x (C, K)`: `b` rows of the
//! input, `c` the shared (reduction) extent, `k` output columns. Attention
//! products are modeled per head-instance and repeated `instances` times.
//! Element-wise work (BN, SOMA, GRAD, RES) carries a flat element count.
//!
//! Each stage also carries a `group`: the 1-based index of the numbered stage
//! it belongs to within its phase (five in FP, thirteen in BP, four in WG).

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::model::{derive_dims, ConfigError, DerivedDims, ModelConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    #[serde(rename = "FP")]
    Fp,
    #[serde(rename = "BP")]
    Bp,
    #[serde(rename = "WG")]
    Wg,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Fp, Phase::Bp, Phase::Wg];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Fp => "FP",
            Phase::Bp => "BP",
            Phase::Wg => "WG",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum StageKind {
    Mm,
    Bn,
    Soma,
    Grad,
    Res,
}

impl StageKind {
    pub fn class(self) -> OperatorClass {
        match self {
            StageKind::Mm => OperatorClass::Mm,
            StageKind::Bn => OperatorClass::Bn,
            StageKind::Soma | StageKind::Grad => OperatorClass::Lif,
            StageKind::Res => OperatorClass::Res,
        }
    }
}

/// Operator classes used in the energy breakdown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum OperatorClass {
    Mm,
    Bn,
    /// SOMA in FP, GRAD in BP.
    Lif,
    Res,
}

impl OperatorClass {
    pub const ALL: [OperatorClass; 4] = [
        OperatorClass::Mm,
        OperatorClass::Bn,
        OperatorClass::Lif,
        OperatorClass::Res,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OperatorClass::Mm => "MM",
            OperatorClass::Bn => "BN",
            OperatorClass::Lif => "LIF",
            OperatorClass::Res => "RES",
        }
    }
}

impl fmt::Display for OperatorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which measured sparsity factor gates a stage's compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparsityBinding {
    /// Spike activity of the binary operand.
    Spike,
    /// Spike-gradient mask activity.
    SpikeGradMask,
    /// Non-zero potential gradients.
    PotentialGrad,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MmDims {
    pub b: u64,
    pub c: u64,
    pub k: u64,
}

impl MmDims {
    pub fn new(b: u64, c: u64, k: u64) -> Self {
        MmDims { b, c, k }
    }

    pub fn macs(&self) -> u64 {
        self.b * self.c * self.k
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageDims {
    Mm(MmDims),
    Elementwise { elements: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    pub phase: Phase,
    pub kind: StageKind,
    pub dims: StageDims,
    /// Back-to-back repetitions (attention head-instances); 1 otherwise.
    pub instances: u64,
    pub input_bits: u32,
    pub weight_bits: u32,
    pub output_bits: u32,
    pub sparsity: SparsityBinding,
    /// Numbered stage within the phase, starting at 1.
    pub group: u8,
    pub block: usize,
    pub label: String,
    /// Samples per feature column of a BN stage; zero elsewhere.
    #[serde(default)]
    pub bn_rows: u64,
}

impl StageSpec {
    pub fn mm_dims(&self) -> Option<MmDims> {
        match self.dims {
            StageDims::Mm(d) => Some(d),
            StageDims::Elementwise { .. } => None,
        }
    }

    /// Element count for element-wise stages, output elements for MM stages.
    pub fn elements(&self) -> u64 {
        match self.dims {
            StageDims::Mm(d) => d.b * d.k * self.instances,
            StageDims::Elementwise { elements } => elements,
        }
    }

    /// Multiply-accumulates across all instances; zero for element-wise stages.
    pub fn macs(&self) -> u64 {
        self.mm_dims().map_or(0, |d| d.macs() * self.instances)
    }

    pub fn class(&self) -> OperatorClass {
        self.kind.class()
    }

    pub fn is_mm(&self) -> bool {
        self.kind == StageKind::Mm
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageGraph {
    pub phase: Phase,
    pub stages: Vec<StageSpec>,
}

impl StageGraph {
    pub fn mm_stages(&self) -> impl Iterator<Item = &StageSpec> {
        self.stages.iter().filter(|s| s.is_mm())
    }

    /// Numbered stages per block.
    pub fn group_count(&self) -> usize {
        let mut groups: Vec<u8> = self
            .stages
            .iter()
            .filter(|s| s.block == 0)
            .map(|s| s.group)
            .collect();
        groups.sort_unstable();
        groups.dedup();
        groups.len()
    }

    pub fn total_macs(&self) -> u64 {
        self.stages.iter().map(StageSpec::macs).sum()
    }
}

/// All three phases for the configured number of blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub dims: DerivedDims,
    pub fp: StageGraph,
    pub bp: StageGraph,
    pub wg: StageGraph,
}

impl Workload {
    pub fn build(cfg: &ModelConfig) -> Result<Self, ConfigError> {
        let dims = derive_dims(cfg)?;
        Ok(Workload {
            dims,
            fp: build_fp_stages(cfg, &dims),
            bp: build_bp_stages(cfg, &dims),
            wg: build_wg_stages(cfg, &dims),
        })
    }

    pub fn phases(&self) -> [&StageGraph; 3] {
        [&self.fp, &self.bp, &self.wg]
    }

    pub fn stages(&self) -> impl Iterator<Item = &StageSpec> {
        self.fp
            .stages
            .iter()
            .chain(self.bp.stages.iter())
            .chain(self.wg.stages.iter())
    }

    pub fn total_macs(&self) -> u64 {
        self.phases().iter().map(|g| g.total_macs()).sum()
    }
}

struct Shapes {
    s: u64,
    d: u64,
    hidden: u64,
    n: u64,
    dh: u64,
    heads_total: u64,
    b: u32,
}

impl Shapes {
    fn new(cfg: &ModelConfig, dims: &DerivedDims) -> Self {
        Shapes {
            s: dims.seq_rows as u64,
            d: cfg.d_model as u64,
            hidden: (cfg.mlp_ratio * cfg.d_model) as u64,
            n: dims.tokens as u64,
            dh: dims.head_dim as u64,
            heads_total: (cfg.batch_size * cfg.timesteps * cfg.heads) as u64,
            b: cfg.bitwidth,
        }
    }
}

/// Appends stages for one block, prefixing labels with the block index.
struct Emitter<'a> {
    out: &'a mut Vec<StageSpec>,
    phase: Phase,
    block: usize,
    bits: u32,
    rows: u64,
}

impl Emitter<'_> {
    #[allow(clippy::too_many_arguments)]
    fn mm(
        &mut self,
        group: u8,
        label: &str,
        dims: MmDims,
        instances: u64,
        input_bits: u32,
        weight_bits: u32,
        sparsity: SparsityBinding,
    ) {
        self.out.push(StageSpec {
            phase: self.phase,
            kind: StageKind::Mm,
            dims: StageDims::Mm(dims),
            instances,
            input_bits,
            weight_bits,
            output_bits: self.bits,
            sparsity,
            group,
            block: self.block,
            label: format!("L{}.{}", self.block, label),
            bn_rows: 0,
        });
    }

    fn elementwise(&mut self, group: u8, kind: StageKind, label: &str, elements: u64) {
        let sparsity = match kind {
            StageKind::Grad => SparsityBinding::PotentialGrad,
            _ => SparsityBinding::None,
        };
        self.out.push(StageSpec {
            phase: self.phase,
            kind,
            dims: StageDims::Elementwise { elements },
            instances: 1,
            input_bits: self.bits,
            weight_bits: self.bits,
            output_bits: if kind == StageKind::Soma { 1 } else { self.bits },
            sparsity,
            group,
            block: self.block,
            label: format!("L{}.{}", self.block, label),
            bn_rows: if kind == StageKind::Bn { self.rows } else { 0 },
        });
    }
}

/// Forward pass: Q/K/V linears, spiking attention, Z, A and B linears.
pub fn build_fp_stages(cfg: &ModelConfig, dims: &DerivedDims) -> StageGraph {
    let sh = Shapes::new(cfg, dims);
    let mut stages = Vec::new();
    for block in 0..cfg.blocks {
        let mut e = Emitter {
            out: &mut stages,
            phase: Phase::Fp,
            block,
            bits: sh.b,
            rows: sh.s,
        };
        let spike = SparsityBinding::Spike;
        for p in ["Q", "K", "V"] {
            e.mm(1, &format!("{p}.linear"), MmDims::new(sh.s, sh.d, sh.d), 1, 1, sh.b, spike);
            e.elementwise(1, StageKind::Bn, &format!("{p}.bn"), sh.s * sh.d);
            e.elementwise(1, StageKind::Soma, &format!("{p}.soma"), sh.s * sh.d);
        }
        // Q K^T is spike x spike; the score matrix then meets the V spikes.
        e.mm(2, "ssa.qk", MmDims::new(sh.n, sh.dh, sh.n), sh.heads_total, 1, 1, spike);
        e.mm(2, "ssa.av", MmDims::new(sh.n, sh.n, sh.dh), sh.heads_total, 1, sh.b, spike);
        e.elementwise(2, StageKind::Soma, "ssa.soma", sh.s * sh.d);

        e.mm(3, "Z.linear", MmDims::new(sh.s, sh.d, sh.d), 1, 1, sh.b, spike);
        e.elementwise(3, StageKind::Bn, "Z.bn", sh.s * sh.d);
        e.elementwise(3, StageKind::Res, "Z.res", sh.s * sh.d);
        e.elementwise(3, StageKind::Soma, "Z.soma", sh.s * sh.d);

        e.mm(4, "A.linear", MmDims::new(sh.s, sh.d, sh.hidden), 1, 1, sh.b, spike);
        e.elementwise(4, StageKind::Bn, "A.bn", sh.s * sh.hidden);
        e.elementwise(4, StageKind::Soma, "A.soma", sh.s * sh.hidden);

        e.mm(5, "B.linear", MmDims::new(sh.s, sh.hidden, sh.d), 1, 1, sh.b, spike);
        e.elementwise(5, StageKind::Bn, "B.bn", sh.s * sh.d);
        e.elementwise(5, StageKind::Res, "B.res", sh.s * sh.d);
        e.elementwise(5, StageKind::Soma, "B.soma", sh.s * sh.d);
    }
    StageGraph {
        phase: Phase::Fp,
        stages,
    }
}

/// Backward pass in thirteen numbered stages per block.
///
/// Linear-layer gradients multiply by the transposed forward weights and are
/// gated by the spike-gradient mask. The attention value gradient is formed
/// before the score gradient it feeds.
pub fn build_bp_stages(cfg: &ModelConfig, dims: &DerivedDims) -> StageGraph {
    let sh = Shapes::new(cfg, dims);
    let b = sh.b;
    let mask = SparsityBinding::SpikeGradMask;
    let dense = SparsityBinding::None;
    let mut stages = Vec::new();
    for block in (0..cfg.blocks).rev() {
        let mut e = Emitter {
            out: &mut stages,
            phase: Phase::Bp,
            block,
            bits: b,
            rows: sh.s,
        };
        e.elementwise(1, StageKind::Grad, "B.grad", sh.s * sh.d);
        e.elementwise(1, StageKind::Bn, "B.bn_bwd", sh.s * sh.d);
        e.mm(1, "dB.linear", MmDims::new(sh.s, sh.d, sh.hidden), 1, b, b, mask);

        e.elementwise(2, StageKind::Grad, "A.grad", sh.s * sh.hidden);

        e.elementwise(3, StageKind::Bn, "A.bn_bwd", sh.s * sh.hidden);
        e.mm(3, "dA.linear", MmDims::new(sh.s, sh.hidden, sh.d), 1, b, b, mask);
        e.elementwise(3, StageKind::Res, "mlp.res_merge", sh.s * sh.d);

        e.elementwise(4, StageKind::Grad, "Z.grad", sh.s * sh.d);

        e.elementwise(5, StageKind::Bn, "Z.bn_bwd", sh.s * sh.d);
        e.mm(5, "dZ.linear", MmDims::new(sh.s, sh.d, sh.d), 1, b, b, mask);

        e.elementwise(6, StageKind::Grad, "ssa.grad", sh.s * sh.d);

        let inst = sh.heads_total;
        e.mm(7, "ssa.dV", MmDims::new(sh.n, sh.n, sh.dh), inst, b, b, dense);
        e.mm(8, "ssa.dscores", MmDims::new(sh.n, sh.dh, sh.n), inst, b, b, dense);
        e.mm(9, "ssa.dQ", MmDims::new(sh.n, sh.n, sh.dh), inst, b, b, dense);
        e.mm(10, "ssa.dK", MmDims::new(sh.n, sh.n, sh.dh), inst, b, b, dense);

        for (group, p) in [(11u8, "Q"), (12, "K"), (13, "V")] {
            e.elementwise(group, StageKind::Grad, &format!("{p}.grad"), sh.s * sh.d);
            e.elementwise(group, StageKind::Bn, &format!("{p}.bn_bwd"), sh.s * sh.d);
            e.mm(group, &format!("d{p}.linear"), MmDims::new(sh.s, sh.d, sh.d), 1, b, b, mask);
        }
        // Three projection gradients plus the skip path meet at the block input.
        e.elementwise(13, StageKind::Res, "attn.res_merge", 3 * sh.s * sh.d);
    }
    StageGraph {
        phase: Phase::Bp,
        stages,
    }
}

/// Weight gradients: forward spikes (transposed) against backward gradients.
pub fn build_wg_stages(cfg: &ModelConfig, dims: &DerivedDims) -> StageGraph {
    let sh = Shapes::new(cfg, dims);
    let spike = SparsityBinding::Spike;
    let mut stages = Vec::new();
    for block in (0..cfg.blocks).rev() {
        let mut e = Emitter {
            out: &mut stages,
            phase: Phase::Wg,
            block,
            bits: sh.b,
            rows: sh.s,
        };
        e.mm(1, "W_B", MmDims::new(sh.hidden, sh.s, sh.d), 1, 1, sh.b, spike);
        e.mm(2, "W_A", MmDims::new(sh.d, sh.s, sh.hidden), 1, 1, sh.b, spike);
        e.mm(3, "W_O", MmDims::new(sh.d, sh.s, sh.d), 1, 1, sh.b, spike);
        for p in ["Q", "K", "V"] {
            e.mm(4, &format!("W_{p}"), MmDims::new(sh.d, sh.s, sh.d), 1, 1, sh.b, spike);
        }
    }
    StageGraph {
        phase: Phase::Wg,
        stages,
    }
}
