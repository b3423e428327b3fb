//! Dataflows and the tiling of MM stages onto the systolic array.
//!
//! Each MM stage is `rows x reduction x cols` in its own native orientation
//! (`b`, `c`, `k` of [`MmDims`]). A stationarity pins one operand in the PEs:
//!
//! | stationarity | spatial (D1, D2)    | streamed  |
//! |--------------|---------------------|-----------|
//! | IS           | rows, reduction     | cols      |
//! | WS           | reduction, cols     | rows      |
//! | OS           | rows, cols          | reduction |
//!
//! The phase-labelled pairs returned by [`spatial_assignment`] name the same
//! choice in the B/C/K vocabulary of the forward layer a stage belongs to.
//!
//! The outer dimension of a dataflow is the tile loop walked contiguously.
//! When it coincides with the streamed axis, each spatial tile receives its
//! full stream in one visit. Otherwise the stream is consumed in chunks of at
//! most `stream_depth`, and every spatial tile is revisited once per chunk.
//! Input- and weight-stationary tiles that split the reduction across array
//! passes also spill partial sums to an accumulator of `accumulator_depth`
//! entries per column, forcing extra visits when the stream exceeds it.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

use crate::model::ConfigError;
use crate::workload::{MmDims, Phase, StageSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error("stage {0} is element-wise and bypasses the array")]
    NotMatmul(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrayConfig {
    pub rows: u64,
    pub cols: u64,
    pub freq_hz: f64,
    /// Longest stream a spatial tile accepts per visit when the outer loop
    /// does not walk the streamed axis. Zero means unbounded.
    pub stream_depth: u64,
    /// Partial-sum entries per column for IS/WS reduction spills. Zero means
    /// unbounded.
    pub accumulator_depth: u64,
    /// Element-wise lanes; defaults to the array column count.
    pub elementwise_lanes: Option<u64>,
    /// Run BN and SOMA/GRAD/RES units concurrently with the MM array.
    pub overlap_elementwise: bool,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        ArrayConfig {
            rows: 64,
            cols: 64,
            freq_hz: 500e6,
            stream_depth: 256,
            accumulator_depth: 256,
            elementwise_lanes: None,
            overlap_elementwise: true,
        }
    }
}

impl ArrayConfig {
    /// Plain array with unbounded stream and accumulator depths.
    pub fn unbounded(rows: u64, cols: u64) -> Self {
        ArrayConfig {
            rows,
            cols,
            stream_depth: 0,
            accumulator_depth: 0,
            ..ArrayConfig::default()
        }
    }

    pub fn lanes(&self) -> u64 {
        self.elementwise_lanes.unwrap_or(self.cols)
    }

    /// Peak operations per second, counting a MAC as two.
    pub fn peak_ops(&self) -> f64 {
        2.0 * (self.rows * self.cols) as f64 * self.freq_hz
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.rows == 0 {
            return Err(ConfigError::invalid("array.rows", "must be >= 1"));
        }
        if self.cols == 0 {
            return Err(ConfigError::invalid("array.cols", "must be >= 1"));
        }
        if !(self.freq_hz.is_finite() && self.freq_hz > 0.0) {
            return Err(ConfigError::invalid("array.freq_hz", "must be finite and > 0"));
        }
        if self.elementwise_lanes == Some(0) {
            return Err(ConfigError::invalid("array.elementwise_lanes", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stationarity {
    #[serde(rename = "IS")]
    Is,
    #[serde(rename = "WS")]
    Ws,
    #[serde(rename = "OS")]
    Os,
}

impl Stationarity {
    pub const ALL: [Stationarity; 3] = [Stationarity::Is, Stationarity::Ws, Stationarity::Os];

    pub fn as_str(self) -> &'static str {
        match self {
            Stationarity::Is => "IS",
            Stationarity::Ws => "WS",
            Stationarity::Os => "OS",
        }
    }

    /// Native axes held spatially, then the streamed one.
    pub fn native_layout(self) -> (Axis, Axis, Axis) {
        match self {
            Stationarity::Is => (Axis::Rows, Axis::Reduction, Axis::Cols),
            Stationarity::Ws => (Axis::Reduction, Axis::Cols, Axis::Rows),
            Stationarity::Os => (Axis::Rows, Axis::Cols, Axis::Reduction),
        }
    }
}

/// B/C/K dimension labels of a matrix multiply `(B, C) x (C, K)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LoopDim {
    B,
    C,
    K,
}

impl LoopDim {
    pub const ALL: [LoopDim; 3] = [LoopDim::B, LoopDim::C, LoopDim::K];

    pub fn as_str(self) -> &'static str {
        match self {
            LoopDim::B => "B",
            LoopDim::C => "C",
            LoopDim::K => "K",
        }
    }

    /// Axis of a stage's own product that a dataflow's outer dimension walks.
    pub fn native(self) -> Axis {
        match self {
            LoopDim::B => Axis::Rows,
            LoopDim::C => Axis::Reduction,
            LoopDim::K => Axis::Cols,
        }
    }
}

/// Roles of a stage's own product: output rows, shared extent, output cols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Rows,
    Reduction,
    Cols,
}

impl Axis {
    pub fn extent(self, d: &MmDims) -> u64 {
        match self {
            Axis::Rows => d.b,
            Axis::Reduction => d.c,
            Axis::Cols => d.k,
        }
    }
}

/// Native axis carrying a forward-layer label in the given phase.
///
/// BP computes `dX = dY W^T`: forward K becomes its reduction and forward C
/// its output columns. WG computes `dW = X^T dY`: forward C becomes its rows
/// and forward B its reduction.
pub fn label_axis(phase: Phase, dim: LoopDim) -> Axis {
    match (phase, dim) {
        (Phase::Fp, d) => d.native(),
        (Phase::Bp, LoopDim::B) => Axis::Rows,
        (Phase::Bp, LoopDim::C) => Axis::Cols,
        (Phase::Bp, LoopDim::K) => Axis::Reduction,
        (Phase::Wg, LoopDim::B) => Axis::Reduction,
        (Phase::Wg, LoopDim::C) => Axis::Rows,
        (Phase::Wg, LoopDim::K) => Axis::Cols,
    }
}

fn axis_label(phase: Phase, axis: Axis) -> LoopDim {
    *LoopDim::ALL
        .iter()
        .find(|&&d| label_axis(phase, d) == axis)
        .expect("label_axis is a bijection")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dataflow {
    pub stationarity: Stationarity,
    pub outer_dim: LoopDim,
}

impl Dataflow {
    pub fn new(stationarity: Stationarity, outer_dim: LoopDim) -> Self {
        Dataflow {
            stationarity,
            outer_dim,
        }
    }

    pub fn name(&self) -> String {
        format!("{}_{}", self.stationarity.as_str(), self.outer_dim.as_str())
    }

    pub fn parse(name: &str) -> Option<Dataflow> {
        enumerate_dataflows().into_iter().find(|d| d.name() == name)
    }
}

impl fmt::Display for Dataflow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

pub fn enumerate_dataflows() -> Vec<Dataflow> {
    Stationarity::ALL
        .iter()
        .flat_map(|&s| LoopDim::ALL.iter().map(move |&d| Dataflow::new(s, d)))
        .collect()
}

/// Spatially mapped dimensions `(D1, D2)` in the phase's forward-layer labels.
pub fn spatial_assignment(phase: Phase, st: Stationarity) -> (LoopDim, LoopDim) {
    let (a, b, _) = st.native_layout();
    (axis_label(phase, a), axis_label(phase, b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TilingPlan {
    pub label: String,
    pub phase: Phase,
    pub dataflow: Dataflow,
    pub dims: MmDims,
    pub instances: u64,
    /// Spatial dimensions in forward-layer labels.
    pub spatial_dims: (LoopDim, LoopDim),
    pub stream_dim: LoopDim,
    /// Native axes on array rows, array columns, and the stream.
    pub spatial_axes: (Axis, Axis),
    pub stream_axis: Axis,
    pub d1_extent: u64,
    pub d2_extent: u64,
    pub stream_extent: u64,
    pub tiles_row: u64,
    pub tiles_col: u64,
    /// Tile loop nest, outermost first; the last entry is walked contiguously.
    pub outer_order: [Axis; 3],
    /// Array passes per spatial tile.
    pub visits: u64,
}

impl TilingPlan {
    pub fn spatial_tiles(&self) -> u64 {
        self.tiles_row * self.tiles_col
    }

    /// Tile count along the spatial axis holding the reduction; 1 when the
    /// reduction streams.
    pub fn reduction_tiles(&self) -> u64 {
        if self.spatial_axes.0 == Axis::Reduction {
            self.tiles_row
        } else if self.spatial_axes.1 == Axis::Reduction {
            self.tiles_col
        } else {
            1
        }
    }

    /// Tile count along a native axis; the stream axis is untiled.
    pub fn tiles_along(&self, axis: Axis) -> u64 {
        if axis == self.spatial_axes.0 {
            self.tiles_row
        } else if axis == self.spatial_axes.1 {
            self.tiles_col
        } else {
            1
        }
    }

    pub fn macs(&self) -> u64 {
        self.dims.macs() * self.instances
    }
}

fn div_ceil_or_one(n: u64, d: u64) -> u64 {
    if d == 0 {
        1
    } else {
        n.div_ceil(d).max(1)
    }
}

pub fn map_stage(stage: &StageSpec, df: Dataflow, arr: &ArrayConfig) -> Result<TilingPlan, MapError> {
    let dims = stage
        .mm_dims()
        .ok_or_else(|| MapError::NotMatmul(stage.label.clone()))?;
    Ok(map_dims(&stage.label, stage.phase, dims, stage.instances, df, arr))
}

pub fn map_dims(
    label: &str,
    phase: Phase,
    dims: MmDims,
    instances: u64,
    df: Dataflow,
    arr: &ArrayConfig,
) -> TilingPlan {
    let (a1, a2, stream) = df.stationarity.native_layout();
    let (d1, d2, l) = (a1.extent(&dims), a2.extent(&dims), stream.extent(&dims));
    let tiles_row = d1.div_ceil(arr.rows).max(1);
    let tiles_col = d2.div_ceil(arr.cols).max(1);
    let walk = df.outer_dim.native();

    let reduction_tiles = match (a1, a2) {
        (Axis::Reduction, _) => tiles_row,
        (_, Axis::Reduction) => tiles_col,
        _ => 1,
    };
    let chunked = if walk == stream {
        1
    } else {
        div_ceil_or_one(l, arr.stream_depth)
    };
    let visits = match df.stationarity {
        Stationarity::Os => chunked,
        Stationarity::Is | Stationarity::Ws => {
            let spill = if reduction_tiles > 1 {
                div_ceil_or_one(l, arr.accumulator_depth)
            } else {
                1
            };
            spill.max(chunked)
        }
    };

    let mut outer_order = [a1, a2, stream];
    outer_order.sort_by_key(|&ax| (ax == walk, ax as u8));

    TilingPlan {
        label: label.to_string(),
        phase,
        dataflow: df,
        dims,
        instances,
        spatial_dims: spatial_assignment(phase, df.stationarity),
        stream_dim: axis_label(phase, stream),
        spatial_axes: (a1, a2),
        stream_axis: stream,
        d1_extent: d1,
        d2_extent: d2,
        stream_extent: l,
        tiles_row,
        tiles_col,
        outer_order,
        visits,
    }
}
