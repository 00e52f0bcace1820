//! Frame-level data shared by the grid backends, the pipeline, and I/O.

use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;

/// One LiDAR return. Intensity is carried through untouched when present.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Echo<S = f64> {
    pub position: Vec3<S>,
    pub intensity: Option<S>,
}

impl<S> Echo<S> {
    pub fn at(position: Vec3<S>) -> Self {
        Self {
            position,
            intensity: None,
        }
    }
}

/// One full sweep: every echo of the scan plus where the sensor sat, in the
/// same (ego) coordinate frame as the echoes.
#[derive(Clone, Debug)]
pub struct ScanFrame<S = f64> {
    /// Monotonically increasing across a sequence.
    pub scan_id: u64,
    /// Seconds.
    pub timestamp: f64,
    pub sensor_origin: Vec3<S>,
    pub echoes: Vec<Echo<S>>,
}

/// Motion state assigned to one echo.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Static,
    Dynamic,
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Label::Static => "static",
            Label::Dynamic => "dynamic",
        })
    }
}

impl std::str::FromStr for Label {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "static" => Ok(Label::Static),
            "dynamic" => Ok(Label::Dynamic),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

/// Per-echo diagnostics that are not labels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EchoFlags {
    /// Echo fell outside the configured grid bounds; labeled Static for lack
    /// of evidence.
    pub out_of_range: bool,
}

/// Counters and timing for one ingested scan.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameStats {
    /// Per-frame processing time (grid shift + ingest, no I/O). Filled by the
    /// pipeline; zero when a grid is driven directly.
    pub ingest_duration_ms: f64,
    pub dynamic_count: usize,
    pub static_count: usize,
    /// Cells newly shadowed by this scan.
    pub shadowed_cell_count: usize,
    /// Cells whose shadow a see-through ray cleared this scan.
    pub deshadowed_cell_count: usize,
    /// 2D cells whose committed range was reset this scan (always zero for
    /// the 3D backend).
    pub reset_cell_count: usize,
}

/// Labels and diagnostics for one scan, index-aligned with its echoes.
#[derive(Clone, Debug)]
pub struct LabeledFrame {
    pub scan_id: u64,
    pub labels: Vec<Label>,
    pub flags: Vec<EchoFlags>,
    pub stats: FrameStats,
}

impl LabeledFrame {
    pub fn dynamic_count(&self) -> usize {
        self.labels.iter().filter(|l| **l == Label::Dynamic).count()
    }
}
