//! Real-time motion-state labeling for LiDAR point clouds on binary
//! occupancy grids.
//!
//! Each echo of a scan sequence is labeled `Static` or `Dynamic` from purely
//! geometric evidence: a grid cell that produces echoes now but produced
//! none in the previous scan is a new detection, and its echoes are dynamic.
//! Two grid backends implement this rule:
//!
//! - [`OccupancyGrid3D`]: voxels with per-cell shadowing (occluded cells are
//!   remembered so re-appearing structure stays static) and see-through
//!   de-shadowing (a ray passing through a shadowed cell proves its former
//!   occupant left).
//! - [`RangeGrid2D`]: a ground-plane grid storing one vertical `[low, high]`
//!   range per cell; a range extension flags dynamics, and see-through
//!   resizing resets ranges of cells whose occupant provably departed. This
//!   backend trades some fidelity for large runtime headroom.
//!
//! Ego motion is compensated by voxel shifting: the rigid transform built
//! from 6-DOF odometry is applied to cell centers, moving grid content
//! instead of re-transforming every point.
//!
//! Grid and transform types are generic over the scalar type (`f32` or
//! `f64`) via [`GridScalar`]; the unparameterized names default to `f64`,
//! which is what the CLI and the accuracy guarantees use.

pub mod cli;
pub mod ego;
pub mod error;
pub mod frame;
pub mod geometry;
pub mod grid2d;
pub mod grid3d;
pub mod io;
pub mod pipeline;
pub mod scalar;
mod storage;
pub mod synth;

pub use ego::{apply_transform, build_transform, shift_grid_2d, shift_grid_3d, OdometrySample, Transform};
pub use error::{DataError, PipelineError, TransformError};
pub use frame::{Echo, EchoFlags, FrameStats, Label, LabeledFrame, ScanFrame};
pub use geometry::{
    cell_center, traverse_ray, world_to_cell, CellIndex, GridConfig, GridMode, RayStep, Vec3,
};
pub use grid2d::{classify_echo_by_range, Cell2D, RangeGrid2D, ZRange};
pub use grid3d::{Cell3D, OccupancyGrid3D};
pub use pipeline::{benchmark, process_sequence, BenchReport, BenchRow, PipelineConfig};
pub use scalar::GridScalar;
pub use storage::Storage;
pub use synth::{
    evaluate, generate_scene, Actor, Box3, EchoTruth, GroundTruth, Metrics, SceneSpec, SensorSpec,
};
