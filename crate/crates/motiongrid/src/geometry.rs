//! Grid geometry: configuration, world↔cell index mapping, and fast voxel
//! traversal.
//!
//! Everything in this module is a pure function of its inputs and safe to
//! call concurrently.

use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::PipelineError;
use crate::scalar::GridScalar;

/// Point or displacement in meters. `S` is the scalar type, `f64` by default.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec3<S = f64> {
    pub x: S,
    pub y: S,
    pub z: S,
}

impl<S: GridScalar> Vec3<S> {
    pub fn new(x: S, y: S, z: S) -> Self {
        Self { x, y, z }
    }

    pub fn zero() -> Self {
        Self::new(S::zero(), S::zero(), S::zero())
    }

    /// Component by axis number: 0 → x, 1 → y, 2 → z.
    pub fn axis(&self, a: usize) -> S {
        match a {
            0 => self.x,
            1 => self.y,
            2 => self.z,
            _ => panic!("axis index {a} out of range"),
        }
    }

    pub fn set_axis(&mut self, a: usize, v: S) {
        match a {
            0 => self.x = v,
            1 => self.y = v,
            2 => self.z = v,
            _ => panic!("axis index {a} out of range"),
        }
    }

    pub fn dot(self, o: Self) -> S {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm_squared(self) -> S {
        self.dot(self)
    }

    pub fn norm(self) -> S {
        self.norm_squared().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [S; 3] {
        [self.x, self.y, self.z]
    }
}

impl<S: GridScalar> From<[S; 3]> for Vec3<S> {
    fn from(a: [S; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

impl<S: GridScalar> Add for Vec3<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<S: GridScalar> Sub for Vec3<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<S: GridScalar> Neg for Vec3<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl<S: GridScalar> Mul<S> for Vec3<S> {
    type Output = Self;
    fn mul(self, s: S) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<S: GridScalar> Div<S> for Vec3<S> {
    type Output = Self;
    fn div(self, s: S) -> Self {
        Self::new(self.x / s, self.y / s, self.z / s)
    }
}

/// Whether cells are binned in full 3D or collapsed onto the x/y plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GridMode {
    #[serde(rename = "3d")]
    Grid3D,
    #[serde(rename = "2d")]
    Grid2D,
}

impl std::fmt::Display for GridMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GridMode::Grid3D => "3d",
            GridMode::Grid2D => "2d",
        })
    }
}

impl std::str::FromStr for GridMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "3d" => Ok(GridMode::Grid3D),
            "2d" => Ok(GridMode::Grid2D),
            other => Err(format!("unknown grid mode {other:?} (expected 2d or 3d)")),
        }
    }
}

/// Axis-aligned grid extent and resolution. Validated on construction:
/// min < max per axis, positive cell side, at least one cell per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct GridConfig<S = f64> {
    min: Vec3<S>,
    max: Vec3<S>,
    side: S,
    mode: GridMode,
    cells: [usize; 3],
}

/// Cell count along one axis: ceil of the extent/side ratio, snapped to the
/// nearest integer when the ratio is within 1e-9 of it so that extents that
/// are exact multiples of the side in decimal (75 / 0.15 = 500) don't grow a
/// phantom cell from binary rounding.
fn axis_cells<S: GridScalar>(min: S, max: S, side: S) -> usize {
    let raw = ((max - min) / side).to_f64_lossy();
    let nearest = raw.round();
    let n = if (raw - nearest).abs() < 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        raw.ceil()
    };
    (n as usize).max(1)
}

impl<S: GridScalar> GridConfig<S> {
    pub fn new(
        min: Vec3<S>,
        max: Vec3<S>,
        side_length: S,
        mode: GridMode,
    ) -> Result<Self, PipelineError> {
        if !min.is_finite() || !max.is_finite() {
            return Err(PipelineError::InvalidConfig(
                "grid bounds must be finite".into(),
            ));
        }
        if !(side_length.is_finite() && side_length > S::zero()) {
            return Err(PipelineError::InvalidConfig(format!(
                "cell side length must be positive, got {side_length}"
            )));
        }
        for a in 0..3 {
            if !(min.axis(a) < max.axis(a)) {
                return Err(PipelineError::InvalidConfig(format!(
                    "grid bounds must satisfy min < max on axis {a}: {} vs {}",
                    min.axis(a),
                    max.axis(a)
                )));
            }
        }
        let cells = [
            axis_cells(min.x, max.x, side_length),
            axis_cells(min.y, max.y, side_length),
            axis_cells(min.z, max.z, side_length),
        ];
        Ok(Self {
            min,
            max,
            side: side_length,
            mode,
            cells,
        })
    }

    pub fn min(&self) -> Vec3<S> {
        self.min
    }

    pub fn max(&self) -> Vec3<S> {
        self.max
    }

    pub fn side_length(&self) -> S {
        self.side
    }

    pub fn mode(&self) -> GridMode {
        self.mode
    }

    /// Same extent and resolution, different binning mode.
    pub fn with_mode(&self, mode: GridMode) -> Self {
        let mut c = self.clone();
        c.mode = mode;
        c
    }

    pub fn cells_x(&self) -> usize {
        self.cells[0]
    }

    pub fn cells_y(&self) -> usize {
        self.cells[1]
    }

    /// Cell count derived from the z bounds; unused for binning in Grid2D
    /// mode where k is always zero.
    pub fn cells_z(&self) -> usize {
        self.cells[2]
    }

    pub fn cells(&self) -> [usize; 3] {
        self.cells
    }

    /// Number of axes that take part in binning and traversal.
    pub fn active_axes(&self) -> usize {
        match self.mode {
            GridMode::Grid3D => 3,
            GridMode::Grid2D => 2,
        }
    }

    /// Slots needed by a dense backing array.
    pub fn dense_len(&self) -> usize {
        match self.mode {
            GridMode::Grid3D => self.cells[0] * self.cells[1] * self.cells[2],
            GridMode::Grid2D => self.cells[0] * self.cells[1],
        }
    }

    /// Row-major slot for a dense backing array (x fastest, then y, then z).
    pub fn linear_index(&self, idx: CellIndex) -> usize {
        debug_assert!(idx.i < self.cells[0] && idx.j < self.cells[1]);
        (idx.k * self.cells[1] + idx.j) * self.cells[0] + idx.i
    }
}

/// Discrete cell address. `k` is always zero in Grid2D mode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellIndex {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

impl CellIndex {
    pub fn new(i: usize, j: usize, k: usize) -> Self {
        Self { i, j, k }
    }
}

/// Map a world point to its cell, or `None` when outside the grid.
///
/// Cells are half-open: a point exactly on a min boundary belongs to cell 0,
/// a point exactly on a max boundary is outside. In Grid2D mode only x and y
/// are considered and k is 0; z is ignored entirely, bounds included.
pub fn world_to_cell<S: GridScalar>(p: Vec3<S>, cfg: &GridConfig<S>) -> Option<CellIndex> {
    let mut idx = [0usize; 3];
    for a in 0..cfg.active_axes() {
        let lo = cfg.min.axis(a);
        let hi = cfg.max.axis(a);
        let v = p.axis(a);
        // Written so NaN fails the test and lands in the None arm.
        if !(v >= lo && v < hi) {
            return None;
        }
        let cell = ((v - lo) / cfg.side).floor().to_usize().unwrap_or(0);
        // Guard against the division landing exactly on cells[a] when v is a
        // hair under the max bound.
        idx[a] = cell.min(cfg.cells[a] - 1);
    }
    Some(CellIndex::new(idx[0], idx[1], idx[2]))
}

/// World position of a cell's center: min + (index + ½)·side per axis.
pub fn cell_center<S: GridScalar>(idx: CellIndex, cfg: &GridConfig<S>) -> Vec3<S> {
    let half = S::from_f64_const(0.5);
    let at = |i: usize, a: usize| cfg.min.axis(a) + (S::from_usize(i).unwrap() + half) * cfg.side;
    Vec3::new(at(idx.i, 0), at(idx.j, 1), at(idx.k, 2))
}

/// One traversed cell with the parametric interval the segment spends in it.
/// `t` is normalized to the *unclipped* segment: origin at 0, endpoint at 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayStep<S = f64> {
    pub cell: CellIndex,
    pub t_entry: S,
    pub t_exit: S,
}

/// Amanatides-Woo DDA state. Produced by [`traverse_ray`].
#[derive(Clone, Debug)]
pub struct RayTraversal<S = f64> {
    idx: [i64; 3],
    step: [i64; 3],
    t_max: [S; 3],
    t_delta: [S; 3],
    cells: [i64; 3],
    t_cur: S,
    t_end: S,
    emitted: usize,
    cap: usize,
    done: bool,
}

impl<S: GridScalar> RayTraversal<S> {
    fn empty() -> Self {
        Self {
            idx: [0; 3],
            step: [0; 3],
            t_max: [S::infinity(); 3],
            t_delta: [S::infinity(); 3],
            cells: [1; 3],
            t_cur: S::zero(),
            t_end: S::zero(),
            emitted: 0,
            cap: 0,
            done: true,
        }
    }
}

/// Walk the segment from `origin` to `endpoint` through the grid, yielding
/// every cell it passes through in order. The segment is clipped to the grid
/// bounds first (parametric Liang-Barsky style), so the origin may lie
/// outside; a segment that misses the grid yields nothing.
///
/// Consecutive cells are face-adjacent. When the segment passes exactly
/// through a cell edge or corner, the axis with the smaller index advances
/// first, which keeps the output deterministic. An endpoint exactly on an
/// interior cell boundary belongs to the higher cell (same half-open
/// convention as [`world_to_cell`]) and that cell is included.
///
/// In Grid2D mode the walk runs over x/y only with k pinned to 0; the z
/// components still shape `t`, so callers can interpolate z per step.
pub fn traverse_ray<S: GridScalar>(
    origin: Vec3<S>,
    endpoint: Vec3<S>,
    cfg: &GridConfig<S>,
) -> RayTraversal<S> {
    if !origin.is_finite() || !endpoint.is_finite() {
        return RayTraversal::empty();
    }
    let axes = cfg.active_axes();
    let d = endpoint - origin;

    // Clip [0,1] to the in-grid parameter range.
    let mut t0 = S::zero();
    let mut t1 = S::one();
    for a in 0..axes {
        let o = origin.axis(a);
        let dir = d.axis(a);
        let lo = cfg.min.axis(a);
        let hi = cfg.max.axis(a);
        if dir == S::zero() {
            if !(o >= lo && o < hi) {
                return RayTraversal::empty();
            }
        } else {
            let ta = (lo - o) / dir;
            let tb = (hi - o) / dir;
            let (tn, tf) = if ta <= tb { (ta, tb) } else { (tb, ta) };
            if tn > t0 {
                t0 = tn;
            }
            if tf < t1 {
                t1 = tf;
            }
            if t0 > t1 {
                return RayTraversal::empty();
            }
        }
    }

    let p0 = origin + d * t0;
    let side = cfg.side;
    let mut idx = [0i64; 3];
    let mut stepv = [0i64; 3];
    let mut t_max = [S::infinity(); 3];
    let mut t_delta = [S::infinity(); 3];
    let mut cells = [1i64; 3];
    for a in 0..axes {
        let lo = cfg.min.axis(a);
        let n = cfg.cells[a] as i64;
        cells[a] = n;
        // Clamp covers the clipped start sitting exactly on the grid max
        // face while heading inward.
        let raw = ((p0.axis(a) - lo) / side).floor().to_i64().unwrap_or(0);
        idx[a] = raw.clamp(0, n - 1);
        let dir = d.axis(a);
        if dir != S::zero() {
            stepv[a] = if dir > S::zero() { 1 } else { -1 };
            let next = if dir > S::zero() { idx[a] + 1 } else { idx[a] };
            let boundary = lo + S::from_i64(next).unwrap() * side;
            let tm = (boundary - origin.axis(a)) / dir;
            t_max[a] = if tm < t0 { t0 } else { tm };
            t_delta[a] = side / dir.abs();
        }
    }
    let cap = (cells[0] + cells[1] + cells[2]) as usize;
    RayTraversal {
        idx,
        step: stepv,
        t_max,
        t_delta,
        cells,
        t_cur: t0,
        t_end: t1,
        emitted: 0,
        cap,
        done: false,
    }
}

impl<S: GridScalar> Iterator for RayTraversal<S> {
    type Item = RayStep<S>;

    fn next(&mut self) -> Option<RayStep<S>> {
        if self.done {
            return None;
        }
        // Axis whose boundary comes next; ties go to the smaller axis index.
        let mut axis = 0usize;
        for a in 1..3 {
            if self.t_max[a] < self.t_max[axis] {
                axis = a;
            }
        }
        let t_exit = if self.t_max[axis] < self.t_end {
            self.t_max[axis]
        } else {
            self.t_end
        };
        let out = RayStep {
            cell: CellIndex::new(self.idx[0] as usize, self.idx[1] as usize, self.idx[2] as usize),
            t_entry: self.t_cur,
            t_exit,
        };
        self.emitted += 1;
        // Step while t_max ≤ t_end (not <): an endpoint exactly on a cell
        // boundary belongs to the next cell, which must still be yielded.
        if self.emitted >= self.cap || self.t_max[axis] > self.t_end {
            self.done = true;
        } else {
            let next = self.idx[axis] + self.step[axis];
            if next < 0 || next >= self.cells[axis] {
                self.done = true;
            } else {
                self.idx[axis] = next;
                self.t_cur = self.t_max[axis];
                self.t_max[axis] = self.t_max[axis] + self.t_delta[axis];
            }
        }
        Some(out)
    }
}
