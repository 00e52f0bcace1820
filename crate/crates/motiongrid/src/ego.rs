//! Ego-motion compensation. The sensor moves between scans; the grids store
//! world structure in sensor-relative coordinates, so each scan's state must
//! be re-expressed in the new sensor pose before the next scan is ingested.
//!
//! From one odometry sample (linear velocity `v`, angular velocity `w`, both
//! in the sensor frame) and the inter-scan time, [`build_transform`] produces
//! the rigid transform that maps *previous-scan* coordinates into the
//! *current* sensor frame — the inverse of the sensor's own displacement.
//! [`shift_grid_3d`] / [`shift_grid_2d`] then apply it to a grid by mapping
//! every stored cell's center and re-binning, merging cells that collide and
//! dropping cells that leave the bounds.

use serde::{Deserialize, Serialize};

use crate::error::TransformError;
use crate::geometry::{cell_center, world_to_cell, GridMode, Vec3};
use crate::grid2d::RangeGrid2D;
use crate::grid3d::OccupancyGrid3D;
use crate::scalar::GridScalar;

/// Sensor velocities at one instant: `v` linear (m/s), `w` angular (rad/s,
/// about x/y/z = roll/pitch/yaw), both expressed in the sensor frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdometrySample<S = f64> {
    pub timestamp: f64,
    pub v: Vec3<S>,
    pub w: Vec3<S>,
}

/// Rigid transform `p ↦ r·p + t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transform<S = f64> {
    pub r: [[S; 3]; 3],
    pub t: Vec3<S>,
}

pub(crate) fn mat_vec<S: GridScalar>(m: &[[S; 3]; 3], p: Vec3<S>) -> Vec3<S> {
    Vec3::new(
        m[0][0] * p.x + m[0][1] * p.y + m[0][2] * p.z,
        m[1][0] * p.x + m[1][1] * p.y + m[1][2] * p.z,
        m[2][0] * p.x + m[2][1] * p.y + m[2][2] * p.z,
    )
}

pub(crate) fn mat_mul<S: GridScalar>(a: &[[S; 3]; 3], b: &[[S; 3]; 3]) -> [[S; 3]; 3] {
    let mut out = [[S::zero(); 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub(crate) fn mat_transpose<S: GridScalar>(m: &[[S; 3]; 3]) -> [[S; 3]; 3] {
    let mut out = *m;
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = m[j][i];
        }
    }
    out
}

impl<S: GridScalar> Transform<S> {
    pub fn identity() -> Self {
        let mut r = [[S::zero(); 3]; 3];
        for (i, row) in r.iter_mut().enumerate() {
            row[i] = S::one();
        }
        Self {
            r,
            t: Vec3::zero(),
        }
    }

    pub fn apply(&self, p: Vec3<S>) -> Vec3<S> {
        mat_vec(&self.r, p) + self.t
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            r: mat_mul(&self.r, &other.r),
            t: mat_vec(&self.r, other.t) + self.t,
        }
    }

    /// True when `r` is orthonormal with determinant +1, within `tol` per
    /// matrix entry.
    pub fn is_rigid(&self, tol: f64) -> bool {
        let m: [[f64; 3]; 3] = self
            .r
            .map(|row| row.map(|v| v.to_f64_lossy()));
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| m[k][i] * m[k][j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot - want).abs() > tol {
                    return false;
                }
            }
        }
        let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        (det - 1.0).abs() <= tol && self.t.is_finite()
    }

    /// Rigidity check with a tolerance suited to `S`'s precision.
    pub fn validate(&self) -> Result<(), TransformError> {
        let tol = S::epsilon().to_f64_lossy().sqrt().max(1e-9);
        if self.is_rigid(tol) {
            Ok(())
        } else {
            Err(TransformError::NonRigid(format!(
                "rotation part is not orthonormal with det +1 (tolerance {tol:.1e})"
            )))
        }
    }
}

pub(crate) fn rot_xyz<S: GridScalar>(roll: S, pitch: S, yaw: S) -> [[S; 3]; 3] {
    let (sr, cr) = (roll.sin(), roll.cos());
    let (sp, cp) = (pitch.sin(), pitch.cos());
    let (sy, cy) = (yaw.sin(), yaw.cos());
    // Rz(yaw) · Ry(pitch) · Rx(roll)
    [
        [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
        [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
        [-sp, cp * sr, cp * cr],
    ]
}

/// Transform from previous-scan coordinates to the current sensor frame,
/// assuming constant velocities over the interval `dt` (seconds).
///
/// The sensor itself rotates by `w·dt` (applied yaw over pitch over roll)
/// and moves by `v·dt`; stored content must move the opposite way, so the
/// result is the inverse: `r = ΔRᵀ`, `t = −ΔRᵀ·(v·dt)`. Zero velocities give
/// the identity.
pub fn build_transform<S: GridScalar>(
    odo: &OdometrySample<S>,
    dt: f64,
) -> Result<Transform<S>, TransformError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(TransformError::InvalidDt(dt));
    }
    let dt_s = S::from_f64_const(dt);
    let delta_r = rot_xyz(odo.w.x * dt_s, odo.w.y * dt_s, odo.w.z * dt_s);
    let r = mat_transpose(&delta_r);
    let t = -mat_vec(&r, odo.v * dt_s);
    Ok(Transform { r, t })
}

/// Apply `tf` to a point.
pub fn apply_transform<S: GridScalar>(tf: &Transform<S>, p: Vec3<S>) -> Vec3<S> {
    tf.apply(p)
}

/// Re-express a 3D grid's state in the pose implied by `tf`: every live
/// cell's center is transformed and the cell re-binned there. Cells landing
/// on the same target merge (flags OR, newest scan wins); cells leaving the
/// bounds are dropped — structure behind the sensor scrolls out of memory.
pub fn shift_grid_3d<S: GridScalar>(
    grid: &mut OccupancyGrid3D<S>,
    tf: &Transform<S>,
) -> Result<(), TransformError> {
    tf.validate()?;
    let cfg = grid.cfg().clone();
    for (idx, cell) in grid.drain_cells() {
        let p = tf.apply(cell_center(idx, &cfg));
        if let Some(target) = world_to_cell(p, &cfg) {
            grid.merge_cell(target, cell);
        }
    }
    Ok(())
}

/// Roll or pitch (radians) above which the planar approximation in
/// [`shift_grid_2d`] is logged as degraded.
pub const PLANAR_TILT_WARN_RAD: f64 = 0.01;

/// Re-express a 2D grid's state in the pose implied by `tf`.
///
/// The 2D grid has no vertical cell structure, so only the planar part of
/// the motion can be applied exactly: cell centers move by the transform's
/// yaw and x/y translation, and every stored z-range is offset by the
/// transform's z translation. Roll or pitch beyond
/// [`PLANAR_TILT_WARN_RAD`] cannot be represented — the shift still runs,
/// with a warning, but vertical ranges will smear.
pub fn shift_grid_2d<S: GridScalar>(
    grid: &mut RangeGrid2D<S>,
    tf: &Transform<S>,
) -> Result<(), TransformError> {
    tf.validate()?;
    debug_assert_eq!(grid.cfg().mode(), GridMode::Grid2D);

    // tf.r is the transposed forward rotation, so the forward Euler angles
    // read off its rows/columns transposed.
    let fwd_r10 = tf.r[0][1].to_f64_lossy();
    let fwd_r00 = tf.r[0][0].to_f64_lossy();
    let fwd_r20 = tf.r[0][2].to_f64_lossy();
    let fwd_r21 = tf.r[1][2].to_f64_lossy();
    let fwd_r22 = tf.r[2][2].to_f64_lossy();
    let yaw = fwd_r10.atan2(fwd_r00);
    let pitch = (-fwd_r20.clamp(-1.0, 1.0)).asin();
    let roll = fwd_r21.atan2(fwd_r22);
    if roll.abs() > PLANAR_TILT_WARN_RAD || pitch.abs() > PLANAR_TILT_WARN_RAD {
        log::warn!(
            "2D grid shift ignores out-of-plane rotation (roll {roll:.4} rad, \
             pitch {pitch:.4} rad); stored height ranges will degrade"
        );
    }

    // Planar inverse rotation by -yaw plus the in-plane translation.
    let (s, c) = {
        let (s, c) = yaw.sin_cos();
        (S::from_f64_const(s), S::from_f64_const(c))
    };
    let cfg = grid.cfg().clone();
    let dz = tf.t.z;
    for (idx, mut cell) in grid.drain_cells() {
        let p = cell_center(idx, &cfg);
        let x = c * p.x + s * p.y + tf.t.x;
        let y = -s * p.x + c * p.y + tf.t.y;
        if let Some(target) = world_to_cell(Vec3::new(x, y, p.z), &cfg) {
            cell.committed_range = cell.committed_range.map(|r| r.offset(dz));
            cell.current_range = cell.current_range.map(|r| r.offset(dz));
            grid.merge_cell(target, cell);
        }
    }
    Ok(())
}
