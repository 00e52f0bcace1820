//! Helpers shared by the integration suites: scripted-frame construction,
//! an independent dense-sampling traversal oracle, small rotation-matrix
//! builders, and the pass/fail reporting used by the acceptance gate.
//!
//! Everything here is deliberately written from first principles rather than
//! calling back into the crate's own traversal or transform code, so that a
//! bug in the implementation cannot hide inside its own oracle.
#![allow(dead_code)]

use std::sync::{Mutex, MutexGuard};

use motiongrid::{world_to_cell, CellIndex, Echo, GridConfig, GridMode, ScanFrame, Vec3};

// ---------------------------------------------------------------------------
// Frame construction
// ---------------------------------------------------------------------------

pub fn echoes(points: &[[f64; 3]]) -> Vec<Echo> {
    points
        .iter()
        .map(|p| Echo {
            position: Vec3::new(p[0], p[1], p[2]),
            intensity: None,
        })
        .collect()
}

pub fn frame(scan_id: u64, timestamp: f64, origin: [f64; 3], points: &[[f64; 3]]) -> ScanFrame {
    ScanFrame {
        scan_id,
        timestamp,
        sensor_origin: Vec3::new(origin[0], origin[1], origin[2]),
        echoes: echoes(points),
    }
}

// ---------------------------------------------------------------------------
// Traversal oracle: dense point sampling with bisection refinement
// ---------------------------------------------------------------------------
// A straight segment is monotone per axis, so two consecutive samples whose
// cells differ by one step on one axis bound no third cell; any larger jump
// is bisected until only such transitions remain. Corner transits (two
// boundaries crossed at one parameter value) have measure zero and the
// random segments fed to this oracle avoid them.

fn manhattan(a: CellIndex, b: CellIndex) -> i64 {
    (a.i as i64 - b.i as i64).abs()
        + (a.j as i64 - b.j as i64).abs()
        + (a.k as i64 - b.k as i64).abs()
}

fn expand(
    t_a: f64,
    c_a: CellIndex,
    t_b: f64,
    c_b: CellIndex,
    point: &dyn Fn(f64) -> Vec3,
    cfg: &GridConfig,
    out: &mut Vec<CellIndex>,
) {
    if c_a == c_b {
        return;
    }
    if manhattan(c_a, c_b) == 1 || (t_b - t_a) < 1e-14 {
        if out.last() != Some(&c_b) {
            out.push(c_b);
        }
        return;
    }
    let tm = 0.5 * (t_a + t_b);
    match world_to_cell(point(tm), cfg) {
        Some(cm) => {
            expand(t_a, c_a, tm, cm, point, cfg, out);
            expand(tm, cm, t_b, c_b, point, cfg, out);
        }
        // Mid-sample outside the grid can only happen on a boundary graze,
        // which the callers avoid; keep the far cell.
        None => {
            if out.last() != Some(&c_b) {
                out.push(c_b);
            }
        }
    }
}

/// Every cell the segment `origin → endpoint` passes through, in order,
/// found by sampling at `step_len` spacing and refining transitions.
pub fn sampled_cells(
    origin: Vec3,
    endpoint: Vec3,
    cfg: &GridConfig,
    step_len: f64,
) -> Vec<CellIndex> {
    let d = endpoint - origin;
    let point = move |t: f64| origin + d * t;
    let n = ((d.norm() / step_len).ceil() as usize).max(1);
    let mut ts: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();

    // Clip the segment against the grid box analytically and add samples
    // inside the clipped window, so a corner transit shorter than the
    // sampling step still anchors the refinement below. Axes the binning
    // ignores (z in planar mode) are exempt from clipping.
    let o = [origin.x, origin.y, origin.z];
    let dd = [d.x, d.y, d.z];
    let lo = [cfg.min().x, cfg.min().y, cfg.min().z];
    let hi = [cfg.max().x, cfg.max().y, cfg.max().z];
    let clipped_axes = if cfg.mode() == GridMode::Grid2D { 2 } else { 3 };
    let (mut t0, mut t1) = (0.0_f64, 1.0_f64);
    for a in 0..clipped_axes {
        if dd[a] == 0.0 {
            if !(o[a] >= lo[a] && o[a] < hi[a]) {
                t1 = -1.0;
            }
        } else {
            let (ta, tb) = ((lo[a] - o[a]) / dd[a], (hi[a] - o[a]) / dd[a]);
            t0 = t0.max(ta.min(tb));
            t1 = t1.min(ta.max(tb));
        }
    }
    if t0 < t1 {
        for k in 1..8 {
            ts.push(t0 + (t1 - t0) * k as f64 / 8.0);
        }
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }

    let samples: Vec<(f64, Option<CellIndex>)> = ts
        .iter()
        .map(|&t| (t, world_to_cell(point(t), cfg)))
        .collect();
    let Some(first) = samples.iter().position(|(_, c)| c.is_some()) else {
        return vec![];
    };
    let last = samples.iter().rposition(|(_, c)| c.is_some()).unwrap();

    // The in-grid samples form one contiguous run (the grid is convex);
    // tighten the entry and exit parameters by bisection so cells crossed
    // before the first and after the last in-grid sample are found too.
    let mut seq: Vec<(f64, CellIndex)> = Vec::new();
    if first > 0 {
        let (mut lo, mut hi) = (samples[first - 1].0, samples[first].0);
        for _ in 0..80 {
            let tm = 0.5 * (lo + hi);
            if world_to_cell(point(tm), cfg).is_some() {
                hi = tm;
            } else {
                lo = tm;
            }
        }
        seq.push((hi, world_to_cell(point(hi), cfg).unwrap()));
    }
    for s in &samples[first..=last] {
        seq.push((s.0, s.1.unwrap()));
    }
    if last + 1 < samples.len() {
        let (mut lo, mut hi) = (samples[last].0, samples[last + 1].0);
        for _ in 0..80 {
            let tm = 0.5 * (lo + hi);
            if world_to_cell(point(tm), cfg).is_some() {
                lo = tm;
            } else {
                hi = tm;
            }
        }
        seq.push((lo, world_to_cell(point(lo), cfg).unwrap()));
    }

    let mut out = vec![seq[0].1];
    for w in seq.windows(2) {
        expand(w[0].0, w[0].1, w[1].0, w[1].1, &point, cfg, &mut out);
    }
    out
}

// ---------------------------------------------------------------------------
// Rotation matrices (independent of the crate's transform construction)
// ---------------------------------------------------------------------------

pub type Mat3 = [[f64; 3]; 3];

pub fn rot_x(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

pub fn rot_y(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

pub fn rot_z(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn mat_vec(m: &Mat3, p: Vec3) -> Vec3 {
    Vec3::new(
        m[0][0] * p.x + m[0][1] * p.y + m[0][2] * p.z,
        m[1][0] * p.x + m[1][1] * p.y + m[1][2] * p.z,
        m[2][0] * p.x + m[2][1] * p.y + m[2][2] * p.z,
    )
}

/// Rigid rotation from three Euler angles, composed z·y·x.
pub fn euler_zyx(roll: f64, pitch: f64, yaw: f64) -> Mat3 {
    mat_mul(&rot_z(yaw), &mat_mul(&rot_y(pitch), &rot_x(roll)))
}

// ---------------------------------------------------------------------------
// Acceptance reporting
// ---------------------------------------------------------------------------

/// Run one acceptance criterion, print exactly one `[PASS]`/`[FAIL]` line
/// for it, and propagate a failure to the test harness.
pub fn criterion(name: &str, body: impl FnOnce() -> Result<(), String>) {
    let result = body();
    match &result {
        Ok(()) => println!("[PASS] {name}"),
        Err(why) => println!("[FAIL] {name}: {why}"),
    }
    if let Err(why) = result {
        panic!("{name}: {why}");
    }
}

pub fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

/// Criteria share grids, timers, and a fair amount of CPU; running them one
/// at a time keeps the timing criterion honest regardless of the harness's
/// thread count.
pub fn serial() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(std::sync::PoisonError::into_inner)
}
