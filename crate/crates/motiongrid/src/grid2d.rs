//! 2D ground-plane grid: echoes are binned by (x, y) only and each cell
//! stores the vertical range its echoes have covered. An echo outside a
//! cell's committed range extends it — a new detection — and is dynamic;
//! echoes inside the committed range (within a tolerance) are static. This
//! is the fast path: the cell count is independent of the z extent and
//! labeling is a pair of comparisons.
//!
//! Two mechanisms keep the ranges honest. Shadowing carries a cell's range
//! through occlusion just like the 3D grid carries occupancy. See-through
//! *resizing* resets a cell's committed range once a sensor ray crosses the
//! cell inside that range: the ray proves the vertical band is empty, so a
//! shorter object arriving later must not inherit the taller occupant's
//! range and silently pass as static.

use std::collections::HashSet;
use std::time::Instant;

use crate::error::PipelineError;
use crate::frame::{EchoFlags, FrameStats, Label, LabeledFrame, ScanFrame};
use crate::geometry::{traverse_ray, world_to_cell, CellIndex, GridConfig, GridMode};
use crate::scalar::GridScalar;
use crate::storage::{CellMap, Storage};

/// Closed vertical interval in meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZRange<S = f64> {
    pub z_low: S,
    pub z_high: S,
}

impl<S: GridScalar> ZRange<S> {
    pub fn new(z_low: S, z_high: S) -> Self {
        debug_assert!(z_low <= z_high);
        Self { z_low, z_high }
    }

    pub fn singleton(z: S) -> Self {
        Self { z_low: z, z_high: z }
    }

    pub fn union(self, o: Self) -> Self {
        Self {
            z_low: self.z_low.min(o.z_low),
            z_high: self.z_high.max(o.z_high),
        }
    }

    pub fn contains(&self, z: S, eps: S) -> bool {
        z >= self.z_low - eps && z <= self.z_high + eps
    }

    pub fn overlaps(&self, lo: S, hi: S) -> bool {
        lo <= self.z_high && hi >= self.z_low
    }

    pub fn offset(self, dz: S) -> Self {
        Self {
            z_low: self.z_low + dz,
            z_high: self.z_high + dz,
        }
    }
}

/// Per-cell state of the 2D grid.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Cell2D<S = f64> {
    /// Union of every observed range up to and including the previous scan;
    /// shrinks only through resizing.
    pub committed_range: Option<ZRange<S>>,
    /// Range of the scan currently being ingested; folded into
    /// `committed_range` when the scan completes.
    pub current_range: Option<ZRange<S>>,
    pub occupied_prev: bool,
    pub shadowed: bool,
}

/// Static iff the echo's z lies inside the cell's committed range, widened
/// by `eps` on both ends. Everything else — no committed range (a cell never
/// observed, or freshly reset) or a z outside it — extends the cell's
/// evidence and is dynamic.
pub fn classify_echo_by_range<S: GridScalar>(cell: &Cell2D<S>, echo_z: S, eps: S) -> Label {
    match &cell.committed_range {
        Some(r) if r.contains(echo_z, eps) => Label::Static,
        _ => Label::Dynamic,
    }
}

#[derive(Clone, Debug)]
pub struct RangeGrid2D<S = f64> {
    cfg: GridConfig<S>,
    cells: CellMap<Cell2D<S>>,
    current_scan: Option<u64>,
    eps: S,
    resize_enabled: bool,
    echo_cells: Vec<Option<CellIndex>>,
}

impl<S: GridScalar> RangeGrid2D<S> {
    pub fn new(cfg: GridConfig<S>, storage: Storage, eps: S) -> Result<Self, PipelineError> {
        if cfg.mode() != GridMode::Grid2D {
            return Err(PipelineError::InvalidConfig(
                "2D grid requires a Grid2D-mode config".into(),
            ));
        }
        if !(eps.is_finite() && eps >= S::zero()) {
            return Err(PipelineError::InvalidConfig(format!(
                "range tolerance must be non-negative, got {eps}"
            )));
        }
        let cells = CellMap::new(&cfg, storage.resolve(GridMode::Grid2D));
        Ok(Self {
            cfg,
            cells,
            current_scan: None,
            eps,
            resize_enabled: true,
            echo_cells: Vec::new(),
        })
    }

    pub fn cfg(&self) -> &GridConfig<S> {
        &self.cfg
    }

    pub fn eps(&self) -> S {
        self.eps
    }

    pub fn current_scan(&self) -> Option<u64> {
        self.current_scan
    }

    /// Disable or re-enable see-through resizing. Intended for experiments
    /// that isolate the mechanism; leave enabled in production.
    pub fn set_resize_enabled(&mut self, enabled: bool) {
        self.resize_enabled = enabled;
    }

    pub fn cell(&self, idx: CellIndex) -> Cell2D<S> {
        self.cells.get(idx)
    }

    pub fn iter_cells(&self) -> impl Iterator<Item = (CellIndex, Cell2D<S>)> + '_ {
        self.cells.iter_live()
    }

    /// Ingest one scan and label its echoes.
    ///
    /// Order within a scan: bin → label against the committed ranges →
    /// shadow newly empty cells → see-through resizing → commit the current
    /// ranges. Labels therefore always compare against the state the
    /// previous scan left behind.
    pub fn ingest_scan(&mut self, frame: &ScanFrame<S>) -> Result<LabeledFrame, PipelineError> {
        if let Some(last) = self.current_scan {
            if frame.scan_id <= last {
                return Err(PipelineError::ScanOrder {
                    last,
                    got: frame.scan_id,
                });
            }
        }
        let started = Instant::now();
        let first_scan = self.current_scan.is_none();

        // Bin and build the current ranges. Arrival clears a shadow; the
        // committed range was carried through it, so classification below
        // still compares against the pre-occlusion evidence.
        let mut echo_cells = std::mem::take(&mut self.echo_cells);
        echo_cells.clear();
        echo_cells.extend(
            frame
                .echoes
                .iter()
                .map(|e| world_to_cell(e.position, &self.cfg)),
        );
        for (echo, idx) in frame.echoes.iter().zip(echo_cells.iter()) {
            let Some(idx) = idx else { continue };
            let c = self.cells.entry(*idx);
            c.shadowed = false;
            let z = ZRange::singleton(echo.position.z);
            c.current_range = Some(match c.current_range {
                Some(r) => r.union(z),
                None => z,
            });
        }

        // Label.
        let mut labels = Vec::with_capacity(frame.echoes.len());
        let mut flags = vec![EchoFlags::default(); frame.echoes.len()];
        let mut dynamic_count = 0usize;
        for (n, (echo, idx)) in frame.echoes.iter().zip(echo_cells.iter()).enumerate() {
            let label = match idx {
                None => {
                    flags[n].out_of_range = true;
                    Label::Static
                }
                Some(_) if first_scan => Label::Static,
                Some(idx) => {
                    let c = self.cells.get(*idx);
                    classify_echo_by_range(&c, echo.position.z, self.eps)
                }
            };
            if label == Label::Dynamic {
                dynamic_count += 1;
            }
            labels.push(label);
        }

        // Shadow cells that were occupied and are now empty.
        let mut newly_shadowed = 0usize;
        self.cells.sweep(|_, c| {
            if c.occupied_prev && c.current_range.is_none() && !c.shadowed {
                c.shadowed = true;
                newly_shadowed += 1;
            }
            true
        });

        let reset_cells = if self.resize_enabled {
            self.resize_cells(frame, &echo_cells)
        } else {
            0
        };

        // Commit: fold this scan's evidence into the committed ranges and
        // roll the occupancy memory (shadow carries it, as in 3D).
        self.cells.sweep(|_, c| {
            if let Some(cur) = c.current_range {
                c.committed_range = Some(match c.committed_range {
                    Some(r) => r.union(cur),
                    None => cur,
                });
            }
            c.occupied_prev = c.current_range.is_some() || c.shadowed;
            c.current_range = None;
            c.occupied_prev || c.shadowed || c.committed_range.is_some()
        });

        self.current_scan = Some(frame.scan_id);
        self.echo_cells = echo_cells;

        let static_count = frame.echoes.len() - dynamic_count;
        Ok(LabeledFrame {
            scan_id: frame.scan_id,
            labels,
            flags,
            stats: FrameStats {
                ingest_duration_ms: started.elapsed().as_secs_f64() * 1e3,
                dynamic_count,
                static_count,
                shadowed_cell_count: newly_shadowed,
                deshadowed_cell_count: 0,
                reset_cell_count: reset_cells,
            },
        })
    }

    /// See-through resizing. A sensor-to-echo ray, projected onto the grid
    /// plane, crosses cells strictly before the echo's own; where the ray's
    /// interpolated z interval during the crossing overlaps a cell's
    /// committed range, the line of sight passes through the vertical band
    /// the former occupant filled — it left, so the committed range is
    /// replaced by this scan's evidence (or dropped) and the shadow cleared.
    /// A ray passing above or below the committed range proves nothing.
    /// Returns the number of distinct cells reset.
    ///
    /// This walk touches every ray every scan and dominates the 2D ingest
    /// cost, so dense storage gets a specialized planar walk; sparse storage
    /// keeps the generic traversal.
    fn resize_cells(&mut self, frame: &ScanFrame<S>, echo_cells: &[Option<CellIndex>]) -> usize {
        if let CellMap::Dense { dims, slots } = &mut self.cells {
            return resize_dense(&self.cfg, *dims, slots, frame, echo_cells);
        }
        let mut reset: HashSet<CellIndex> = HashSet::new();
        for (echo, target) in frame.echoes.iter().zip(echo_cells.iter()) {
            let origin = frame.sensor_origin;
            let dz = echo.position.z - origin.z;
            for step in traverse_ray(origin, echo.position, &self.cfg) {
                if Some(step.cell) == *target {
                    break;
                }
                let c = self.cells.get(step.cell);
                let Some(committed) = c.committed_range else {
                    continue;
                };
                let z_a = origin.z + dz * step.t_entry;
                let z_b = origin.z + dz * step.t_exit;
                let (lo, hi) = if z_a <= z_b { (z_a, z_b) } else { (z_b, z_a) };
                if committed.overlaps(lo, hi) && !reset.contains(&step.cell) {
                    let c = self.cells.entry(step.cell);
                    c.committed_range = c.current_range;
                    c.shadowed = false;
                    reset.insert(step.cell);
                }
            }
        }
        reset.len()
    }
}

/// Cells per tile edge in the dense resize walk's culling layer.
const TILE: usize = 8;

/// Specialized see-through resizing over dense storage. Behaves exactly like
/// the generic walk in [`RangeGrid2D::resize_cells`]; the speed comes from
/// two structural changes, neither of which alters which cells get reset:
///
/// * The planar DDA runs on a flat slot index stepped by ±1 / ±nx instead of
///   re-deriving and hashing a cell index per step, and reads cell state in
///   place instead of copying it out.
/// * Committed ranges are first unioned into per-tile z bands (TILE² cells
///   per tile, rebuilt from scratch each scan). A ray whose interpolated z
///   window cannot meet a tile's band skips the whole tile: the band is a
///   superset of every committed range inside, so no cell in it could have
///   been reset. Only tiles the window touches are walked cell by cell.
fn resize_dense<S: GridScalar>(
    cfg: &GridConfig<S>,
    dims: [usize; 3],
    slots: &mut [Cell2D<S>],
    frame: &ScanFrame<S>,
    echo_cells: &[Option<CellIndex>],
) -> usize {
    let origin = frame.sensor_origin;
    if !origin.is_finite() {
        return 0;
    }
    let (nx, ny) = (dims[0], dims[1]);
    let side = cfg.side_length();
    let (gmin, gmax) = (cfg.min(), cfg.max());
    let cap = {
        let c = cfg.cells();
        c[0] + c[1] + c[2]
    };

    // Tile bands: the union of committed ranges per tile, empty as
    // (+inf, -inf) so the overlap test below rejects without a branch.
    let (tnx, tny) = (nx.div_ceil(TILE), ny.div_ceil(TILE));
    let mut band_lo = vec![S::infinity(); tnx * tny];
    let mut band_hi = vec![S::neg_infinity(); tnx * tny];
    for j in 0..ny {
        let row = j * nx;
        let trow = (j / TILE) * tnx;
        for i in 0..nx {
            if let Some(r) = slots[row + i].committed_range {
                let t = trow + i / TILE;
                band_lo[t] = band_lo[t].min(r.z_low);
                band_hi[t] = band_hi[t].max(r.z_high);
            }
        }
    }

    let tile_side = side * S::from_usize(TILE).unwrap();
    let mut reset: HashSet<usize> = HashSet::new();

    for (echo, target) in frame.echoes.iter().zip(echo_cells.iter()) {
        let end = echo.position;
        if !end.is_finite() {
            continue;
        }
        let (dx, dy, dz) = (end.x - origin.x, end.y - origin.y, end.z - origin.z);

        // Clip the segment to the x/y bounds, parametric over [0, 1].
        let mut t0 = S::zero();
        let mut t1 = S::one();
        let clip = |o: S, dir: S, lo: S, hi: S, t0: &mut S, t1: &mut S| -> bool {
            if dir == S::zero() {
                return o >= lo && o < hi;
            }
            let (ta, tb) = ((lo - o) / dir, (hi - o) / dir);
            let (tn, tf) = if ta <= tb { (ta, tb) } else { (tb, ta) };
            if tn > *t0 {
                *t0 = tn;
            }
            if tf < *t1 {
                *t1 = tf;
            }
            *t0 <= *t1
        };
        if !(clip(origin.x, dx, gmin.x, gmax.x, &mut t0, &mut t1)
            && clip(origin.y, dy, gmin.y, gmax.y, &mut t0, &mut t1))
        {
            continue;
        }

        let target_flat: isize = match target {
            Some(c) => (c.j * nx + c.i) as isize,
            None => -1,
        };
        let target_tile: isize = match target {
            Some(c) => ((c.j / TILE) * tnx + c.i / TILE) as isize,
            None => -1,
        };

        // DDA state for one axis at one granularity.
        let axis_state = |p0: S, o: S, dir: S, lo: S, step_len: S, n: usize| -> (i64, i64, S, S) {
            let raw = ((p0 - lo) / step_len).floor().to_i64().unwrap_or(0);
            let idx = raw.clamp(0, n as i64 - 1);
            if dir == S::zero() {
                return (idx, 0, S::infinity(), S::infinity());
            }
            let next = if dir > S::zero() { idx + 1 } else { idx };
            let boundary = lo + S::from_i64(next).unwrap() * step_len;
            let tm = (boundary - o) / dir;
            let tm = if tm < t0 { t0 } else { tm };
            (idx, if dir > S::zero() { 1 } else { -1 }, tm, step_len / dir.abs())
        };

        let (px, py) = (origin.x + dx * t0, origin.y + dy * t0);
        let (mut ti, sti, mut t_tmax_x, t_tdelta_x) =
            axis_state(px, origin.x, dx, gmin.x, tile_side, tnx);
        let (mut tj, stj, mut t_tmax_y, t_tdelta_y) =
            axis_state(py, origin.y, dy, gmin.y, tile_side, tny);

        let mut t_tile = t0;
        let mut emitted = 0usize;
        let mut tiles_walked = 0usize;
        'tiles: loop {
            tiles_walked += 1;
            let tile_flat = tj as usize * tnx + ti as usize;
            let step_y = t_tmax_y < t_tmax_x;
            let t_next = if step_y { t_tmax_y } else { t_tmax_x };
            let t_tile_exit = if t_next < t1 { t_next } else { t1 };

            // The ray's z window across the whole tile crossing; a miss
            // against the tile band proves no cell inside can reset.
            let z_a = origin.z + dz * t_tile;
            let z_b = origin.z + dz * t_tile_exit;
            let (w_lo, w_hi) = if z_a <= z_b { (z_a, z_b) } else { (z_b, z_a) };
            if w_lo <= band_hi[tile_flat] && w_hi >= band_lo[tile_flat] {
                // Walk this tile's cells over [t_tile, t_tile_exit].
                let (cpx, cpy) = (origin.x + dx * t_tile, origin.y + dy * t_tile);
                let (i_lo, i_hi) = (ti as usize * TILE, (ti as usize * TILE + TILE - 1).min(nx - 1));
                let (j_lo, j_hi) = (tj as usize * TILE, (tj as usize * TILE + TILE - 1).min(ny - 1));
                let (ri, si, mut t_max_x, t_delta_x) =
                    axis_state(cpx, origin.x, dx, gmin.x, side, nx);
                let (rj, sj, mut t_max_y, t_delta_y) =
                    axis_state(cpy, origin.y, dy, gmin.y, side, ny);
                let mut i = ri.clamp(i_lo as i64, i_hi as i64);
                let mut j = rj.clamp(j_lo as i64, j_hi as i64);
                if i != ri && dx != S::zero() {
                    // Entry landed a float hair outside the tile; re-anchor
                    // the crossing time to the corrected cell.
                    let next = if dx > S::zero() { i + 1 } else { i };
                    let b = gmin.x + S::from_i64(next).unwrap() * side;
                    t_max_x = ((b - origin.x) / dx).max(t0);
                }
                if j != rj && dy != S::zero() {
                    let next = if dy > S::zero() { j + 1 } else { j };
                    let b = gmin.y + S::from_i64(next).unwrap() * side;
                    t_max_y = ((b - origin.y) / dy).max(t0);
                }
                let mut flat = j as usize * nx + i as usize;
                let mut t_cur = t_tile;
                loop {
                    if flat as isize == target_flat {
                        break 'tiles;
                    }
                    emitted += 1;
                    let cell_step_y = t_max_y < t_max_x;
                    let tm = if cell_step_y { t_max_y } else { t_max_x };
                    let t_exit = if tm < t1 { tm } else { t1 };
                    let c = &slots[flat];
                    if let Some(committed) = c.committed_range {
                        let z_a = origin.z + dz * t_cur;
                        let z_b = origin.z + dz * t_exit;
                        let (lo, hi) = if z_a <= z_b { (z_a, z_b) } else { (z_b, z_a) };
                        if committed.overlaps(lo, hi) && !reset.contains(&flat) {
                            let c = &mut slots[flat];
                            c.committed_range = c.current_range;
                            c.shadowed = false;
                            reset.insert(flat);
                        }
                    }
                    if emitted >= cap || tm > t1 {
                        break 'tiles;
                    }
                    if cell_step_y {
                        let next = j + sj;
                        if next < j_lo as i64 || next > j_hi as i64 {
                            break;
                        }
                        j = next;
                        flat = (flat as i64 + sj * nx as i64) as usize;
                        t_cur = t_max_y;
                        t_max_y = t_max_y + t_delta_y;
                    } else {
                        let next = i + si;
                        if next < i_lo as i64 || next > i_hi as i64 {
                            break;
                        }
                        i = next;
                        flat = (flat as i64 + si) as usize;
                        t_cur = t_max_x;
                        t_max_x = t_max_x + t_delta_x;
                    }
                }
            }

            // Advance to the next tile.
            if tile_flat as isize == target_tile
                || tiles_walked >= tnx + tny + 1
                || t_next > t1
            {
                break;
            }
            if step_y {
                let next = tj + stj;
                if next < 0 || next >= tny as i64 {
                    break;
                }
                tj = next;
                t_tile = t_tmax_y;
                t_tmax_y = t_tmax_y + t_tdelta_y;
            } else {
                let next = ti + sti;
                if next < 0 || next >= tnx as i64 {
                    break;
                }
                ti = next;
                t_tile = t_tmax_x;
                t_tmax_x = t_tmax_x + t_tdelta_x;
            }
        }
    }
    reset.len()
}

// Shift support for the ego-motion module.
impl<S: GridScalar> RangeGrid2D<S> {
    pub(crate) fn drain_cells(&mut self) -> Vec<(CellIndex, Cell2D<S>)> {
        self.cells.drain_live()
    }

    pub(crate) fn merge_cell(&mut self, idx: CellIndex, incoming: Cell2D<S>) {
        fn union_opt<S: GridScalar>(
            a: Option<ZRange<S>>,
            b: Option<ZRange<S>>,
        ) -> Option<ZRange<S>> {
            match (a, b) {
                (Some(x), Some(y)) => Some(x.union(y)),
                (x, None) => x,
                (None, y) => y,
            }
        }
        let c = self.cells.entry(idx);
        c.committed_range = union_opt(c.committed_range, incoming.committed_range);
        c.current_range = union_opt(c.current_range, incoming.current_range);
        c.occupied_prev |= incoming.occupied_prev;
        c.shadowed |= incoming.shadowed;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Echo;
    use crate::geometry::Vec3;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const EPS: f64 = 0.05;

    fn grid_cfg(nx: usize, ny: usize) -> GridConfig {
        GridConfig::new(
            Vec3::new(0.0, 0.0, -3.0),
            Vec3::new(nx as f64, ny as f64, 5.0),
            1.0,
            GridMode::Grid2D,
        )
        .unwrap()
    }

    fn grid(nx: usize, ny: usize) -> RangeGrid2D {
        RangeGrid2D::new(grid_cfg(nx, ny), Storage::Auto, EPS).unwrap()
    }

    fn frame(scan_id: u64, sensor: Vec3, points: &[(f64, f64, f64)]) -> ScanFrame {
        ScanFrame {
            scan_id,
            timestamp: scan_id as f64 * 0.1,
            sensor_origin: sensor,
            echoes: points
                .iter()
                .map(|(x, y, z)| Echo::at(Vec3::new(*x, *y, *z)))
                .collect(),
        }
    }

    #[test]
    fn classify_against_committed_range() {
        let ground = Cell2D {
            committed_range: Some(ZRange::new(-1.75, -1.75)),
            ..Cell2D::default()
        };
        // Ground echo inside the stored range: static, even though the range
        // is a single value.
        assert_eq!(classify_echo_by_range(&ground, -1.75, EPS), Label::Static);
        // Range extension: an object rises out of the stored band.
        assert_eq!(classify_echo_by_range(&ground, 0.5, EPS), Label::Dynamic);
        // Never-observed cell: new detection.
        assert_eq!(
            classify_echo_by_range(&Cell2D::default(), -1.75, EPS),
            Label::Dynamic
        );
        // Tolerance edges.
        assert_eq!(classify_echo_by_range(&ground, -1.71, EPS), Label::Static);
        assert_eq!(classify_echo_by_range(&ground, -1.65, EPS), Label::Dynamic);
    }

    #[test]
    fn range_extension_flags_dynamic_ground_stays_static() {
        // Flat ground everywhere, then objects rise in two cells; the
        // committed range there grows from the ground singleton to the
        // object top and only the object echoes are dynamic.
        let sensor = Vec3::new(0.5, 0.5, 0.0);
        let mut g = grid(4, 4);
        let mut ground = Vec::new();
        for i in 0..4 {
            for j in 0..4 {
                ground.push((i as f64 + 0.5, j as f64 + 0.5, -1.75));
            }
        }
        g.ingest_scan(&frame(0, sensor, &ground)).unwrap();

        let mut pts = ground.clone();
        pts.push((2.5, 1.5, 2.0));
        pts.push((1.5, 2.5, 2.0));
        let out = g.ingest_scan(&frame(1, sensor, &pts)).unwrap();
        let (grd, obj) = out.labels.split_at(ground.len());
        assert_eq!(obj.len(), 2);
        assert!(obj.iter().all(|l| *l == Label::Dynamic));
        assert!(grd.iter().all(|l| *l == Label::Static));
        assert_eq!(out.stats.reset_cell_count, 0);

        let c = g.cell(CellIndex::new(2, 1, 0));
        let r = c.committed_range.unwrap();
        assert_abs_diff_eq!(r.z_low, -1.75);
        assert_abs_diff_eq!(r.z_high, 2.0);
    }

    #[test]
    fn repeated_scan_is_all_static() {
        let sensor = Vec3::new(0.5, 0.5, 0.0);
        let pts = [(2.5, 1.5, -1.75), (2.5, 1.5, 0.4), (3.5, 3.5, -1.0)];
        let mut g = grid(4, 4);
        g.ingest_scan(&frame(0, sensor, &pts)).unwrap();
        let out = g.ingest_scan(&frame(1, sensor, &pts)).unwrap();
        assert!(out.labels.iter().all(|l| *l == Label::Static));
        assert_eq!(out.stats.dynamic_count, 0);
    }

    #[test]
    fn multiple_echoes_union_into_current_range() {
        let sensor = Vec3::new(0.5, 0.5, 0.0);
        let mut g = grid(4, 4);
        g.ingest_scan(&frame(
            0,
            sensor,
            &[(2.5, 2.5, 0.5), (2.5, 2.5, -1.0), (2.5, 2.5, -0.2)],
        ))
        .unwrap();
        let r = g.cell(CellIndex::new(2, 2, 0)).committed_range.unwrap();
        assert_abs_diff_eq!(r.z_low, -1.0);
        assert_abs_diff_eq!(r.z_high, 0.5);
    }

    #[test]
    fn tall_leaver_resets_and_short_arrival_is_dynamic() {
        // A truck-height occupant fills cell (5,1); it departs and a ray to
        // the background wall pierces the vacated band, resetting the cell.
        // The shorter newcomer two scans later must be a new detection.
        let sensor = Vec3::new(0.5, 1.5, 0.5);
        let truck = [(5.5, 1.5, -1.75), (5.5, 1.5, 2.0)];
        let mut g = grid(10, 3);
        g.ingest_scan(&frame(0, sensor, &truck)).unwrap();
        g.ingest_scan(&frame(1, sensor, &truck)).unwrap();

        // Truck gone; wall behind becomes visible. The ray to (9.5, 1.5)
        // crosses (5,1) at z ≈ 0.38..0.40, inside the committed [-1.75, 2].
        let out = g
            .ingest_scan(&frame(2, sensor, &[(9.5, 1.5, 0.3)]))
            .unwrap();
        assert_eq!(out.stats.shadowed_cell_count, 1);
        assert_eq!(out.stats.reset_cell_count, 1);
        let c = g.cell(CellIndex::new(5, 1, 0));
        assert_eq!(c.committed_range, None);
        assert!(!c.shadowed);

        let out = g
            .ingest_scan(&frame(3, sensor, &[(5.5, 1.5, -0.2), (9.5, 1.5, 0.3)]))
            .unwrap();
        assert_eq!(out.labels[0], Label::Dynamic);
    }

    #[test]
    fn without_resizing_the_short_arrival_passes_as_static() {
        // Same scenario with resizing off: the stale committed range
        // swallows the newcomer — the false negative resizing exists to fix.
        let sensor = Vec3::new(0.5, 1.5, 0.5);
        let truck = [(5.5, 1.5, -1.75), (5.5, 1.5, 2.0)];
        let mut g = grid(10, 3);
        g.set_resize_enabled(false);
        g.ingest_scan(&frame(0, sensor, &truck)).unwrap();
        g.ingest_scan(&frame(1, sensor, &truck)).unwrap();
        let out = g
            .ingest_scan(&frame(2, sensor, &[(9.5, 1.5, 0.3)]))
            .unwrap();
        assert_eq!(out.stats.reset_cell_count, 0);
        assert!(g.cell(CellIndex::new(5, 1, 0)).shadowed);
        let out = g
            .ingest_scan(&frame(3, sensor, &[(5.5, 1.5, -0.2), (9.5, 1.5, 0.3)]))
            .unwrap();
        assert_eq!(out.labels[0], Label::Static);
    }

    #[test]
    fn ray_above_committed_range_does_not_reset() {
        let sensor = Vec3::new(0.5, 1.5, 0.5);
        let truck = [(5.5, 1.5, -1.75), (5.5, 1.5, 2.0)];
        let mut g = grid(10, 3);
        g.ingest_scan(&frame(0, sensor, &truck)).unwrap();
        g.ingest_scan(&frame(1, sensor, &truck)).unwrap();
        // Ray to a high target passes over cell (5,1) at z ≈ 2.25..2.64,
        // above the committed top of 2.0: line of sight proves nothing.
        let out = g
            .ingest_scan(&frame(2, sensor, &[(9.5, 1.5, 4.0)]))
            .unwrap();
        assert_eq!(out.stats.reset_cell_count, 0);
        let c = g.cell(CellIndex::new(5, 1, 0));
        assert!(c.shadowed);
        assert_eq!(c.committed_range, Some(ZRange::new(-1.75, 2.0)));
        // The stale range persists, so the newcomer is (wrongly but by
        // design) contained.
        let out = g
            .ingest_scan(&frame(3, sensor, &[(5.5, 1.5, -0.2)]))
            .unwrap();
        assert_eq!(out.labels[0], Label::Static);
    }

    #[test]
    fn uncrossed_cell_keeps_shadow_and_range() {
        let sensor = Vec3::new(0.5, 2.5, 0.5);
        let mut g = grid(10, 3);
        g.ingest_scan(&frame(0, sensor, &[(5.5, 1.5, 1.0)])).unwrap();
        // Only echo is in a different row; its ray never crosses (5,1).
        let out = g
            .ingest_scan(&frame(1, sensor, &[(9.5, 2.5, 0.0)]))
            .unwrap();
        assert_eq!(out.stats.reset_cell_count, 0);
        let c = g.cell(CellIndex::new(5, 1, 0));
        assert!(c.shadowed);
        assert!(c.committed_range.is_some());
    }

    #[test]
    fn shadowed_cell_reappearing_inside_range_is_static() {
        let sensor = Vec3::new(0.5, 2.5, 0.5);
        let wall = (5.5, 1.5, 1.0);
        let mut g = grid(10, 3);
        g.ingest_scan(&frame(0, sensor, &[wall])).unwrap();
        g.ingest_scan(&frame(1, sensor, &[(9.5, 2.5, 0.0)])).unwrap();
        assert!(g.cell(CellIndex::new(5, 1, 0)).shadowed);
        let out = g
            .ingest_scan(&frame(2, sensor, &[wall, (9.5, 2.5, 0.0)]))
            .unwrap();
        assert_eq!(out.labels[0], Label::Static);
        assert!(!g.cell(CellIndex::new(5, 1, 0)).shadowed);
    }

    #[test]
    fn out_of_bounds_echo_is_static_and_flagged() {
        let sensor = Vec3::new(0.5, 0.5, 0.0);
        let mut g = grid(4, 4);
        g.ingest_scan(&frame(0, sensor, &[(2.5, 2.5, 0.0)])).unwrap();
        let out = g
            .ingest_scan(&frame(1, sensor, &[(99.0, 2.5, 0.0), (2.5, 2.5, 0.0)]))
            .unwrap();
        assert_eq!(out.labels[0], Label::Static);
        assert!(out.flags[0].out_of_range);
        assert_eq!(out.labels[1], Label::Static);
        assert!(!out.flags[1].out_of_range);
    }

    #[test]
    fn scan_ids_must_increase() {
        let sensor = Vec3::new(0.5, 0.5, 0.0);
        let mut g = grid(4, 4);
        g.ingest_scan(&frame(3, sensor, &[(2.5, 2.5, 0.0)])).unwrap();
        assert!(matches!(
            g.ingest_scan(&frame(2, sensor, &[(2.5, 2.5, 0.0)])),
            Err(PipelineError::ScanOrder { last: 3, got: 2 })
        ));
    }

    #[test]
    fn first_scan_labels_everything_static() {
        let sensor = Vec3::new(0.5, 0.5, 0.0);
        let mut g = grid(4, 4);
        let out = g
            .ingest_scan(&frame(0, sensor, &[(2.5, 2.5, 0.0), (1.5, 3.5, 2.0)]))
            .unwrap();
        assert!(out.labels.iter().all(|l| *l == Label::Static));
    }

    #[test]
    fn committed_ranges_grow_monotonically_without_resizing() {
        let sensor = Vec3::new(0.5, 0.5, 4.9);
        let mut g = grid(6, 6);
        g.set_resize_enabled(false);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut prev: std::collections::HashMap<CellIndex, ZRange> =
            std::collections::HashMap::new();
        for scan in 0..12u64 {
            let pts: Vec<(f64, f64, f64)> = (0..60)
                .map(|_| {
                    (
                        rng.gen_range(0.0..6.0),
                        rng.gen_range(0.0..6.0),
                        rng.gen_range(-2.9..4.9),
                    )
                })
                .collect();
            g.ingest_scan(&frame(scan, sensor, &pts)).unwrap();
            for (idx, c) in g.iter_cells() {
                let Some(r) = c.committed_range else { continue };
                assert!(r.z_low <= r.z_high);
                if let Some(old) = prev.get(&idx) {
                    assert!(
                        r.z_low <= old.z_low && r.z_high >= old.z_high,
                        "committed range shrank at {idx:?}: {old:?} -> {r:?}"
                    );
                }
                prev.insert(idx, r);
            }
        }
    }

    #[test]
    fn random_scenes_agree_across_storage_backends() {
        // Dense storage takes a specialized resize walk, sparse the generic
        // one; random scans with out-of-bounds echoes, grazing rays, and a
        // sensor that wanders per trial must leave identical labels, stats,
        // and cell state either way.
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for trial in 0..40 {
            let (nx, ny) = (rng.gen_range(4..18), rng.gen_range(4..18));
            let mut sparse = RangeGrid2D::new(grid_cfg(nx, ny), Storage::Sparse, EPS).unwrap();
            let mut dense = RangeGrid2D::new(grid_cfg(nx, ny), Storage::Dense, EPS).unwrap();
            let sensor = Vec3::new(
                rng.gen_range(-1.0..nx as f64 + 1.0),
                rng.gen_range(-1.0..ny as f64 + 1.0),
                rng.gen_range(-1.0..3.0),
            );
            for scan in 0..12u64 {
                let pts: Vec<(f64, f64, f64)> = (0..rng.gen_range(5..60))
                    .map(|_| {
                        (
                            rng.gen_range(-2.0..nx as f64 + 2.0),
                            rng.gen_range(-2.0..ny as f64 + 2.0),
                            rng.gen_range(-2.9..4.9),
                        )
                    })
                    .collect();
                let f = frame(scan, sensor, &pts);
                let a = sparse.ingest_scan(&f).unwrap();
                let b = dense.ingest_scan(&f).unwrap();
                assert_eq!(a.labels, b.labels, "trial {trial} scan {scan}");
                assert_eq!(
                    a.stats.reset_cell_count, b.stats.reset_cell_count,
                    "trial {trial} scan {scan}"
                );
                assert_eq!(
                    a.stats.shadowed_cell_count, b.stats.shadowed_cell_count,
                    "trial {trial} scan {scan}"
                );
            }
            let mut a: Vec<_> = sparse.iter_cells().collect();
            let mut b: Vec<_> = dense.iter_cells().collect();
            a.sort_by_key(|(idx, _)| *idx);
            b.sort_by_key(|(idx, _)| *idx);
            assert_eq!(a, b, "trial {trial}");
        }
    }

    #[test]
    fn dense_and_sparse_storage_agree() {
        let sensor = Vec3::new(0.5, 1.5, 0.5);
        let scans: Vec<Vec<(f64, f64, f64)>> = vec![
            vec![(5.5, 1.5, -1.75), (5.5, 1.5, 2.0), (2.5, 0.5, 0.0)],
            vec![(9.5, 1.5, 0.3), (2.5, 0.5, 0.0)],
            vec![(5.5, 1.5, -0.2), (9.5, 1.5, 0.3)],
        ];
        let mut sparse = RangeGrid2D::new(grid_cfg(10, 3), Storage::Sparse, EPS).unwrap();
        let mut dense = RangeGrid2D::new(grid_cfg(10, 3), Storage::Dense, EPS).unwrap();
        for (id, pts) in scans.iter().enumerate() {
            let f = frame(id as u64, sensor, pts);
            let a = sparse.ingest_scan(&f).unwrap();
            let b = dense.ingest_scan(&f).unwrap();
            assert_eq!(a.labels, b.labels, "scan {id}");
            assert_eq!(a.stats.reset_cell_count, b.stats.reset_cell_count);
        }
        let mut a: Vec<_> = sparse.iter_cells().collect();
        let mut b: Vec<_> = dense.iter_cells().collect();
        a.sort_by_key(|(idx, _)| *idx);
        b.sort_by_key(|(idx, _)| *idx);
        assert_eq!(a, b);
    }
}
