//! 3D binary occupancy grid: new-detection labeling, shadowing, and
//! see-through de-shadowing.
//!
//! A cell is dynamic when it holds echoes now but held none in the previous
//! scan and is not shadowed. Cells that lose their echoes are marked
//! shadowed (presumed occluded) so that re-appearing static structure is not
//! misread as motion; a sensor ray passing through a shadowed cell proves
//! the former occupant left and clears both the shadow and the occupancy
//! memory, so the next arrival there counts as a new detection again.

use std::time::Instant;

use crate::error::PipelineError;
use crate::frame::{EchoFlags, FrameStats, Label, LabeledFrame, ScanFrame};
use crate::geometry::{traverse_ray, world_to_cell, CellIndex, GridConfig, GridMode};
use crate::scalar::GridScalar;
use crate::storage::{CellMap, Storage};

/// Per-cell state. One scan of occupancy history plus the persistent shadow
/// flag is all the labeling rule needs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct Cell3D {
    /// Had echoes in the previous scan, or is carried as shadowed.
    pub occupied_prev: bool,
    /// Has echoes in the scan currently being ingested.
    pub occupied_curr: bool,
    /// Was occupied before, lost its echoes, and no ray has pierced it since.
    pub shadowed: bool,
    pub last_seen_scan: Option<u64>,
}

impl Cell3D {
    fn live(&self) -> bool {
        self.occupied_prev || self.occupied_curr || self.shadowed
    }
}

#[derive(Clone, Debug)]
pub struct OccupancyGrid3D<S = f64> {
    cfg: GridConfig<S>,
    cells: CellMap<Cell3D>,
    current_scan: Option<u64>,
    shadowed_total: usize,
    echo_cells: Vec<Option<CellIndex>>,
}

impl<S: GridScalar> OccupancyGrid3D<S> {
    pub fn new(cfg: GridConfig<S>, storage: Storage) -> Result<Self, PipelineError> {
        if cfg.mode() != GridMode::Grid3D {
            return Err(PipelineError::InvalidConfig(
                "3D grid requires a Grid3D-mode config".into(),
            ));
        }
        let cells = CellMap::new(&cfg, storage.resolve(GridMode::Grid3D));
        Ok(Self {
            cfg,
            cells,
            current_scan: None,
            shadowed_total: 0,
            echo_cells: Vec::new(),
        })
    }

    pub fn cfg(&self) -> &GridConfig<S> {
        &self.cfg
    }

    pub fn current_scan(&self) -> Option<u64> {
        self.current_scan
    }

    /// State of one cell (default state if never observed).
    pub fn cell(&self, idx: CellIndex) -> Cell3D {
        self.cells.get(idx)
    }

    /// All cells holding any state.
    pub fn iter_cells(&self) -> impl Iterator<Item = (CellIndex, Cell3D)> + '_ {
        self.cells.iter_live()
    }

    pub fn shadowed_cells(&self) -> usize {
        self.shadowed_total
    }

    /// Ingest one scan and label its echoes.
    ///
    /// Order within a scan: bin → label → shadow update → see-through
    /// de-shadowing → state roll. De-shadowing therefore affects the *next*
    /// scan's labels, never the current one. The very first scan has no
    /// history and labels everything Static.
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

        // Bin. An echo arriving in a shadowed cell clears the shadow; the
        // cell's occupancy memory was carried along with the shadow, so the
        // arrival reads as re-observation (Static), not new detection.
        let mut echo_cells = std::mem::take(&mut self.echo_cells);
        echo_cells.clear();
        echo_cells.extend(
            frame
                .echoes
                .iter()
                .map(|e| world_to_cell(e.position, &self.cfg)),
        );
        for idx in echo_cells.iter().flatten() {
            let c = self.cells.entry(*idx);
            c.occupied_curr = true;
            c.last_seen_scan = Some(frame.scan_id);
            if c.shadowed {
                c.shadowed = false;
                self.shadowed_total -= 1;
            }
        }

        // Label against the previous scan's state.
        let mut labels = Vec::with_capacity(frame.echoes.len());
        let mut flags = vec![EchoFlags::default(); frame.echoes.len()];
        let mut dynamic_count = 0usize;
        for (n, idx) in echo_cells.iter().enumerate() {
            let label = match idx {
                None => {
                    flags[n].out_of_range = true;
                    Label::Static
                }
                Some(_) if first_scan => Label::Static,
                Some(idx) => {
                    let c = self.cells.get(*idx);
                    if c.occupied_curr && !c.occupied_prev && !c.shadowed {
                        Label::Dynamic
                    } else {
                        Label::Static
                    }
                }
            };
            if label == Label::Dynamic {
                dynamic_count += 1;
            }
            labels.push(label);
        }

        let newly_shadowed = self.update_shadows();
        let deshadowed = self.deshadow_see_through(frame, &echo_cells);

        // Roll: shadow carries the occupancy memory forward.
        self.cells.sweep(|_, c| {
            c.occupied_prev = c.occupied_curr || c.shadowed;
            c.occupied_curr = false;
            c.live()
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
                deshadowed_cell_count: deshadowed,
                reset_cell_count: 0,
            },
        })
    }

    /// Mark every cell that was occupied but received no echo this scan as
    /// shadowed. Returns how many cells newly gained the flag; cells already
    /// shadowed simply stay that way.
    fn update_shadows(&mut self) -> usize {
        let mut newly = 0usize;
        self.cells.sweep(|_, c| {
            if c.occupied_prev && !c.occupied_curr && !c.shadowed {
                c.shadowed = true;
                newly += 1;
            }
            true
        });
        self.shadowed_total += newly;
        newly
    }

    /// Clear the shadow (and the carried occupancy memory) of every shadowed
    /// cell that a sensor-to-echo ray passes through strictly before the
    /// echo's own cell. Returns the number of cells cleared.
    ///
    /// Rays of out-of-bounds echoes still clear everything along their
    /// in-grid portion: the line of sight is proven free up to the echo.
    fn deshadow_see_through(
        &mut self,
        frame: &ScanFrame<S>,
        echo_cells: &[Option<CellIndex>],
    ) -> usize {
        if self.shadowed_total == 0 {
            return 0;
        }
        let mut cleared = 0usize;
        for (echo, target) in frame.echoes.iter().zip(echo_cells.iter()) {
            for step in traverse_ray(frame.sensor_origin, echo.position, &self.cfg) {
                if Some(step.cell) == *target {
                    break;
                }
                if self.cells.get(step.cell).shadowed {
                    let c = self.cells.entry(step.cell);
                    c.shadowed = false;
                    c.occupied_prev = false;
                    cleared += 1;
                    self.shadowed_total -= 1;
                    if self.shadowed_total == 0 {
                        return cleared;
                    }
                }
            }
        }
        cleared
    }
}

// Shift support: the ego-motion module rebuilds the cell set through these.
impl<S: GridScalar> OccupancyGrid3D<S> {
    pub(crate) fn drain_cells(&mut self) -> Vec<(CellIndex, Cell3D)> {
        self.shadowed_total = 0;
        self.cells.drain_live()
    }

    pub(crate) fn merge_cell(&mut self, idx: CellIndex, incoming: Cell3D) {
        let c = self.cells.entry(idx);
        let was_shadowed = c.shadowed;
        c.occupied_prev |= incoming.occupied_prev;
        c.occupied_curr |= incoming.occupied_curr;
        c.shadowed |= incoming.shadowed;
        c.last_seen_scan = c.last_seen_scan.max(incoming.last_seen_scan);
        if !was_shadowed && c.shadowed {
            self.shadowed_total += 1;
        }
    }
}
