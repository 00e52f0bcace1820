//! Cell storage shared by both grid backends: a hash map keyed by cell
//! index, or a dense array over the whole grid volume.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{CellIndex, GridConfig, GridMode};
use crate::scalar::GridScalar;

/// Storage selection. `Auto` picks per backend: dense for the 2D grid (its
/// cell count is independent of the z extent and small enough to allocate
/// outright), sparse for the 3D grid (cell count grows with volume while
/// occupancy stays low).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Storage {
    #[default]
    Auto,
    Sparse,
    Dense,
}

impl std::fmt::Display for Storage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Storage::Auto => "auto",
            Storage::Sparse => "sparse",
            Storage::Dense => "dense",
        })
    }
}

impl std::str::FromStr for Storage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(Storage::Auto),
            "sparse" => Ok(Storage::Sparse),
            "dense" => Ok(Storage::Dense),
            other => Err(format!("unknown storage {other:?} (auto|sparse|dense)")),
        }
    }
}

impl Storage {
    pub(crate) fn resolve(self, mode: GridMode) -> ResolvedStorage {
        match (self, mode) {
            (Storage::Sparse, _) => ResolvedStorage::Sparse,
            (Storage::Dense, _) => ResolvedStorage::Dense,
            (Storage::Auto, GridMode::Grid2D) => ResolvedStorage::Dense,
            (Storage::Auto, GridMode::Grid3D) => ResolvedStorage::Sparse,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum ResolvedStorage {
    Sparse,
    Dense,
}

/// Map from cell index to cell state. Absent sparse entries and default
/// dense slots mean the same thing: a cell in its never-observed state.
#[derive(Clone, Debug)]
pub(crate) enum CellMap<C> {
    Sparse(HashMap<CellIndex, C>),
    Dense { dims: [usize; 3], slots: Vec<C> },
}

impl<C: Copy + Default + PartialEq> CellMap<C> {
    pub fn new<S: GridScalar>(cfg: &GridConfig<S>, storage: ResolvedStorage) -> Self {
        match storage {
            ResolvedStorage::Sparse => CellMap::Sparse(HashMap::new()),
            ResolvedStorage::Dense => {
                let dims = match cfg.mode() {
                    GridMode::Grid3D => cfg.cells(),
                    GridMode::Grid2D => [cfg.cells_x(), cfg.cells_y(), 1],
                };
                CellMap::Dense {
                    dims,
                    slots: vec![C::default(); dims[0] * dims[1] * dims[2]],
                }
            }
        }
    }

    fn slot(dims: &[usize; 3], idx: CellIndex) -> usize {
        debug_assert!(idx.i < dims[0] && idx.j < dims[1] && idx.k < dims[2]);
        (idx.k * dims[1] + idx.j) * dims[0] + idx.i
    }

    /// Current state of a cell; default state when never touched.
    pub fn get(&self, idx: CellIndex) -> C {
        match self {
            CellMap::Sparse(m) => m.get(&idx).copied().unwrap_or_default(),
            CellMap::Dense { dims, slots } => slots[Self::slot(dims, idx)],
        }
    }

    /// Mutable access, materializing the cell if needed.
    pub fn entry(&mut self, idx: CellIndex) -> &mut C {
        match self {
            CellMap::Sparse(m) => m.entry(idx).or_default(),
            CellMap::Dense { dims, slots } => &mut slots[Self::slot(dims, idx)],
        }
    }

    /// Visit every live cell; `f` returns whether to keep it. Sparse entries
    /// that are dropped are removed from the map; dense slots are reset to
    /// the default state.
    pub fn sweep(&mut self, mut f: impl FnMut(CellIndex, &mut C) -> bool) {
        match self {
            CellMap::Sparse(m) => m.retain(|idx, c| f(*idx, c)),
            CellMap::Dense { dims, slots } => {
                let def = C::default();
                for k in 0..dims[2] {
                    for j in 0..dims[1] {
                        let row = (k * dims[1] + j) * dims[0];
                        for i in 0..dims[0] {
                            let c = &mut slots[row + i];
                            if *c != def && !f(CellIndex::new(i, j, k), c) {
                                *c = def;
                            }
                        }
                    }
                }
            }
        }
    }

    /// All cells that differ from the default state.
    pub fn iter_live(&self) -> Box<dyn Iterator<Item = (CellIndex, C)> + '_> {
        match self {
            CellMap::Sparse(m) => Box::new(
                m.iter()
                    .filter(|(_, c)| **c != C::default())
                    .map(|(idx, c)| (*idx, *c)),
            ),
            CellMap::Dense { dims, slots } => {
                let dims = *dims;
                Box::new(slots.iter().enumerate().filter_map(move |(n, c)| {
                    if *c == C::default() {
                        return None;
                    }
                    let i = n % dims[0];
                    let j = (n / dims[0]) % dims[1];
                    let k = n / (dims[0] * dims[1]);
                    Some((CellIndex::new(i, j, k), *c))
                }))
            }
        }
    }

    /// Replace the contents with an empty map of the same shape, returning
    /// the live cells that were stored.
    pub fn drain_live(&mut self) -> Vec<(CellIndex, C)> {
        let out: Vec<(CellIndex, C)> = self.iter_live().collect();
        match self {
            CellMap::Sparse(m) => m.clear(),
            CellMap::Dense { slots, .. } => slots.fill(C::default()),
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    fn cfg(mode: GridMode) -> GridConfig {
        GridConfig::new(
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(4.0, 3.0, 2.0),
            1.0,
            mode,
        )
        .unwrap()
    }

    #[test]
    fn dense_and_sparse_agree() {
        let c = cfg(GridMode::Grid3D);
        let mut sparse: CellMap<u8> = CellMap::new(&c, ResolvedStorage::Sparse);
        let mut dense: CellMap<u8> = CellMap::new(&c, ResolvedStorage::Dense);
        let touched = [
            CellIndex::new(0, 0, 0),
            CellIndex::new(3, 2, 1),
            CellIndex::new(1, 1, 0),
        ];
        for (n, idx) in touched.iter().enumerate() {
            *sparse.entry(*idx) = n as u8 + 1;
            *dense.entry(*idx) = n as u8 + 1;
        }
        for idx in &touched {
            assert_eq!(sparse.get(*idx), dense.get(*idx));
        }
        assert_eq!(sparse.get(CellIndex::new(2, 2, 1)), 0);
        assert_eq!(dense.get(CellIndex::new(2, 2, 1)), 0);

        let mut a: Vec<_> = sparse.iter_live().collect();
        let mut b: Vec<_> = dense.iter_live().collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);

        // Sweep dropping odd values.
        sparse.sweep(|_, v| *v % 2 == 0);
        dense.sweep(|_, v| *v % 2 == 0);
        let mut a: Vec<_> = sparse.iter_live().collect();
        let mut b: Vec<_> = dense.iter_live().collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
        assert_eq!(a, vec![(CellIndex::new(3, 2, 1), 2)]);
    }

    #[test]
    fn grid2d_dense_ignores_z_extent() {
        let c = cfg(GridMode::Grid2D);
        let m: CellMap<u8> = CellMap::new(&c, ResolvedStorage::Dense);
        match m {
            CellMap::Dense { dims, slots } => {
                assert_eq!(dims, [4, 3, 1]);
                assert_eq!(slots.len(), 12);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn auto_resolution_is_per_mode() {
        assert_eq!(
            Storage::Auto.resolve(GridMode::Grid2D),
            ResolvedStorage::Dense
        );
        assert_eq!(
            Storage::Auto.resolve(GridMode::Grid3D),
            ResolvedStorage::Sparse
        );
        assert_eq!(
            Storage::Dense.resolve(GridMode::Grid3D),
            ResolvedStorage::Dense
        );
        assert_eq!(
            Storage::Sparse.resolve(GridMode::Grid2D),
            ResolvedStorage::Sparse
        );
    }
}
