//! Persistent global voxel map: a hash store of per-voxel Dirichlet
//! concentrations with windowed extraction, write-back, sliding-window
//! garbage collection, and a binary file format.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::grid::{GridSpec, LocalGrid, VoxelKey};

/// Magic bytes opening a serialized map file.
pub const MAP_MAGIC: &[u8; 8] = b"CBKIMAP1";

/// `gc_window` value that disables garbage collection entirely (useful for
/// offline batch runs that want the full accumulated map).
pub const GC_DISABLED: u32 = u32::MAX;

/// Stored state of one voxel: its concentration row and the frame counter
/// value at which it last changed.
#[derive(Debug, Clone, PartialEq)]
pub struct MapCell {
    pub alpha: Vec<f64>,
    pub last_update: u64,
}

/// The global map. Only voxels that have received evidence are stored;
/// everything else is implicitly at the uniform prior.
#[derive(Debug, Clone)]
pub struct GlobalMap {
    cells: HashMap<VoxelKey, MapCell>,
    pub num_classes: usize,
    /// Uniform prior concentration α₀ assumed for unstored voxels.
    pub prior_alpha: f64,
    /// Sliding-window length for garbage collection, in frames.
    pub gc_window: u32,
    /// Number of frames fused so far; the stamp of the next frame.
    pub frame_counter: u64,
}

impl GlobalMap {
    pub fn new(num_classes: usize, prior_alpha: f64, gc_window: u32) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::domain(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        if !prior_alpha.is_finite() || prior_alpha <= 0.0 {
            return Err(Error::domain(format!(
                "prior concentration must be finite and > 0, got {prior_alpha}"
            )));
        }
        Ok(GlobalMap {
            cells: HashMap::new(),
            num_classes,
            prior_alpha,
            gc_window,
            frame_counter: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn get(&self, key: &VoxelKey) -> Option<&MapCell> {
        self.cells.get(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&VoxelKey, &MapCell)> {
        self.cells.iter()
    }

    /// Inserts or replaces one cell directly (mainly for tests and tools).
    pub fn insert(&mut self, key: VoxelKey, cell: MapCell) -> Result<()> {
        if cell.alpha.len() != self.num_classes {
            return Err(Error::shape(format!(
                "cell has {} concentrations but the map has {} classes",
                cell.alpha.len(),
                self.num_classes
            )));
        }
        self.cells.insert(key, cell);
        Ok(())
    }

    /// Copies the ego-centered window around `pose` out of the map as a
    /// dense local grid. Voxels without stored state come out at the prior.
    pub fn extract_local(&self, pose: &Pose, spec: &GridSpec) -> LocalGrid {
        let anchor = local_anchor(pose, spec);
        let mut grid = LocalGrid::filled(spec, anchor, self.prior_alpha);
        let [nx, ny, nz] = spec.dims();
        for ix in 0..nx {
            for iy in 0..ny {
                for iz in 0..nz {
                    let key = anchor.offset(ix as i32, iy as i32, iz as i32);
                    if let Some(cell) = self.cells.get(&key) {
                        for (c, &a) in cell.alpha.iter().enumerate() {
                            grid.alpha[[c, ix, iy, iz]] = a;
                        }
                    }
                }
            }
        }
        grid
    }

    /// Writes a posterior window back into the store, stamping cells with
    /// `stamp`. Cells already in the store are overwritten; cells not yet
    /// stored are inserted only if they differ from the uniform prior (the
    /// update adds exact zeros where no evidence landed, so untouched empty
    /// space stays unstored). Returns the number of cells upserted.
    pub fn write_back(&mut self, local: &LocalGrid, stamp: u64) -> Result<usize> {
        if local.spec.num_classes != self.num_classes {
            return Err(Error::shape(format!(
                "local window has {} classes but the map has {}",
                local.spec.num_classes, self.num_classes
            )));
        }
        let [nx, ny, nz] = local.spec.dims();
        let mut upserts = 0usize;
        for ix in 0..nx {
            for iy in 0..ny {
                for iz in 0..nz {
                    let key = local.key_at(ix, iy, iz);
                    let row = local.cell(ix, iy, iz);
                    match self.cells.get_mut(&key) {
                        Some(cell) => {
                            cell.alpha.copy_from_slice(&row);
                            cell.last_update = stamp;
                            upserts += 1;
                        }
                        None => {
                            if row.iter().any(|&a| a != self.prior_alpha) {
                                self.cells.insert(
                                    key,
                                    MapCell {
                                        alpha: row,
                                        last_update: stamp,
                                    },
                                );
                                upserts += 1;
                            }
                        }
                    }
                }
            }
        }
        Ok(upserts)
    }

    /// Evicts cells whose `last_update` is older than the sliding window:
    /// after fusing frame `current_frame`, a cell survives iff
    /// `last_update >= current_frame − gc_window`. Returns the eviction
    /// count. A window of [`GC_DISABLED`] keeps everything.
    pub fn garbage_collect(&mut self, current_frame: u64) -> usize {
        if self.gc_window == GC_DISABLED {
            return 0;
        }
        let Some(threshold) = current_frame.checked_sub(self.gc_window as u64) else {
            return 0; // the window still covers frame 0
        };
        let before = self.cells.len();
        self.cells.retain(|_, cell| cell.last_update >= threshold);
        before - self.cells.len()
    }

    /// Serializes the map. The layout is little-endian:
    ///
    /// ```text
    /// magic "CBKIMAP1"
    /// u32 num_classes    f64 prior_alpha    u32 gc_window
    /// u64 frame_counter  u64 entry_count
    /// entry_count × { i32 i, j, k;  u64 last_update;  num_classes × f64 alpha }
    /// ```
    ///
    /// Entries are written in key order, so identical maps produce
    /// byte-identical files.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io_err = |e| Error::io(path, e);
        out.write_all(MAP_MAGIC).map_err(io_err)?;
        out.write_all(&(self.num_classes as u32).to_le_bytes())
            .map_err(io_err)?;
        out.write_all(&self.prior_alpha.to_le_bytes())
            .map_err(io_err)?;
        out.write_all(&self.gc_window.to_le_bytes())
            .map_err(io_err)?;
        out.write_all(&self.frame_counter.to_le_bytes())
            .map_err(io_err)?;
        out.write_all(&(self.cells.len() as u64).to_le_bytes())
            .map_err(io_err)?;
        let mut keys: Vec<&VoxelKey> = self.cells.keys().collect();
        keys.sort();
        for key in keys {
            let cell = &self.cells[key];
            out.write_all(&key.i.to_le_bytes()).map_err(io_err)?;
            out.write_all(&key.j.to_le_bytes()).map_err(io_err)?;
            out.write_all(&key.k.to_le_bytes()).map_err(io_err)?;
            out.write_all(&cell.last_update.to_le_bytes())
                .map_err(io_err)?;
            for &a in &cell.alpha {
                out.write_all(&a.to_le_bytes()).map_err(io_err)?;
            }
        }
        out.flush().map_err(io_err)
    }

    /// Reads a map written by [`GlobalMap::save`], validating the magic,
    /// header fields, record count, and concentration positivity.
    pub fn load(path: &Path) -> Result<GlobalMap> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut input = BufReader::new(file);
        let format_err = |msg: &str| Error::Format {
            path: path.to_path_buf(),
            message: msg.to_string(),
        };

        let mut magic = [0u8; 8];
        read_exact_or(&mut input, &mut magic, path, 0)?;
        if &magic != MAP_MAGIC {
            return Err(format_err("bad magic (not a map file)"));
        }
        let num_classes = read_u32(&mut input, path, 0)? as usize;
        let prior_alpha = read_f64(&mut input, path, 0)?;
        let gc_window = read_u32(&mut input, path, 0)?;
        let frame_counter = read_u64(&mut input, path, 0)?;
        let entry_count = read_u64(&mut input, path, 0)?;
        let mut map = GlobalMap::new(num_classes, prior_alpha, gc_window)
            .map_err(|e| format_err(&format!("invalid header: {e}")))?;
        map.frame_counter = frame_counter;

        for record in 0..entry_count {
            let i = read_i32(&mut input, path, record)?;
            let j = read_i32(&mut input, path, record)?;
            let k = read_i32(&mut input, path, record)?;
            let last_update = read_u64(&mut input, path, record)?;
            let mut alpha = Vec::with_capacity(num_classes);
            for _ in 0..num_classes {
                let a = read_f64(&mut input, path, record)?;
                if !a.is_finite() || a <= 0.0 {
                    return Err(format_err(&format!(
                        "record {record}: non-positive concentration {a}"
                    )));
                }
                alpha.push(a);
            }
            let key = VoxelKey::new(i, j, k);
            if map
                .cells
                .insert(key, MapCell { alpha, last_update })
                .is_some()
            {
                return Err(format_err(&format!(
                    "record {record}: duplicate key {key:?}"
                )));
            }
        }
        let mut trailing = [0u8; 1];
        match input.read(&mut trailing) {
            Ok(0) => Ok(map),
            Ok(_) => Err(format_err("trailing bytes after the last record")),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    /// Rough resident size of the stored cells, for memory accounting in
    /// sweeps: key + stamp + concentration row per entry, plus the hash
    /// table's per-slot overhead.
    pub fn approx_bytes(&self) -> u64 {
        let per_entry = (12 + 8 + self.num_classes * 8 + 16) as u64;
        self.cells.len() as u64 * per_entry
    }
}

/// Global key of the window's `[0,0,0]` cell when centered at `pose`: the
/// ego voxel shifted by the window's min corner (a resolution multiple).
pub fn local_anchor(pose: &Pose, spec: &GridSpec) -> VoxelKey {
    let ego = VoxelKey::containing(&pose.translation, spec.delta_r);
    let base = spec.base_anchor();
    ego.offset(base.i, base.j, base.k)
}

fn read_exact_or(input: &mut impl Read, buf: &mut [u8], path: &Path, record: u64) -> Result<()> {
    input.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Truncated {
                path: path.to_path_buf(),
                record,
            }
        } else {
            Error::io(path, e)
        }
    })
}

fn read_u32(input: &mut impl Read, path: &Path, record: u64) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact_or(input, &mut buf, path, record)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_i32(input: &mut impl Read, path: &Path, record: u64) -> Result<i32> {
    let mut buf = [0u8; 4];
    read_exact_or(input, &mut buf, path, record)?;
    Ok(i32::from_le_bytes(buf))
}

fn read_u64(input: &mut impl Read, path: &Path, record: u64) -> Result<u64> {
    let mut buf = [0u8; 8];
    read_exact_or(input, &mut buf, path, record)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64(input: &mut impl Read, path: &Path, record: u64) -> Result<f64> {
    let mut buf = [0u8; 8];
    read_exact_or(input, &mut buf, path, record)?;
    Ok(f64::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn small_spec() -> GridSpec {
        GridSpec::new(
            Vector3::new(-0.4, -0.4, -0.4),
            Vector3::new(0.4, 0.4, 0.4),
            0.2,
            2,
        )
        .unwrap()
    }

    #[test]
    fn extract_fills_prior_and_stored_cells() {
        let spec = small_spec();
        let mut map = GlobalMap::new(2, 1e-3, 10).unwrap();
        map.insert(
            VoxelKey::new(0, 0, 0),
            MapCell {
                alpha: vec![3.0, 0.5],
                last_update: 7,
            },
        )
        .unwrap();
        let grid = map.extract_local(&Pose::identity(), &spec);
        assert_eq!(grid.anchor, VoxelKey::new(-2, -2, -2));
        assert_eq!(grid.cell(2, 2, 2), vec![3.0, 0.5]);
        assert_eq!(grid.cell(0, 0, 0), vec![1e-3, 1e-3]);
    }

    #[test]
    fn window_follows_the_ego_pose() {
        let spec = small_spec();
        let map = GlobalMap::new(2, 1e-3, 10).unwrap();
        let pose = Pose::from_translation(Vector3::new(1.0, -0.5, 0.0));
        let grid = map.extract_local(&pose, &spec);
        // ego voxel (5, -3, 0) plus the window's min-corner offset (-2).
        assert_eq!(grid.anchor, VoxelKey::new(3, -5, -2));
    }

    #[test]
    fn write_back_skips_prior_valued_absent_cells() {
        let spec = small_spec();
        let mut map = GlobalMap::new(2, 1e-3, 10).unwrap();
        let mut grid = map.extract_local(&Pose::identity(), &spec);
        grid.alpha[[0, 1, 2, 3]] = 0.8;
        let upserts = map.write_back(&grid, 0).unwrap();
        assert_eq!(upserts, 1);
        assert_eq!(map.len(), 1);
        let cell = map.get(&VoxelKey::new(-1, 0, 1)).unwrap();
        assert_eq!(cell.alpha, vec![0.8, 1e-3]);
        assert_eq!(cell.last_update, 0);
    }

    #[test]
    fn write_back_restamps_existing_cells_even_when_unchanged() {
        let spec = small_spec();
        let mut map = GlobalMap::new(2, 1e-3, 10).unwrap();
        map.insert(
            VoxelKey::new(0, 0, 0),
            MapCell {
                alpha: vec![2.0, 2.0],
                last_update: 3,
            },
        )
        .unwrap();
        let grid = map.extract_local(&Pose::identity(), &spec);
        let upserts = map.write_back(&grid, 9).unwrap();
        assert_eq!(upserts, 1);
        let cell = map.get(&VoxelKey::new(0, 0, 0)).unwrap();
        assert_eq!(cell.alpha, vec![2.0, 2.0]);
        assert_eq!(cell.last_update, 9);
    }

    #[test]
    fn gc_evicts_strictly_older_than_the_window() {
        let mut map = GlobalMap::new(2, 1e-3, 10).unwrap();
        for (n, stamp) in [(0, 0u64), (1, 1), (2, 11)] {
            map.insert(
                VoxelKey::new(n, 0, 0),
                MapCell {
                    alpha: vec![1.0, 1.0],
                    last_update: stamp,
                },
            )
            .unwrap();
        }
        let evicted = map.garbage_collect(11);
        assert_eq!(evicted, 1);
        assert!(map.get(&VoxelKey::new(0, 0, 0)).is_none()); // stamp 0 < 11 − 10
        assert!(map.get(&VoxelKey::new(1, 0, 0)).is_some()); // stamp 1 exactly at the edge
        assert!(map.get(&VoxelKey::new(2, 0, 0)).is_some());
    }

    #[test]
    fn gc_never_underflows_early_frames() {
        let mut map = GlobalMap::new(2, 1e-3, 10).unwrap();
        map.insert(
            VoxelKey::new(0, 0, 0),
            MapCell {
                alpha: vec![1.0, 1.0],
                last_update: 0,
            },
        )
        .unwrap();
        assert_eq!(map.garbage_collect(5), 0);
        assert_eq!(map.len(), 1);
    }

    #[test]
    fn gc_can_be_disabled() {
        let mut map = GlobalMap::new(2, 1e-3, GC_DISABLED).unwrap();
        map.insert(
            VoxelKey::new(0, 0, 0),
            MapCell {
                alpha: vec![1.0, 1.0],
                last_update: 0,
            },
        )
        .unwrap();
        assert_eq!(map.garbage_collect(1_000_000), 0);
        assert_eq!(map.len(), 1);
    }

    #[test]
    fn save_load_round_trips_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.cbki");
        let mut map = GlobalMap::new(3, 1e-3, 10).unwrap();
        map.frame_counter = 42;
        // Values chosen to exercise exact f64 bit patterns.
        map.insert(
            VoxelKey::new(-7, 3, 0),
            MapCell {
                alpha: vec![0.1 + 0.2, 1.0 / 3.0, 1e-3],
                last_update: 41,
            },
        )
        .unwrap();
        map.insert(
            VoxelKey::new(100, -200, 300),
            MapCell {
                alpha: vec![5.5, 1e-300, 7.0],
                last_update: 2,
            },
        )
        .unwrap();
        map.save(&path).unwrap();
        let loaded = GlobalMap::load(&path).unwrap();
        assert_eq!(loaded.num_classes, 3);
        assert_eq!(loaded.prior_alpha, 1e-3);
        assert_eq!(loaded.gc_window, 10);
        assert_eq!(loaded.frame_counter, 42);
        assert_eq!(loaded.len(), 2);
        for (key, cell) in map.iter() {
            let got = loaded.get(key).unwrap();
            assert_eq!(got.last_update, cell.last_update);
            for (a, b) in got.alpha.iter().zip(&cell.alpha) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        // Saving the loaded map reproduces the file byte for byte.
        let path2 = dir.path().join("map2.cbki");
        loaded.save(&path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn load_rejects_corrupt_files() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("good.cbki");
        let mut map = GlobalMap::new(2, 1e-3, 10).unwrap();
        map.insert(
            VoxelKey::new(1, 2, 3),
            MapCell {
                alpha: vec![1.0, 2.0],
                last_update: 0,
            },
        )
        .unwrap();
        map.save(&good).unwrap();
        let bytes = std::fs::read(&good).unwrap();

        let bad_magic = dir.path().join("magic.cbki");
        let mut corrupted = bytes.clone();
        corrupted[0] = b'X';
        std::fs::write(&bad_magic, &corrupted).unwrap();
        assert!(matches!(
            GlobalMap::load(&bad_magic),
            Err(Error::Format { .. })
        ));

        let truncated = dir.path().join("short.cbki");
        std::fs::write(&truncated, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(
            GlobalMap::load(&truncated),
            Err(Error::Truncated { record: 0, .. })
        ));

        let trailing = dir.path().join("long.cbki");
        let mut extended = bytes.clone();
        extended.push(0);
        std::fs::write(&trailing, &extended).unwrap();
        assert!(matches!(
            GlobalMap::load(&trailing),
            Err(Error::Format { .. })
        ));

        assert!(GlobalMap::load(&dir.path().join("absent.cbki")).is_err());
    }
}
