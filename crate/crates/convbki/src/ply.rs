//! ASCII PLY export of a global map for external viewers.
//!
//! Each retained voxel becomes one vertex at its centroid, colored by the
//! palette entry of its argmax class and carrying the Dirichlet
//! expectation and variance of that class as scalar properties. Voxels
//! whose variance exceeds the configured threshold are dropped, which
//! strips the uncertain fringe of the map.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{argmax_label, dirichlet_stats};
use crate::map::GlobalMap;

/// Vertex colors by class id, `[r, g, b]`. The first four rows are the
/// synthetic-scene classes (ground, pole, wall, vehicle); the rest keep
/// larger label sets distinguishable. Class ids beyond the table wrap
/// around.
pub const PALETTE: [[u8; 3]; 20] = [
    [128, 64, 128],  // ground
    [153, 153, 153], // pole
    [102, 102, 156], // wall
    [0, 0, 142],     // vehicle
    [220, 20, 60],
    [255, 158, 0],
    [107, 142, 35],
    [70, 130, 180],
    [244, 164, 96],
    [119, 11, 32],
    [0, 128, 128],
    [255, 215, 0],
    [186, 85, 211],
    [46, 139, 87],
    [210, 105, 30],
    [95, 158, 160],
    [219, 112, 147],
    [154, 205, 50],
    [72, 61, 139],
    [205, 92, 92],
];

/// Color for a class id, wrapping past the end of the palette.
pub fn class_color(class: usize) -> [u8; 3] {
    PALETTE[class % PALETTE.len()]
}

#[derive(Debug, Clone, Default)]
pub struct PlyOptions {
    /// Drop voxels whose argmax-class variance exceeds this; `None`
    /// exports everything.
    pub variance_threshold: Option<f64>,
}

/// Writes the map as ASCII PLY and returns the number of vertices.
///
/// Vertices are emitted in voxel-key order, so equal maps produce
/// byte-identical files.
pub fn export_ply(
    map: &GlobalMap,
    resolution: f64,
    options: &PlyOptions,
    writer: &mut impl Write,
) -> Result<u64> {
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(Error::domain(format!(
            "resolution must be positive, got {resolution}"
        )));
    }
    if let Some(t) = options.variance_threshold {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::domain(format!(
                "variance threshold must be >= 0, got {t}"
            )));
        }
    }

    let mut keys: Vec<_> = map.iter().map(|(key, _)| *key).collect();
    keys.sort();

    // The vertex count leads the body in the header, so rows are buffered.
    let mut rows = Vec::with_capacity(keys.len());
    for key in keys {
        let cell = map.get(&key).expect("key just listed");
        let class = argmax_label(&cell.alpha);
        let (expectation, variance) = dirichlet_stats(&cell.alpha, class)?;
        if let Some(threshold) = options.variance_threshold {
            if variance > threshold {
                continue;
            }
        }
        let centroid = key.centroid(resolution);
        let [r, g, b] = class_color(class);
        rows.push(format!(
            "{:.6} {:.6} {:.6} {} {} {} {:.6} {:.6}",
            centroid.x as f32,
            centroid.y as f32,
            centroid.z as f32,
            r,
            g,
            b,
            expectation as f32,
            variance as f32,
        ));
    }

    let header = format!(
        "ply\n\
         format ascii 1.0\n\
         element vertex {}\n\
         property float x\n\
         property float y\n\
         property float z\n\
         property uchar red\n\
         property uchar green\n\
         property uchar blue\n\
         property float expectation\n\
         property float variance\n\
         end_header\n",
        rows.len()
    );
    writer.write_all(header.as_bytes()).map_err(io_err)?;
    for row in &rows {
        writer.write_all(row.as_bytes()).map_err(io_err)?;
        writer.write_all(b"\n").map_err(io_err)?;
    }
    Ok(rows.len() as u64)
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<ply writer>", e)
}

/// [`export_ply`] straight to a file path.
pub fn write_ply_file(
    map: &GlobalMap,
    resolution: f64,
    options: &PlyOptions,
    path: impl AsRef<Path>,
) -> Result<u64> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let count = export_ply(map, resolution, options, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(count)
}
