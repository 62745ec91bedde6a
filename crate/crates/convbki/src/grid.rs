//! Voxel keys, labeled points, local grids, and Dirichlet statistics.

use nalgebra::Vector3;
use ndarray::Array4;

use crate::error::{Error, Result};
use crate::geometry::Pose;

/// Tolerance on label simplex checks (entries ≥ 0, sum within this of 1).
pub const LABEL_SUM_TOL: f64 = 1e-6;

/// Integer voxel coordinates: a point `p` lives in the voxel
/// `floor(p / Δr)` per axis, so each cell covers the half-open cube
/// `[k·Δr, (k+1)·Δr)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VoxelKey {
    pub i: i32,
    pub j: i32,
    pub k: i32,
}

impl VoxelKey {
    pub fn new(i: i32, j: i32, k: i32) -> Self {
        VoxelKey { i, j, k }
    }

    /// The voxel containing a point.
    pub fn containing(p: &Vector3<f64>, delta_r: f64) -> Self {
        VoxelKey {
            i: (p.x / delta_r).floor() as i32,
            j: (p.y / delta_r).floor() as i32,
            k: (p.z / delta_r).floor() as i32,
        }
    }

    /// Metric center of the voxel.
    pub fn centroid(&self, delta_r: f64) -> Vector3<f64> {
        Vector3::new(
            (self.i as f64 + 0.5) * delta_r,
            (self.j as f64 + 0.5) * delta_r,
            (self.k as f64 + 0.5) * delta_r,
        )
    }

    /// Componentwise sum, for shifting keys by grid offsets.
    pub fn offset(&self, di: i32, dj: i32, dk: i32) -> Self {
        VoxelKey {
            i: self.i + di,
            j: self.j + dj,
            k: self.k + dk,
        }
    }
}

/// A point with a categorical label distribution over `C` classes. Hard
/// labels are one-hot rows; soft labels are probability vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticPoint {
    pub position: Vector3<f64>,
    pub label: Vec<f64>,
}

impl SemanticPoint {
    /// Validates that `label` is a probability vector: entries ≥ 0 summing
    /// to 1 within [`LABEL_SUM_TOL`].
    pub fn new(position: Vector3<f64>, label: Vec<f64>) -> Result<Self> {
        if label.is_empty() {
            return Err(Error::domain("point label has no classes"));
        }
        let mut sum = 0.0;
        for &v in &label {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::domain(format!(
                    "label entries must be finite and >= 0, got {v}"
                )));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > LABEL_SUM_TOL {
            return Err(Error::domain(format!(
                "label entries must sum to 1 (got {sum})"
            )));
        }
        Ok(SemanticPoint { position, label })
    }

    /// A hard-labeled point (one-hot row for `class`).
    pub fn one_hot(position: Vector3<f64>, class: usize, num_classes: usize) -> Result<Self> {
        if class >= num_classes {
            return Err(Error::domain(format!(
                "class id {class} out of range for {num_classes} classes"
            )));
        }
        let mut label = vec![0.0; num_classes];
        label[class] = 1.0;
        Ok(SemanticPoint { position, label })
    }

    /// Index of the most probable class (ties go to the lowest index).
    pub fn hard_class(&self) -> usize {
        argmax_label(&self.label)
    }
}

/// One time step of a sequence: labeled points in the sensor frame plus the
/// sensor's global pose.
#[derive(Debug, Clone)]
pub struct FrameRecord {
    pub index: usize,
    pub points: Vec<SemanticPoint>,
    pub pose: Pose,
}

/// Geometry of the ego-centered local window: metric bounds relative to the
/// ego position, voxel edge length, and class count. Bounds must be exact
/// multiples of the resolution so cells tile the window.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub min_corner: Vector3<f64>,
    pub max_corner: Vector3<f64>,
    pub delta_r: f64,
    pub num_classes: usize,
    dims: [usize; 3],
}

impl GridSpec {
    pub fn new(
        min_corner: Vector3<f64>,
        max_corner: Vector3<f64>,
        delta_r: f64,
        num_classes: usize,
    ) -> Result<Self> {
        if !delta_r.is_finite() || delta_r <= 0.0 {
            return Err(Error::domain(format!(
                "voxel resolution must be finite and > 0, got {delta_r}"
            )));
        }
        if num_classes < 2 {
            return Err(Error::domain(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        let mut dims = [0usize; 3];
        for axis in 0..3 {
            let extent = max_corner[axis] - min_corner[axis];
            if !extent.is_finite() || extent <= 0.0 {
                return Err(Error::domain(format!(
                    "grid bounds must satisfy max > min per axis (axis {axis}: extent {extent})"
                )));
            }
            let cells = extent / delta_r;
            let rounded = cells.round();
            if (cells - rounded).abs() > 1e-9 * rounded.max(1.0) {
                return Err(Error::domain(format!(
                    "grid extent {extent} on axis {axis} is not a multiple of the resolution {delta_r}"
                )));
            }
            dims[axis] = rounded as usize;
        }
        Ok(GridSpec {
            min_corner,
            max_corner,
            delta_r,
            num_classes,
            dims,
        })
    }

    /// Cells per axis, `[nx, ny, nz]`.
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// Total number of cells in the window.
    pub fn cell_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Key of the window's min-corner voxel when the window sits at the
    /// origin (identity ego pose). The corners are resolution multiples, so
    /// rounding only strips float noise from the division.
    pub fn base_anchor(&self) -> VoxelKey {
        VoxelKey {
            i: (self.min_corner.x / self.delta_r).round() as i32,
            j: (self.min_corner.y / self.delta_r).round() as i32,
            k: (self.min_corner.z / self.delta_r).round() as i32,
        }
    }
}

/// A dense tensor of per-voxel, per-class values over a placed window:
/// concentration parameters for grids holding map state, or accumulated
/// label mass for input volumes. Layout is `[C, nx, ny, nz]`, and
/// `anchor` is the global key of the `[0, 0, 0]` cell.
#[derive(Debug, Clone)]
pub struct LocalGrid {
    pub alpha: Array4<f64>,
    pub spec: GridSpec,
    pub anchor: VoxelKey,
}

impl LocalGrid {
    /// A window filled with a uniform value (e.g. the prior concentration).
    pub fn filled(spec: &GridSpec, anchor: VoxelKey, value: f64) -> Self {
        let [nx, ny, nz] = spec.dims();
        LocalGrid {
            alpha: Array4::from_elem((spec.num_classes, nx, ny, nz), value),
            spec: spec.clone(),
            anchor,
        }
    }

    /// Local cell index of a global voxel key, if it falls in the window.
    pub fn local_index(&self, key: &VoxelKey) -> Option<(usize, usize, usize)> {
        let [nx, ny, nz] = self.spec.dims();
        let ix = key.i.checked_sub(self.anchor.i)?;
        let iy = key.j.checked_sub(self.anchor.j)?;
        let iz = key.k.checked_sub(self.anchor.k)?;
        if (0..nx as i32).contains(&ix)
            && (0..ny as i32).contains(&iy)
            && (0..nz as i32).contains(&iz)
        {
            Some((ix as usize, iy as usize, iz as usize))
        } else {
            None
        }
    }

    /// Global key of a local cell.
    pub fn key_at(&self, ix: usize, iy: usize, iz: usize) -> VoxelKey {
        self.anchor.offset(ix as i32, iy as i32, iz as i32)
    }

    /// Concentration row of one cell as a slice.
    pub fn cell(&self, ix: usize, iy: usize, iz: usize) -> Vec<f64> {
        (0..self.spec.num_classes)
            .map(|c| self.alpha[[c, ix, iy, iz]])
            .collect()
    }
}

/// Accumulates labeled points into a per-class mass volume over the placed
/// window: cell `(c, i, j, k)` receives the sum of `label[c]` over points
/// whose voxel is that cell. Points outside the window are skipped and
/// tallied. Accumulation is serial in input order, so results are
/// bit-reproducible.
pub fn voxelize(
    points: &[SemanticPoint],
    spec: &GridSpec,
    anchor: VoxelKey,
) -> Result<(Array4<f64>, usize)> {
    let [nx, ny, nz] = spec.dims();
    let mut volume = Array4::zeros((spec.num_classes, nx, ny, nz));
    let mut skipped = 0usize;
    for point in points {
        if point.label.len() != spec.num_classes {
            return Err(Error::shape(format!(
                "point has {} label entries but the grid has {} classes",
                point.label.len(),
                spec.num_classes
            )));
        }
        let key = VoxelKey::containing(&point.position, spec.delta_r);
        let ix = key.i - anchor.i;
        let iy = key.j - anchor.j;
        let iz = key.k - anchor.k;
        if (0..nx as i32).contains(&ix)
            && (0..ny as i32).contains(&iy)
            && (0..nz as i32).contains(&iz)
        {
            let (ix, iy, iz) = (ix as usize, iy as usize, iz as usize);
            for (c, &mass) in point.label.iter().enumerate() {
                volume[[c, ix, iy, iz]] += mass;
            }
        } else {
            skipped += 1;
        }
    }
    Ok((volume, skipped))
}

/// Posterior expectation and variance of class `class` under a Dirichlet
/// with concentrations `alpha`:
///
/// ```text
/// E = α_c / Σ_j α_j        V = E (1 − E) / (1 + Σ_j α_j)
/// ```
pub fn dirichlet_stats(alpha: &[f64], class: usize) -> Result<(f64, f64)> {
    if alpha.is_empty() {
        return Err(Error::domain("empty concentration vector"));
    }
    if class >= alpha.len() {
        return Err(Error::domain(format!(
            "class {class} out of range for {} classes",
            alpha.len()
        )));
    }
    let mut eta = 0.0;
    for &a in alpha {
        if !a.is_finite() || a <= 0.0 {
            return Err(Error::domain(format!(
                "Dirichlet concentrations must be finite and > 0, got {a}"
            )));
        }
        eta += a;
    }
    let expectation = alpha[class] / eta;
    let variance = expectation * (1.0 - expectation) / (1.0 + eta);
    Ok((expectation, variance))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax_label(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn spec_2m() -> GridSpec {
        GridSpec::new(
            Vector3::new(-1.0, -1.0, -1.0),
            Vector3::new(1.0, 1.0, 1.0),
            0.2,
            2,
        )
        .unwrap()
    }

    #[test]
    fn keys_use_floor_semantics() {
        assert_eq!(
            VoxelKey::containing(&Vector3::new(-0.05, 0.39, 0.2), 0.2),
            VoxelKey::new(-1, 1, 1)
        );
        assert_eq!(
            VoxelKey::containing(&Vector3::new(0.0, 0.0, 0.0), 0.2),
            VoxelKey::new(0, 0, 0)
        );
        assert_eq!(
            VoxelKey::containing(&Vector3::new(-0.2, -0.0001, 0.1999), 0.2),
            VoxelKey::new(-1, -1, 0)
        );
    }

    #[test]
    fn centroid_is_cell_center() {
        let c = VoxelKey::new(3, -1, 2).centroid(0.2);
        assert_relative_eq!(c, Vector3::new(0.7, -0.1, 0.5), epsilon = 1e-12);
    }

    #[test]
    fn grid_spec_derives_dims_and_rejects_misaligned_bounds() {
        let spec = spec_2m();
        assert_eq!(spec.dims(), [10, 10, 10]);
        assert_eq!(spec.cell_count(), 1000);
        assert_eq!(spec.base_anchor(), VoxelKey::new(-5, -5, -5));
        assert!(GridSpec::new(Vector3::zeros(), Vector3::new(1.0, 1.0, 1.0), 0.3, 2).is_err());
        assert!(GridSpec::new(Vector3::zeros(), Vector3::new(-1.0, 1.0, 1.0), 0.2, 2).is_err());
    }

    #[test]
    fn window_bounds_are_half_open() {
        let spec = spec_2m();
        let anchor = spec.base_anchor();
        // A point exactly on the min corner lands in cell (0,0,0); a point
        // exactly on the max corner falls outside.
        let at_min = SemanticPoint::one_hot(Vector3::new(-1.0, -1.0, -1.0), 0, 2).unwrap();
        let at_max = SemanticPoint::one_hot(Vector3::new(1.0, 1.0, 1.0), 0, 2).unwrap();
        let (volume, skipped) = voxelize(&[at_min, at_max], &spec, anchor).unwrap();
        assert_eq!(skipped, 1);
        assert_eq!(volume[[0, 0, 0, 0]], 1.0);
    }

    #[test]
    fn voxelize_accumulates_soft_labels() {
        let spec = spec_2m();
        let anchor = spec.base_anchor();
        let points = vec![
            SemanticPoint::new(Vector3::new(0.05, 0.05, 0.05), vec![0.3, 0.7]).unwrap(),
            SemanticPoint::new(Vector3::new(0.15, 0.19, 0.01), vec![0.5, 0.5]).unwrap(),
            SemanticPoint::one_hot(Vector3::new(-0.9, 0.0, 0.0), 1, 2).unwrap(),
        ];
        let (volume, skipped) = voxelize(&points, &spec, anchor).unwrap();
        assert_eq!(skipped, 0);
        // First two points share cell (5,5,5) relative to the anchor.
        assert_relative_eq!(volume[[0, 5, 5, 5]], 0.8, epsilon = 1e-15);
        assert_relative_eq!(volume[[1, 5, 5, 5]], 1.2, epsilon = 1e-15);
        assert_eq!(volume[[1, 0, 5, 5]], 1.0);
    }

    #[test]
    fn voxelize_rejects_label_width_mismatch() {
        let spec = spec_2m();
        let bad = SemanticPoint::new(Vector3::zeros(), vec![0.2, 0.3, 0.5]).unwrap();
        assert!(voxelize(&[bad], &spec, spec.base_anchor()).is_err());
    }

    #[test]
    fn labels_must_be_probability_vectors() {
        assert!(SemanticPoint::new(Vector3::zeros(), vec![0.5, 0.6]).is_err());
        assert!(SemanticPoint::new(Vector3::zeros(), vec![-0.1, 1.1]).is_err());
        assert!(SemanticPoint::new(Vector3::zeros(), vec![]).is_err());
        assert!(SemanticPoint::new(Vector3::zeros(), vec![0.5, 0.5 + 2e-6]).is_err());
        assert!(SemanticPoint::new(Vector3::zeros(), vec![0.5, 0.5]).is_ok());
        assert!(SemanticPoint::one_hot(Vector3::zeros(), 2, 2).is_err());
    }

    #[test]
    fn dirichlet_stats_match_reference_values() {
        let (e, v) = dirichlet_stats(&[1.0, 1.0], 0).unwrap();
        assert_relative_eq!(e, 0.5, max_relative = 1e-15);
        assert_relative_eq!(v, 1.0 / 12.0, max_relative = 1e-15);
        // Heavy evidence for class 0 vs. a 1e-3 prior on class 1: the
        // posterior is nearly certain and the variance collapses to ~1e-9.
        // Reference values from 40-digit arithmetic (the exact expectation
        // is 0.999999000000999999…, written here at f64 precision).
        let (e, v) = dirichlet_stats(&[1000.0, 0.001], 0).unwrap();
        assert_relative_eq!(e, 0.999999000001, max_relative = 1e-12);
        // 1e-9 rather than 1e-12: computing 1−E costs ~6 digits here.
        assert_relative_eq!(v, 9.98998003001995e-10, max_relative = 1e-9);
    }

    #[test]
    fn dirichlet_stats_reject_bad_input() {
        assert!(dirichlet_stats(&[], 0).is_err());
        assert!(dirichlet_stats(&[1.0, 0.0], 0).is_err());
        assert!(dirichlet_stats(&[1.0, -1.0], 0).is_err());
        assert!(dirichlet_stats(&[1.0, 1.0], 2).is_err());
        assert!(dirichlet_stats(&[1.0, f64::NAN], 0).is_err());
    }

    #[test]
    fn argmax_ties_break_low() {
        assert_eq!(argmax_label(&[0.25, 0.25, 0.25, 0.25]), 0);
        assert_eq!(argmax_label(&[0.1, 0.4, 0.4, 0.1]), 1);
        assert_eq!(argmax_label(&[0.0, 0.0, 1.0]), 2);
    }

    #[test]
    fn local_grid_index_round_trips() {
        let spec = spec_2m();
        let grid = LocalGrid::filled(&spec, VoxelKey::new(10, -3, 7), 1e-3);
        assert_eq!(grid.alpha.shape(), &[2, 10, 10, 10]);
        assert!(grid.alpha.iter().all(|&a| a == 1e-3));
        let key = grid.key_at(4, 0, 9);
        assert_eq!(key, VoxelKey::new(14, -3, 16));
        assert_eq!(grid.local_index(&key), Some((4, 0, 9)));
        assert_eq!(grid.local_index(&VoxelKey::new(9, -3, 7)), None);
        assert_eq!(grid.local_index(&VoxelKey::new(20, -3, 7)), None);
    }

    proptest! {
        #[test]
        fn in_bounds_mass_is_conserved(
            seeds in proptest::collection::vec((0.0_f64..1.0, 0.0_f64..1.0, 0.0_f64..1.0, 0.0_f64..1.0), 1..50)
        ) {
            let spec = spec_2m();
            let anchor = spec.base_anchor();
            let points: Vec<SemanticPoint> = seeds
                .iter()
                .map(|&(x, y, z, w)| {
                    SemanticPoint::new(
                        Vector3::new(2.0 * x - 1.0, 2.0 * y - 1.0, 2.0 * z - 1.0),
                        vec![w, 1.0 - w],
                    )
                    .unwrap()
                })
                .collect();
            let (volume, skipped) = voxelize(&points, &spec, anchor).unwrap();
            prop_assert_eq!(skipped, 0);
            let total: f64 = volume.iter().sum();
            prop_assert!((total - points.len() as f64).abs() < 1e-9);
        }
    }
}
