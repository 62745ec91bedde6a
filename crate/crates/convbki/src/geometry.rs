//! Rigid-body poses and point transforms.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// How far a rotation block may drift from orthonormality (max-abs entry of
/// RᵀR − I, and |det R − 1|) before a pose is rejected.
pub const POSE_ORTHONORMALITY_TOL: f64 = 1e-6;

/// A rigid transform mapping sensor-frame coordinates into the global frame:
/// `x_global = R · x_sensor + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    /// The identity transform.
    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// A pure translation.
    pub fn from_translation(t: Vector3<f64>) -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// Builds a pose from the 12 row-major entries of a 3×4 `[R | t]`
    /// matrix, validating that `R` is a proper rotation.
    pub fn from_rows(rows: &[f64; 12]) -> Result<Self> {
        let rotation = Matrix3::new(
            rows[0], rows[1], rows[2], rows[4], rows[5], rows[6], rows[8], rows[9], rows[10],
        );
        let translation = Vector3::new(rows[3], rows[7], rows[11]);
        let pose = Pose {
            rotation,
            translation,
        };
        pose.validate()?;
        Ok(pose)
    }

    /// The 12 row-major entries of the 3×4 `[R | t]` matrix.
    pub fn to_rows(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            t.x,
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            t.y,
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.z,
        ]
    }

    /// Rejects poses whose rotation block is not orthonormal with
    /// determinant +1 (within [`POSE_ORTHONORMALITY_TOL`]).
    pub fn validate(&self) -> Result<()> {
        for v in self.to_rows() {
            if !v.is_finite() {
                return Err(Error::domain("pose contains a non-finite entry"));
            }
        }
        let gram = self.rotation.transpose() * self.rotation;
        let residual = gram - Matrix3::identity();
        let max_dev = residual.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if max_dev > POSE_ORTHONORMALITY_TOL {
            return Err(Error::domain(format!(
                "pose rotation is not orthonormal (max |R^T R - I| = {max_dev:.3e})"
            )));
        }
        let det = self.rotation.determinant();
        if (det - 1.0).abs() > POSE_ORTHONORMALITY_TOL {
            return Err(Error::domain(format!(
                "pose rotation determinant is {det:.9}, expected +1 (reflections rejected)"
            )));
        }
        Ok(())
    }

    /// Maps a sensor-frame point into the global frame.
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// The inverse transform (global → sensor).
    pub fn inverse(&self) -> Pose {
        let rot_inv = self.rotation.transpose();
        Pose {
            rotation: rot_inv,
            translation: -(rot_inv * self.translation),
        }
    }

    /// Composition `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }
}
