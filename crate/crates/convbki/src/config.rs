//! Plain-text `key = value` mapping configuration.
//!
//! One assignment per line; `#` starts a comment and blank lines are
//! skipped. Every key has a default, so a config file only states what it
//! overrides — and unknown keys are errors, which catches typos instead of
//! silently running with defaults.

use std::fs;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::frame_io::LabelMode;
use crate::grid::GridSpec;
use crate::kernel::KernelVariant;
use crate::map::GC_DISABLED;

/// Everything the mapping pipeline needs besides the data itself.
#[derive(Debug, Clone)]
pub struct MapConfig {
    /// Voxel edge length, meters.
    pub resolution: f64,
    /// Odd filter edge length, taps.
    pub filter_size: usize,
    pub num_classes: usize,
    /// Ego-relative lower corner of the local window, meters.
    pub bounds_min: Vector3<f64>,
    /// Ego-relative upper corner of the local window, meters.
    pub bounds_max: Vector3<f64>,
    pub kernel_variant: KernelVariant,
    /// Prior Dirichlet concentration α₀ of unseen voxels.
    pub prior: f64,
    /// Frames a voxel may go untouched before eviction; [`GC_DISABLED`]
    /// keeps everything.
    pub gc_window: u32,
    /// PLY export drops voxels above this argmax-class variance.
    pub variance_threshold: f64,
    /// Label encoding expected in frame files.
    pub label_mode: LabelMode,
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig {
            resolution: 0.2,
            filter_size: 5,
            num_classes: 4,
            bounds_min: Vector3::new(-20.0, -20.0, -2.6),
            bounds_max: Vector3::new(20.0, 20.0, 0.6),
            kernel_variant: KernelVariant::Single,
            prior: 1e-3,
            gc_window: 10,
            variance_threshold: 0.01,
            label_mode: LabelMode::Hard,
        }
    }
}

fn parse_vector(value: &str) -> std::result::Result<Vector3<f64>, String> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected \"x,y,z\", got {value:?}"));
    }
    let mut out = [0.0; 3];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = part
            .parse()
            .map_err(|_| format!("invalid number {part:?}"))?;
    }
    Ok(Vector3::new(out[0], out[1], out[2]))
}

impl MapConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |msg: String| Error::config(format!("key {key:?}: {msg}"));
        let num = |v: &str| -> Result<f64> {
            v.parse().map_err(|_| bad(format!("invalid number {v:?}")))
        };
        match key {
            "resolution" => self.resolution = num(value)?,
            "filter_size" => {
                self.filter_size = value
                    .parse()
                    .map_err(|_| bad(format!("invalid integer {value:?}")))?
            }
            "num_classes" => {
                self.num_classes = value
                    .parse()
                    .map_err(|_| bad(format!("invalid integer {value:?}")))?
            }
            "bounds_min" => self.bounds_min = parse_vector(value).map_err(bad)?,
            "bounds_max" => self.bounds_max = parse_vector(value).map_err(bad)?,
            "kernel_variant" => self.kernel_variant = value.parse()?,
            "prior" => self.prior = num(value)?,
            "gc_window" => {
                self.gc_window = if value == "disabled" {
                    GC_DISABLED
                } else {
                    value
                        .parse()
                        .map_err(|_| bad(format!("invalid integer {value:?} (or \"disabled\")")))?
                }
            }
            "variance_threshold" => self.variance_threshold = num(value)?,
            "label_mode" => self.label_mode = value.parse()?,
            other => {
                return Err(Error::config(format!(
                    "unknown config key {other:?} (known keys: resolution, filter_size, \
                     num_classes, bounds_min, bounds_max, kernel_variant, prior, gc_window, \
                     variance_threshold, label_mode)"
                )))
            }
        }
        Ok(())
    }

    /// Loads defaults overridden by the file's assignments.
    pub fn from_file(path: impl AsRef<Path>) -> Result<MapConfig> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = MapConfig::default();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!(
                    "{}:{}: expected \"key = value\", got {line:?}",
                    path.display(),
                    idx + 1
                ))
            })?;
            config
                .set(key.trim(), value.trim())
                .map_err(|e| Error::config(format!("{}:{}: {e}", path.display(), idx + 1)))?;
        }
        config.validate()?;
        Ok(config)
    }

    /// Cross-field checks beyond what each setter can see.
    pub fn validate(&self) -> Result<()> {
        if !(self.prior.is_finite() && self.prior > 0.0) {
            return Err(Error::config(format!(
                "prior must be positive, got {}",
                self.prior
            )));
        }
        if !(self.variance_threshold.is_finite() && self.variance_threshold >= 0.0) {
            return Err(Error::config(format!(
                "variance_threshold must be >= 0, got {}",
                self.variance_threshold
            )));
        }
        // GridSpec::new re-checks resolution/bounds/num_classes relations.
        self.grid_spec().map(|_| ())
    }

    /// The local-window grid this config describes.
    pub fn grid_spec(&self) -> Result<GridSpec> {
        GridSpec::new(
            self.bounds_min,
            self.bounds_max,
            self.resolution,
            self.num_classes,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_produce_a_valid_grid() {
        let config = MapConfig::default();
        config.validate().unwrap();
        let spec = config.grid_spec().unwrap();
        assert_eq!(spec.dims(), [200, 200, 16]);
    }

    #[test]
    fn file_overrides_only_what_it_names() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.cfg");
        fs::write(
            &path,
            "# mapping run\n\
             resolution = 0.4\n\
             kernel_variant = compound\n\
             bounds_min = -8,-8,-0.8\n\
             bounds_max = 8,8,2.4\n\
             gc_window = disabled\n",
        )
        .unwrap();
        let config = MapConfig::from_file(&path).unwrap();
        assert_eq!(config.resolution, 0.4);
        assert_eq!(config.kernel_variant, KernelVariant::Compound);
        assert_eq!(config.bounds_min, Vector3::new(-8.0, -8.0, -0.8));
        assert_eq!(config.gc_window, GC_DISABLED);
        // Untouched keys keep their defaults.
        assert_eq!(config.filter_size, 5);
        assert_eq!(config.num_classes, 4);
        assert_eq!(config.label_mode, LabelMode::Hard);
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.cfg");
        fs::write(&path, "resolution = 0.2\nfilter_sze = 3\n").unwrap();
        let err = MapConfig::from_file(&path).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("filter_sze"), "{text}");
        assert!(text.contains(":2"), "line number missing: {text}");
    }

    #[test]
    fn malformed_lines_and_values_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.cfg");
        for body in [
            "resolution 0.2\n",            // no '='
            "resolution = fast\n",         // not a number
            "bounds_min = 1,2\n",          // wrong arity
            "kernel_variant = gaussian\n", // unknown variant
            "label_mode = fuzzy\n",        // unknown mode
            "gc_window = sometimes\n",     // not an integer
        ] {
            fs::write(&path, body).unwrap();
            let err = MapConfig::from_file(&path).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{body:?} gave {err:?}");
        }
    }

    #[test]
    fn inconsistent_geometry_fails_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.cfg");
        // 0.5 does not divide the default 3.2 m z-extent.
        fs::write(&path, "resolution = 0.5\n").unwrap();
        assert!(MapConfig::from_file(&path).is_err());
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let err = MapConfig::from_file("/nonexistent/map.cfg").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
