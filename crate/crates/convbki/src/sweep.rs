//! Resolution and filter-size sweeps over a synthetic scene.
//!
//! Each sweep rebuilds the map from scratch per setting and reports the
//! accuracy/latency/memory trade-off as one row per setting: median
//! per-frame update latency, mIoU against the scene's ground truth
//! (falling back to the raw input labels outside the map), and the
//! working-set size of the map plus the two dense local volumes the update
//! holds live.

use crate::config::MapConfig;
use crate::error::Result;
use crate::eval::{evaluate, EvalOptions};
use crate::kernel::{build_filter, KernelParams};
use crate::map::GlobalMap;
use crate::synth::SynthScene;
use crate::update::sequential_fuse;

/// One sweep setting's outcome.
#[derive(Debug, Clone)]
pub struct SweepRow {
    /// The value swept: a filter size in taps or a resolution in meters.
    pub parameter: f64,
    pub median_update_ms: f64,
    pub miou_pct: f64,
    /// Map storage plus the two dense local volumes live during an update.
    pub map_bytes: u64,
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("latencies are finite"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Builds a fresh map for one (config, length-scale) setting, fuses the
/// whole scene, and scores it.
fn run_setting(
    scene: &SynthScene,
    config: &MapConfig,
    parameter: f64,
    length: f64,
) -> Result<SweepRow> {
    let spec = config.grid_spec()?;
    let params = KernelParams::uniform(config.kernel_variant, config.num_classes, length);
    let filter = build_filter(
        &params,
        config.filter_size,
        config.resolution,
        config.num_classes,
    )?;
    let mut map = GlobalMap::new(config.num_classes, config.prior, config.gc_window)?;

    let stats = sequential_fuse(&scene.frames, &mut map, &spec, &filter)?;
    let latencies = stats.iter().map(|s| s.update_ms).collect();

    let gt_frames = scene.gt_frames();
    let fallback = scene.fallback_classes();
    let report = evaluate(
        &map,
        &gt_frames,
        Some(&fallback),
        config.resolution,
        &EvalOptions::default(),
    )?;

    let dense_volume_bytes = 2 * (spec.cell_count() * config.num_classes * 8) as u64;
    Ok(SweepRow {
        parameter,
        median_update_ms: median(latencies),
        miou_pct: report.miou_pct,
        map_bytes: map.approx_bytes() + dense_volume_bytes,
    })
}

/// Sweeps the filter edge length at fixed resolution. `length` is the
/// kernel length scale shared by every class.
pub fn filter_size_sweep(
    scene: &SynthScene,
    base: &MapConfig,
    filter_sizes: &[usize],
    length: f64,
) -> Result<Vec<SweepRow>> {
    filter_sizes
        .iter()
        .map(|&f| {
            let mut config = base.clone();
            config.filter_size = f;
            run_setting(scene, &config, f as f64, length)
        })
        .collect()
}

/// Sweeps the voxel resolution at fixed filter size. The base config's
/// window bounds must be integer multiples of every swept resolution.
pub fn resolution_sweep(
    scene: &SynthScene,
    base: &MapConfig,
    resolutions: &[f64],
    length: f64,
) -> Result<Vec<SweepRow>> {
    resolutions
        .iter()
        .map(|&r| {
            let mut config = base.clone();
            config.resolution = r;
            run_setting(scene, &config, r, length)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthConfig};
    use nalgebra::Vector3;

    fn small_scene() -> SynthScene {
        generate(
            5,
            &SynthConfig {
                points_per_frame: 800,
                num_frames: 6,
                flip_prob: 0.2,
                ..SynthConfig::default()
            },
        )
        .unwrap()
    }

    fn small_config() -> MapConfig {
        MapConfig {
            bounds_min: Vector3::new(-7.2, -7.2, -0.8),
            bounds_max: Vector3::new(7.2, 7.2, 3.2),
            ..MapConfig::default()
        }
    }

    #[test]
    fn median_handles_odd_and_even_counts() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn filter_sweep_produces_one_row_per_size() {
        let rows = filter_size_sweep(&small_scene(), &small_config(), &[1, 3], 0.4).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].parameter, 1.0);
        assert_eq!(rows[1].parameter, 3.0);
        for row in &rows {
            assert!(row.median_update_ms >= 0.0);
            assert!((0.0..=100.0).contains(&row.miou_pct), "{}", row.miou_pct);
            assert!(row.map_bytes > 0);
        }
        // Filtering with spatial support should beat the no-spread filter
        // on a noisy scene.
        assert!(
            rows[1].miou_pct >= rows[0].miou_pct,
            "f=3 {} vs f=1 {}",
            rows[1].miou_pct,
            rows[0].miou_pct
        );
    }

    #[test]
    fn resolution_sweep_scales_the_dense_volume() {
        let rows = resolution_sweep(&small_scene(), &small_config(), &[0.2, 0.4], 0.4).unwrap();
        assert_eq!(rows.len(), 2);
        // Halving the resolution octuples the dense cell count, so the
        // coarse setting must use less working memory.
        assert!(rows[0].map_bytes > rows[1].map_bytes);
    }
}
