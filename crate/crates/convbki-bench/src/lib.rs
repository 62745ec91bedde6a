//! Shared fixtures for the update-path benchmarks: a deterministic
//! synthetic scene and the dense volumes the hot loop consumes, sized like
//! a realistic ego window so the timings mean something.

use convbki::nalgebra::Vector3;
use convbki::ndarray::Array4;
use convbki::synth::{generate, SynthConfig, NUM_CLASSES};
use convbki::{
    build_filter, voxelize, GridSpec, KernelFilter, KernelParams, KernelVariant, LocalGrid,
    SemanticPoint,
};

pub const RESOLUTION: f64 = 0.2;
pub const PRIOR_ALPHA: f64 = 1e-3;

/// A ten-frame scene with the default 4000 points per frame.
pub fn scene() -> convbki::synth::SynthScene {
    generate(
        2024,
        &SynthConfig {
            num_frames: 10,
            ..SynthConfig::default()
        },
    )
    .expect("default synthetic config is valid")
}

/// An ego window comfortably containing the whole scene.
pub fn window_spec() -> GridSpec {
    GridSpec::new(
        Vector3::new(-7.2, -7.2, -0.8),
        Vector3::new(7.2, 7.2, 3.2),
        RESOLUTION,
        NUM_CLASSES,
    )
    .expect("bench window is consistent")
}

/// A single-length filter at the given edge size.
pub fn filter(filter_size: usize) -> KernelFilter {
    let params = KernelParams::uniform(KernelVariant::Single, NUM_CLASSES, 0.4);
    build_filter(&params, filter_size, RESOLUTION, NUM_CLASSES).expect("bench filter is valid")
}

/// One frame's points in the global frame.
pub fn global_points(scene: &convbki::synth::SynthScene, frame: usize) -> Vec<SemanticPoint> {
    let frame = &scene.frames[frame];
    frame
        .points
        .iter()
        .map(|p| SemanticPoint {
            position: frame.pose.apply(&p.position),
            label: p.label.clone(),
        })
        .collect()
}

/// The prior volume and one frame's binned input mass, ready for the
/// convolution benchmark.
pub fn update_inputs(spec: &GridSpec) -> (LocalGrid, Array4<f64>) {
    let scene = scene();
    let anchor = spec.base_anchor();
    let prior = LocalGrid::filled(spec, anchor, PRIOR_ALPHA);
    let (input, skipped) =
        voxelize(&global_points(&scene, 0), spec, anchor).expect("bench points voxelize");
    assert_eq!(skipped, 0, "bench window must contain the whole scene");
    (prior, input)
}
