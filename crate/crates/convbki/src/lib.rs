//! Convolutional Bayesian kernel inference for 3D semantic mapping.
//!
//! Labeled point clouds are fused, frame by frame, into a global voxel map
//! of Dirichlet concentration parameters. Each frame's points are binned
//! into a per-class mass volume over an ego-centered window, spread to
//! neighboring voxels by a depthwise (per-class) convolution whose weights
//! come from a compactly-supported kernel, and added onto the stored
//! concentrations. Per-voxel class expectations and variances then fall out
//! of the Dirichlet posterior in closed form.
//!
//! The kernel length scales are the only learnable parameters; the training
//! module fits them by gradient descent on a weighted negative log
//! likelihood, differentiating through the same update used for mapping.
//!
//! Top-level layout:
//!
//! - [`kernel`]: the sparse kernel, its length-scale gradient, and
//!   discretized per-class filters.
//! - [`grid`]: voxel keys, labeled points, local windows, Dirichlet stats.
//! - [`update`]: the convolutional Bayesian update and a brute-force
//!   reference route, plus sequential multi-frame fusion.
//! - [`map`]: the persistent global voxel store with extraction,
//!   write-back, garbage collection, and binary serialization.
//! - [`train`]: loss, analytic gradients, Adam, and the training loop.
//! - [`eval`]: confusion-matrix scoring of a map against ground truth.
//! - [`synth`]: a deterministic synthetic scene generator.
//! - [`frame_io`], [`ply`], [`config`]: file formats and configuration.
//! - [`sweep`]: latency/memory/accuracy sweeps over discretization knobs.

// Types from these crates appear in the public API; re-exporting them lets
// dependents name those types without pinning matching versions themselves.
pub use nalgebra;
pub use ndarray;

pub mod config;
pub mod error;
pub mod eval;
pub mod frame_io;
pub mod geometry;
pub mod grid;
pub mod kernel;
pub mod map;
pub mod ply;
pub mod sweep;
pub mod synth;
pub mod train;
pub mod update;

pub use error::{Error, Result};
pub use geometry::Pose;
pub use grid::{
    argmax_label, dirichlet_stats, voxelize, FrameRecord, GridSpec, LocalGrid, SemanticPoint,
    VoxelKey,
};
pub use kernel::{
    build_filter, filter_grads, sparse_kernel, sparse_kernel_grad_length, CompoundLength,
    KernelFile, KernelFilter, KernelParams, KernelVariant,
};
pub use map::GlobalMap;
pub use update::{bayesian_update, brute_force_update, sequential_fuse};
