//! The Bayesian map update.
//!
//! The production route bins points into a per-class mass volume and adds a
//! depthwise cross-correlation of that volume onto the prior
//! concentrations: for every class `c` and cell `v`,
//!
//! ```text
//! α_out[c, v] = α_in[c, v] + Σ_t K[c, t] · F[c, v + t − r]
//! ```
//!
//! with taps `t ∈ [0, f)³`, center `r = (f−1)/2`, and zero padding outside
//! the window. The filter is mirror-symmetric about its center, so the
//! gather orientation (correlation vs. convolution) does not change the
//! result. Classes never mix: channel `c` of the output depends only on
//! channel `c` of the input.
//!
//! A brute-force route computes the same posterior directly from the point
//! list by evaluating the continuous kernel between cell centroids,
//! bypassing the discretized filter and the convolution loop entirely. The
//! two routes must agree to float accuracy; the test suite holds them to
//! each other.

use std::time::Instant;

use ndarray::Array4;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{voxelize, FrameRecord, GridSpec, LocalGrid, SemanticPoint, VoxelKey};
use crate::kernel::{KernelFilter, KernelParams};
use crate::map::{local_anchor, GlobalMap};

fn check_update_shapes(
    prior: &LocalGrid,
    input: &Array4<f64>,
    filter: &KernelFilter,
) -> Result<()> {
    if input.shape() != prior.alpha.shape() {
        return Err(Error::shape(format!(
            "input volume shape {:?} does not match the window shape {:?}",
            input.shape(),
            prior.alpha.shape()
        )));
    }
    if filter.num_classes() != prior.spec.num_classes {
        return Err(Error::shape(format!(
            "filter has {} channels but the window has {} classes",
            filter.num_classes(),
            prior.spec.num_classes
        )));
    }
    if filter.delta_r != prior.spec.delta_r {
        return Err(Error::shape(format!(
            "filter was discretized at resolution {} but the window uses {}",
            filter.delta_r, prior.spec.delta_r
        )));
    }
    Ok(())
}

/// Axis-aligned bounding box (inclusive) of the cells with nonzero mass in
/// any channel, or `None` for an all-zero volume.
fn nonzero_bbox(data: &[f64], channels: usize, dims: [usize; 3]) -> Option<[(usize, usize); 3]> {
    let [nx, ny, nz] = dims;
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    let mut any = false;
    for c in 0..channels {
        for x in 0..nx {
            for y in 0..ny {
                let row_start = ((c * nx + x) * ny + y) * nz;
                let row = &data[row_start..row_start + nz];
                for (z, &v) in row.iter().enumerate() {
                    if v != 0.0 {
                        any = true;
                        lo[0] = lo[0].min(x);
                        hi[0] = hi[0].max(x);
                        lo[1] = lo[1].min(y);
                        hi[1] = hi[1].max(y);
                        lo[2] = lo[2].min(z);
                        hi[2] = hi[2].max(z);
                    }
                }
            }
        }
    }
    any.then(|| [(lo[0], hi[0]), (lo[1], hi[1]), (lo[2], hi[2])])
}

/// Adds the depthwise-correlated input volume onto the prior. This is the
/// production route: it restricts work to the dilated bounding box of the
/// observed mass and parallelizes over channel/x slabs, but computes each
/// output cell as a plain ordered tap sum, so its results are bitwise
/// identical to the serial reference.
pub fn bayesian_update(
    prior: &LocalGrid,
    input: &Array4<f64>,
    filter: &KernelFilter,
) -> Result<LocalGrid> {
    check_update_shapes(prior, input, filter)?;
    let dims = prior.spec.dims();
    let [nx, ny, nz] = dims;
    let channels = prior.spec.num_classes;
    let f = filter.filter_size();
    let r = filter.radius() as isize;

    // Force standard (contiguous C-order) layout so the slab arithmetic
    // below is valid regardless of how the caller built the arrays.
    let input_std = input.as_standard_layout();
    let in_data = input_std.as_slice().expect("standard layout has a slice");
    let mut out = LocalGrid {
        alpha: prior.alpha.as_standard_layout().into_owned(),
        spec: prior.spec.clone(),
        anchor: prior.anchor,
    };

    let Some(bbox) = nonzero_bbox(in_data, channels, dims) else {
        return Ok(out); // no evidence: the posterior is the prior
    };
    let (bx, by, bz) = (bbox[0], bbox[1], bbox[2]);

    let weights_std = filter.weights.as_standard_layout();
    let weights = weights_std.as_slice().expect("standard layout has a slice");
    let out_data = out
        .alpha
        .as_slice_mut()
        .expect("standard layout has a slice");

    // One slab per (channel, x) pair; slabs are disjoint output rows. Taps
    // accumulate into a zeroed scratch plane — visiting each output cell's
    // taps in the same (a, b, t) order as the reference — and land on the
    // prior in one add per cell, so the rounding matches the reference's
    // `prior + Σ taps` grouping bit for bit.
    out_data
        .par_chunks_mut(ny * nz)
        .enumerate()
        .for_each(|(slab, out_plane)| {
            let c = slab / nx;
            let x = slab % nx;
            let w_class = &weights[c * f * f * f..(c + 1) * f * f * f];
            let in_class = &in_data[c * nx * ny * nz..(c + 1) * nx * ny * nz];
            let mut acc = vec![0.0f64; ny * nz];
            for a in 0..f {
                let xi = x as isize + a as isize - r;
                if xi < bx.0 as isize || xi > bx.1 as isize {
                    continue;
                }
                let in_plane = &in_class[xi as usize * ny * nz..(xi as usize + 1) * ny * nz];
                for b in 0..f {
                    // Output rows y whose tap yi = y + b − r hits the mass bbox.
                    let y_lo = (by.0 as isize + r - b as isize).max(0) as usize;
                    let y_hi = (by.1 as isize + r - b as isize).min(ny as isize - 1);
                    if y_hi < 0 {
                        continue;
                    }
                    for y in y_lo..=y_hi as usize {
                        let yi = (y as isize + b as isize - r) as usize;
                        let in_row = &in_plane[yi * nz..(yi + 1) * nz];
                        let acc_row = &mut acc[y * nz..(y + 1) * nz];
                        for t in 0..f {
                            let w = w_class[(a * f + b) * f + t];
                            if w == 0.0 {
                                continue;
                            }
                            let z_lo = (bz.0 as isize + r - t as isize).max(0) as usize;
                            let z_hi = (bz.1 as isize + r - t as isize).min(nz as isize - 1);
                            if z_hi < 0 || (z_hi as usize) < z_lo {
                                continue;
                            }
                            let z_hi = z_hi as usize;
                            // Source run: zi = z + t − r, in-bbox by the
                            // clamping above.
                            let src_lo = (z_lo as isize + t as isize - r) as usize;
                            let src_hi = src_lo + (z_hi - z_lo);
                            for (cell, mass) in acc_row[z_lo..=z_hi]
                                .iter_mut()
                                .zip(&in_row[src_lo..=src_hi])
                            {
                                *cell += w * *mass;
                            }
                        }
                    }
                }
            }
            for (out_cell, tap_sum) in out_plane.iter_mut().zip(&acc) {
                *out_cell += *tap_sum;
            }
        });

    Ok(out)
}

/// Serial, unoptimized form of the same gather: every output cell walks
/// every tap with an explicit bounds check. Exists as an obviously-correct
/// anchor for the optimized route.
pub fn bayesian_update_reference(
    prior: &LocalGrid,
    input: &Array4<f64>,
    filter: &KernelFilter,
) -> Result<LocalGrid> {
    check_update_shapes(prior, input, filter)?;
    let mut out = prior.clone();
    let [nx, ny, nz] = prior.spec.dims();
    let f = filter.filter_size();
    let r = filter.radius() as isize;
    for c in 0..prior.spec.num_classes {
        for x in 0..nx {
            for y in 0..ny {
                for z in 0..nz {
                    let mut acc = 0.0;
                    for a in 0..f {
                        for b in 0..f {
                            for t in 0..f {
                                let xi = x as isize + a as isize - r;
                                let yi = y as isize + b as isize - r;
                                let zi = z as isize + t as isize - r;
                                if xi < 0
                                    || xi >= nx as isize
                                    || yi < 0
                                    || yi >= ny as isize
                                    || zi < 0
                                    || zi >= nz as isize
                                {
                                    continue; // zero padding
                                }
                                acc += filter.weights[[c, a, b, t]]
                                    * input[[c, xi as usize, yi as usize, zi as usize]];
                            }
                        }
                    }
                    out.alpha[[c, x, y, z]] += acc;
                }
            }
        }
    }
    Ok(out)
}

/// Brute-force posterior straight from the point list: each in-window
/// point's label mass is spread to every voxel within the filter's reach of
/// the point's cell, weighted by the continuous kernel evaluated between
/// cell centroids. No input volume, no discretized filter, no convolution —
/// an independent oracle for [`bayesian_update`].
///
/// Points are discretized to their cell centroid (the same information the
/// voxelized route sees) and points outside the window are dropped,
/// mirroring the production route's skip semantics. The spread is limited
/// to the `f³` window even if the kernel support is wider, matching the
/// filter's truncation.
pub fn brute_force_update(
    prior: &LocalGrid,
    points: &[SemanticPoint],
    params: &KernelParams,
    filter_size: usize,
) -> Result<LocalGrid> {
    if filter_size == 0 || filter_size.is_multiple_of(2) {
        return Err(Error::domain(format!(
            "filter size must be odd and >= 1, got {filter_size}"
        )));
    }
    let spec = &prior.spec;
    params.validate(spec.num_classes)?;
    let mut out = prior.clone();
    let [nx, ny, nz] = spec.dims();
    let r = ((filter_size - 1) / 2) as i32;
    let delta_r = spec.delta_r;

    for point in points {
        if point.label.len() != spec.num_classes {
            return Err(Error::shape(format!(
                "point has {} label entries but the window has {} classes",
                point.label.len(),
                spec.num_classes
            )));
        }
        let key = VoxelKey::containing(&point.position, delta_r);
        let px = key.i - prior.anchor.i;
        let py = key.j - prior.anchor.j;
        let pz = key.k - prior.anchor.k;
        if px < 0 || px >= nx as i32 || py < 0 || py >= ny as i32 || pz < 0 || pz >= nz as i32 {
            continue; // outside the window, as in voxelization
        }
        for dx in -r..=r {
            let vx = px + dx;
            if vx < 0 || vx >= nx as i32 {
                continue;
            }
            for dy in -r..=r {
                let vy = py + dy;
                if vy < 0 || vy >= ny as i32 {
                    continue;
                }
                for dz in -r..=r {
                    let vz = pz + dz;
                    if vz < 0 || vz >= nz as i32 {
                        continue;
                    }
                    // Metric offset between the point's cell centroid and
                    // the receiving voxel's centroid.
                    let offset = nalgebra::Vector3::new(
                        dx as f64 * delta_r,
                        dy as f64 * delta_r,
                        dz as f64 * delta_r,
                    );
                    for (c, &mass) in point.label.iter().enumerate() {
                        if mass == 0.0 {
                            continue;
                        }
                        let k = params.evaluate(c, &offset);
                        if k != 0.0 {
                            out.alpha[[c, vx as usize, vy as usize, vz as usize]] += k * mass;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Per-frame bookkeeping from sequential fusion.
#[derive(Debug, Clone)]
pub struct FrameStats {
    /// Position of the frame in the fused sequence (the stamp it received).
    pub frame: u64,
    pub points_in: usize,
    /// Points that fell outside the ego window and were dropped.
    pub skipped: usize,
    /// Map cells written back this frame.
    pub upserts: usize,
    /// Cells evicted by garbage collection after this frame.
    pub evicted: usize,
    /// Wall time of extract + voxelize + update + write-back, milliseconds.
    pub update_ms: f64,
}

/// Fuses frames into the map in order: transform points to the global
/// frame, extract the ego window, voxelize, update, write back, collect
/// garbage. Errors are tagged with the offending frame's index.
pub fn sequential_fuse(
    frames: &[FrameRecord],
    map: &mut GlobalMap,
    spec: &GridSpec,
    filter: &KernelFilter,
) -> Result<Vec<FrameStats>> {
    if spec.num_classes != map.num_classes {
        return Err(Error::shape(format!(
            "window spec has {} classes but the map has {}",
            spec.num_classes, map.num_classes
        )));
    }
    let mut stats = Vec::with_capacity(frames.len());
    for frame in frames {
        let tag = |e: Error| Error::at_frame(frame.index, e);
        let start = Instant::now();
        let global_points: Vec<SemanticPoint> = frame
            .points
            .iter()
            .map(|p| SemanticPoint {
                position: frame.pose.apply(&p.position),
                label: p.label.clone(),
            })
            .collect();
        let anchor = local_anchor(&frame.pose, spec);
        let prior = map.extract_local(&frame.pose, spec);
        let (volume, skipped) = voxelize(&global_points, spec, anchor).map_err(tag)?;
        let posterior = bayesian_update(&prior, &volume, filter).map_err(tag)?;
        let stamp = map.frame_counter;
        let upserts = map.write_back(&posterior, stamp).map_err(tag)?;
        map.frame_counter = stamp + 1;
        let evicted = map.garbage_collect(stamp);
        let update_ms = start.elapsed().as_secs_f64() * 1e3;
        log::debug!(
            "frame {}: {} points ({} skipped), {} upserts, {} evicted, {:.2} ms",
            frame.index,
            global_points.len(),
            skipped,
            upserts,
            evicted,
            update_ms
        );
        stats.push(FrameStats {
            frame: stamp,
            points_in: global_points.len(),
            skipped,
            upserts,
            evicted,
            update_ms,
        });
    }
    Ok(stats)
}
