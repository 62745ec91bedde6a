//! Gradient training of the kernel length scales.
//!
//! Training differentiates through a single map update: aggregate a short
//! frame window into the target frame's ego window, apply the update to a
//! fresh prior, and score a weighted negative log likelihood of the
//! ground-truth classes under the resulting per-voxel Dirichlet
//! expectations. The only learnable parameters are the kernel lengths, so
//! the chain is loss → concentrations → filter weights → lengths, all in
//! closed form.

use std::collections::HashMap;

use nalgebra::Vector3;
use ndarray::Array4;

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::grid::{voxelize, FrameRecord, GridSpec, LocalGrid, SemanticPoint};
use crate::kernel::{build_filter, filter_grads, KernelParams, KernelVariant};
use crate::map::local_anchor;
use crate::update::bayesian_update;

/// Training hyperparameters. The defaults are the shipped recipe: Adam at
/// 0.007 for one epoch, ten-frame windows, all lengths starting at 0.5 m.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Frames aggregated into each training sample's window.
    pub frames_per_sample: usize,
    /// Initial value for every length scale, meters.
    pub l_init: f64,
    /// Prior concentration the differentiated update starts from.
    pub prior_alpha: f64,
    /// Per-class loss weights; inverse class frequency over the ground
    /// truth when unset.
    pub class_weights: Option<Vec<f64>>,
    /// Clamp range for the lengths after each step. Defaults to
    /// `[0.01, Δr·f·√3/2]` — from well below one voxel up to the filter's
    /// corner reach, beyond which extra length cannot change the filter.
    pub length_bounds: Option<(f64, f64)>,
    /// Stabilizer inside the log.
    pub log_epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.007,
            epochs: 1,
            frames_per_sample: 10,
            l_init: 0.5,
            prior_alpha: 1e-3,
            class_weights: None,
            length_bounds: None,
            log_epsilon: 1e-9,
        }
    }
}

/// One training sample: a window of frames, the pose whose ego window the
/// update runs in, and ground-truth classes at global positions.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub frames: Vec<FrameRecord>,
    pub target_pose: Pose,
    /// Global-frame positions with their true class ids.
    pub gt: Vec<(Vector3<f64>, usize)>,
}

/// Builds sliding-window samples over a sequence: for every position `t`
/// from `frames_per_sample − 1` on, the window `[t − T + 1, t]` is
/// aggregated and scored against the ground-truth frame at `t` (positions
/// mapped to the global frame, classes taken from the label argmax).
pub fn make_samples(
    frames: &[FrameRecord],
    gt_frames: &[FrameRecord],
    frames_per_sample: usize,
) -> Result<Vec<TrainSample>> {
    if frames_per_sample == 0 {
        return Err(Error::domain("frames_per_sample must be >= 1"));
    }
    if frames.len() != gt_frames.len() {
        return Err(Error::shape(format!(
            "{} input frames but {} ground-truth frames",
            frames.len(),
            gt_frames.len()
        )));
    }
    if frames.len() < frames_per_sample {
        return Err(Error::domain(format!(
            "need at least {frames_per_sample} frames, got {}",
            frames.len()
        )));
    }
    let mut samples = Vec::new();
    for t in (frames_per_sample - 1)..frames.len() {
        let window = frames[t + 1 - frames_per_sample..=t].to_vec();
        let gt_frame = &gt_frames[t];
        let gt = gt_frame
            .points
            .iter()
            .map(|p| (gt_frame.pose.apply(&p.position), p.hard_class()))
            .collect();
        samples.push(TrainSample {
            frames: window,
            target_pose: frames[t].pose.clone(),
            gt,
        });
    }
    Ok(samples)
}

/// Inverse-frequency class weights over the samples' ground truth,
/// normalized so the weights of the classes that appear average to 1.
/// Classes that never appear get weight 0.
pub fn inverse_frequency_weights(samples: &[TrainSample], num_classes: usize) -> Result<Vec<f64>> {
    let mut counts = vec![0u64; num_classes];
    for sample in samples {
        for &(_, class) in &sample.gt {
            if class >= num_classes {
                return Err(Error::domain(format!(
                    "ground-truth class {class} out of range for {num_classes} classes"
                )));
            }
            counts[class] += 1;
        }
    }
    let present = counts.iter().filter(|&&n| n > 0).count();
    if present == 0 {
        return Err(Error::domain("no ground-truth points in any sample"));
    }
    let inverse_sum: f64 = counts
        .iter()
        .filter(|&&n| n > 0)
        .map(|&n| 1.0 / n as f64)
        .sum();
    Ok(counts
        .iter()
        .map(|&n| {
            if n == 0 {
                0.0
            } else {
                present as f64 / (n as f64 * inverse_sum)
            }
        })
        .collect())
}

/// Loss and gradient of one sample.
#[derive(Debug, Clone)]
pub struct LossBreakdown {
    /// Weighted mean negative log likelihood over the counted points.
    pub loss: f64,
    /// `∂loss/∂length` in the canonical parameter order.
    pub length_grad: Vec<f64>,
    /// Ground-truth points inside the window.
    pub counted_gt: usize,
    /// Ground-truth points outside the window (ignored).
    pub skipped_gt: usize,
}

/// Runs the differentiated pipeline once: build the filter from `params`,
/// aggregate and voxelize the sample's frames, update a fresh prior, and
/// return the weighted NLL with its analytic gradient w.r.t. the lengths.
pub fn sample_loss(
    sample: &TrainSample,
    spec: &GridSpec,
    params: &KernelParams,
    filter_size: usize,
    class_weights: &[f64],
    config: &TrainConfig,
) -> Result<LossBreakdown> {
    let num_classes = spec.num_classes;
    if class_weights.len() != num_classes {
        return Err(Error::shape(format!(
            "{} class weights for {num_classes} classes",
            class_weights.len()
        )));
    }
    if !config.prior_alpha.is_finite() || config.prior_alpha <= 0.0 {
        return Err(Error::domain(format!(
            "prior concentration must be finite and > 0, got {}",
            config.prior_alpha
        )));
    }

    let filter = build_filter(params, filter_size, spec.delta_r, num_classes)?;
    let anchor = local_anchor(&sample.target_pose, spec);
    let mut points: Vec<SemanticPoint> = Vec::new();
    for frame in &sample.frames {
        points.extend(frame.points.iter().map(|p| SemanticPoint {
            position: frame.pose.apply(&p.position),
            label: p.label.clone(),
        }));
    }
    let (volume, _) = voxelize(&points, spec, anchor)?;
    let prior = LocalGrid::filled(spec, anchor, config.prior_alpha);
    let posterior = bayesian_update(&prior, &volume, &filter)?;

    // Accumulate the loss and ∂loss/∂α rows, keyed by ground-truth cell.
    let mut loss_acc = 0.0;
    let mut weight_sum = 0.0;
    let mut counted = 0usize;
    let mut skipped = 0usize;
    let mut cell_coefs: HashMap<(usize, usize, usize), Vec<f64>> = HashMap::new();
    let eps = config.log_epsilon;
    for &(position, class) in &sample.gt {
        if class >= num_classes {
            return Err(Error::domain(format!(
                "ground-truth class {class} out of range for {num_classes} classes"
            )));
        }
        let key = crate::grid::VoxelKey::containing(&position, spec.delta_r);
        let Some((ix, iy, iz)) = posterior.local_index(&key) else {
            skipped += 1;
            continue;
        };
        counted += 1;
        let weight = class_weights[class];
        if weight == 0.0 {
            continue;
        }
        let row = posterior.cell(ix, iy, iz);
        let eta: f64 = row.iter().sum();
        let a_g = row[class];
        let p = a_g / eta;
        loss_acc += weight * -(p + eps).ln();
        weight_sum += weight;
        // d[-w·ln(p+ε)]/dα through p = α_g/η.
        let base = -weight / (p + eps);
        let coefs = cell_coefs
            .entry((ix, iy, iz))
            .or_insert_with(|| vec![0.0; num_classes]);
        let eta_sq = eta * eta;
        for (c, coef) in coefs.iter_mut().enumerate() {
            if c == class {
                *coef += base * (eta - a_g) / eta_sq;
            } else {
                *coef += base * (-a_g / eta_sq);
            }
        }
    }
    if weight_sum == 0.0 {
        return Err(Error::domain(
            "no ground-truth point with nonzero weight landed in the window",
        ));
    }
    let loss = loss_acc / weight_sum;

    // ∂loss/∂K[c,a,b,t] = Σ_cells coef[c,cell] · volume[c, cell + tap − r],
    // zero-padded at the window edge. Only ground-truth cells have nonzero
    // coefficients, so the sum runs over those.
    let f = filter_size;
    let r = ((f - 1) / 2) as isize;
    let [nx, ny, nz] = spec.dims();
    let mut filter_grad: Array4<f64> = Array4::zeros((num_classes, f, f, f));
    for (&(ix, iy, iz), coefs) in &cell_coefs {
        for (c, &coef) in coefs.iter().enumerate() {
            let coef = coef / weight_sum;
            if coef == 0.0 {
                continue;
            }
            for a in 0..f {
                let xi = ix as isize + a as isize - r;
                if xi < 0 || xi >= nx as isize {
                    continue;
                }
                for b in 0..f {
                    let yi = iy as isize + b as isize - r;
                    if yi < 0 || yi >= ny as isize {
                        continue;
                    }
                    for t in 0..f {
                        let zi = iz as isize + t as isize - r;
                        if zi < 0 || zi >= nz as isize {
                            continue;
                        }
                        filter_grad[[c, a, b, t]] +=
                            coef * volume[[c, xi as usize, yi as usize, zi as usize]];
                    }
                }
            }
        }
    }

    // Chain to the lengths through the filter discretization.
    let weight_grads = filter_grads(params, f, spec.delta_r, num_classes)?;
    let length_grad: Vec<f64> = weight_grads
        .iter()
        .map(|g| g.iter().zip(filter_grad.iter()).map(|(a, b)| a * b).sum())
        .collect();

    Ok(LossBreakdown {
        loss,
        length_grad,
        counted_gt: counted,
        skipped_gt: skipped,
    })
}

/// Adam with the standard defaults (β₁ = 0.9, β₂ = 0.999, ε = 1e-8) and
/// bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(dim: usize) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    /// One descent step in place.
    pub fn step(&mut self, values: &mut [f64], grad: &[f64], learning_rate: f64) {
        assert_eq!(values.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..values.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            values[i] -= learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// One optimizer step's record in the loss curve.
#[derive(Debug, Clone)]
pub struct TrainStep {
    pub step: usize,
    pub epoch: usize,
    pub sample: usize,
    pub loss: f64,
    /// Parameter vector after the step, canonical order.
    pub lengths: Vec<f64>,
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainResult {
    pub params: KernelParams,
    pub steps: Vec<TrainStep>,
    pub class_weights: Vec<f64>,
}

/// Fits the kernel lengths on the samples: one Adam step per sample per
/// epoch, lengths clamped into bounds after every step.
pub fn train(
    samples: &[TrainSample],
    spec: &GridSpec,
    variant: KernelVariant,
    filter_size: usize,
    config: &TrainConfig,
) -> Result<TrainResult> {
    if samples.is_empty() {
        return Err(Error::domain("no training samples"));
    }
    let num_classes = spec.num_classes;
    let class_weights = match &config.class_weights {
        Some(w) => {
            if w.len() != num_classes {
                return Err(Error::shape(format!(
                    "{} class weights for {num_classes} classes",
                    w.len()
                )));
            }
            if w.iter().any(|&x| !x.is_finite() || x < 0.0) {
                return Err(Error::domain("class weights must be finite and >= 0"));
            }
            w.clone()
        }
        None => inverse_frequency_weights(samples, num_classes)?,
    };

    let (lo, hi) = config.length_bounds.unwrap_or_else(|| {
        (
            0.01,
            spec.delta_r * filter_size as f64 * 3.0_f64.sqrt() / 2.0,
        )
    });
    if !(lo > 0.0 && lo < hi) {
        return Err(Error::domain(format!("invalid length bounds [{lo}, {hi}]")));
    }

    let mut params = KernelParams::uniform(variant, num_classes, config.l_init.clamp(lo, hi));
    let mut values = params.values();
    let mut adam = Adam::new(values.len());
    let mut steps = Vec::new();
    let mut step_index = 0usize;
    for epoch in 0..config.epochs {
        for (sample_index, sample) in samples.iter().enumerate() {
            let breakdown =
                sample_loss(sample, spec, &params, filter_size, &class_weights, config)?;
            if !breakdown.loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    sample: sample_index,
                });
            }
            adam.step(&mut values, &breakdown.length_grad, config.learning_rate);
            for v in values.iter_mut() {
                *v = v.clamp(lo, hi);
            }
            params.set_values(&values)?;
            log::debug!(
                "step {step_index} (epoch {epoch}, sample {sample_index}): \
                 loss {:.6}, {} gt in window, {} outside",
                breakdown.loss,
                breakdown.counted_gt,
                breakdown.skipped_gt
            );
            steps.push(TrainStep {
                step: step_index,
                epoch,
                sample: sample_index,
                loss: breakdown.loss,
                lengths: values.clone(),
            });
            step_index += 1;
        }
    }
    Ok(TrainResult {
        params,
        steps,
        class_weights,
    })
}
