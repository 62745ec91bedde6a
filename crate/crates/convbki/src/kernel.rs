//! Sparse compactly-supported kernel, its length-scale gradient, and the
//! discretized depthwise filters built from it.
//!
//! The kernel drops to exactly zero at distance `l`, so each class's filter
//! has finite support and the map update stays local. Three parameterizations
//! are supported: one shared length, one length per class, and a per-class
//! horizontal/vertical pair whose product separates ground-parallel from
//! vertical spread.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::Vector3;
use ndarray::Array4;

use crate::error::{Error, Result};

/// Kernel scale σ₀. Fixed at 1 so filter weights are direct class-evidence
/// fractions in `[0, 1]`; the Dirichlet update has no use for a free gain
/// (it would only rescale all concentrations uniformly).
pub const SIGMA0: f64 = 1.0;

/// Evaluates the kernel profile without domain checks. `d` must be ≥ 0 and
/// `l` > 0.
#[inline]
fn kernel_value(d: f64, l: f64) -> f64 {
    debug_assert!(d >= 0.0 && l > 0.0);
    if d >= l {
        return 0.0;
    }
    let u = d / l;
    let angle = 2.0 * PI * u;
    let value = SIGMA0 * ((2.0 + angle.cos()) / 3.0 * (1.0 - u) + angle.sin() / (2.0 * PI));
    // The profile is non-negative on [0, l) analytically; clamp the tiny
    // negative float residue that can appear just inside the support edge.
    value.max(0.0)
}

/// Derivative of the profile with respect to the length scale, without
/// domain checks.
#[inline]
fn kernel_grad_value(d: f64, l: f64) -> f64 {
    debug_assert!(d >= 0.0 && l > 0.0);
    if d > l {
        return 0.0;
    }
    let u = d / l;
    let angle = 2.0 * PI * u;
    let (sin, cos) = angle.sin_cos();
    // dk/du, then chain through u = d/l: du/dl = -d/l².
    let dk_du = SIGMA0 * (-(2.0 * PI / 3.0) * sin * (1.0 - u) - (2.0 + cos) / 3.0 + cos);
    dk_du * (-d / (l * l))
}

fn check_kernel_domain(d: f64, l: f64) -> Result<()> {
    if !d.is_finite() || d < 0.0 {
        return Err(Error::domain(format!(
            "kernel distance must be finite and >= 0, got {d}"
        )));
    }
    if !l.is_finite() || l <= 0.0 {
        return Err(Error::domain(format!(
            "kernel length scale must be finite and > 0, got {l}"
        )));
    }
    Ok(())
}

/// Compactly-supported kernel value at distance `d` for length scale `l`:
///
/// ```text
/// k(d) = σ₀ · [ (2 + cos(2πd/l))/3 · (1 − d/l) + sin(2πd/l)/(2π) ]   for d < l
/// k(d) = 0                                                           for d ≥ l
/// ```
///
/// `k(0) = σ₀` exactly, `k` is monotone non-increasing on `[0, l]`, and the
/// support cutoff is exact (not just numerically small).
pub fn sparse_kernel(d: f64, l: f64) -> Result<f64> {
    check_kernel_domain(d, l)?;
    Ok(kernel_value(d, l))
}

/// Analytic `∂k/∂l` at distance `d`. Zero for `d > l`; at `d = l` the
/// one-sided interior derivative is used (it is itself zero, so the
/// gradient is continuous across the support edge).
pub fn sparse_kernel_grad_length(d: f64, l: f64) -> Result<f64> {
    check_kernel_domain(d, l)?;
    Ok(kernel_grad_value(d, l))
}

/// Which length-scale layout a kernel uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelVariant {
    /// One length shared by all classes and directions.
    Single,
    /// One isotropic length per class.
    PerClass,
    /// Per class, a horizontal length for the xy-plane and a vertical
    /// length for z; the kernel is the product of the two profiles.
    Compound,
}

impl KernelVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            KernelVariant::Single => "single",
            KernelVariant::PerClass => "per_class",
            KernelVariant::Compound => "compound",
        }
    }
}

impl FromStr for KernelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(KernelVariant::Single),
            "per_class" => Ok(KernelVariant::PerClass),
            "compound" => Ok(KernelVariant::Compound),
            other => Err(Error::config(format!(
                "unknown kernel variant {other:?} (expected single, per_class, or compound)"
            ))),
        }
    }
}

/// Horizontal/vertical length pair for one class of a compound kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompoundLength {
    pub horizontal: f64,
    pub vertical: f64,
}

/// Learnable kernel parameters.
///
/// The canonical flat parameter order (used by [`KernelParams::values`],
/// [`KernelParams::set_values`], and the gradient list returned by
/// [`filter_grads`]) is: `[l]` for `Single`, `[l_0, …, l_{C−1}]` for
/// `PerClass`, and class-major `[lh_0, lv_0, lh_1, lv_1, …]` for `Compound`.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelParams {
    Single { length: f64 },
    PerClass { lengths: Vec<f64> },
    Compound { lengths: Vec<CompoundLength> },
}

impl KernelParams {
    /// All lengths initialized to `l` for the given variant and class count.
    pub fn uniform(variant: KernelVariant, num_classes: usize, l: f64) -> Self {
        match variant {
            KernelVariant::Single => KernelParams::Single { length: l },
            KernelVariant::PerClass => KernelParams::PerClass {
                lengths: vec![l; num_classes],
            },
            KernelVariant::Compound => KernelParams::Compound {
                lengths: vec![
                    CompoundLength {
                        horizontal: l,
                        vertical: l,
                    };
                    num_classes
                ],
            },
        }
    }

    pub fn variant(&self) -> KernelVariant {
        match self {
            KernelParams::Single { .. } => KernelVariant::Single,
            KernelParams::PerClass { .. } => KernelVariant::PerClass,
            KernelParams::Compound { .. } => KernelVariant::Compound,
        }
    }

    /// Number of free parameters for `num_classes` classes.
    pub fn parameter_count(&self) -> usize {
        match self {
            KernelParams::Single { .. } => 1,
            KernelParams::PerClass { lengths } => lengths.len(),
            KernelParams::Compound { lengths } => 2 * lengths.len(),
        }
    }

    /// Rejects non-positive or non-finite lengths and per-class counts that
    /// disagree with `num_classes`.
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        let check = |l: f64, what: &str| -> Result<()> {
            if !l.is_finite() || l <= 0.0 {
                return Err(Error::domain(format!(
                    "{what} must be finite and > 0, got {l}"
                )));
            }
            Ok(())
        };
        match self {
            KernelParams::Single { length } => check(*length, "kernel length")?,
            KernelParams::PerClass { lengths } => {
                if lengths.len() != num_classes {
                    return Err(Error::shape(format!(
                        "per-class kernel has {} lengths but the map has {num_classes} classes",
                        lengths.len()
                    )));
                }
                for (c, &l) in lengths.iter().enumerate() {
                    check(l, &format!("kernel length for class {c}"))?;
                }
            }
            KernelParams::Compound { lengths } => {
                if lengths.len() != num_classes {
                    return Err(Error::shape(format!(
                        "compound kernel has {} length pairs but the map has {num_classes} classes",
                        lengths.len()
                    )));
                }
                for (c, pair) in lengths.iter().enumerate() {
                    check(pair.horizontal, &format!("horizontal length for class {c}"))?;
                    check(pair.vertical, &format!("vertical length for class {c}"))?;
                }
            }
        }
        Ok(())
    }

    /// The flat parameter vector in canonical order.
    pub fn values(&self) -> Vec<f64> {
        match self {
            KernelParams::Single { length } => vec![*length],
            KernelParams::PerClass { lengths } => lengths.clone(),
            KernelParams::Compound { lengths } => lengths
                .iter()
                .flat_map(|p| [p.horizontal, p.vertical])
                .collect(),
        }
    }

    /// Overwrites the parameters from a flat vector in canonical order.
    pub fn set_values(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.parameter_count() {
            return Err(Error::shape(format!(
                "expected {} kernel parameters, got {}",
                self.parameter_count(),
                values.len()
            )));
        }
        match self {
            KernelParams::Single { length } => *length = values[0],
            KernelParams::PerClass { lengths } => lengths.copy_from_slice(values),
            KernelParams::Compound { lengths } => {
                for (pair, chunk) in lengths.iter_mut().zip(values.chunks_exact(2)) {
                    pair.horizontal = chunk[0];
                    pair.vertical = chunk[1];
                }
            }
        }
        Ok(())
    }

    /// Kernel value for `class` at a metric offset from the kernel center.
    /// This is the continuous-space definition the discretized filter
    /// samples; the brute-force update route evaluates it directly.
    pub fn evaluate(&self, class: usize, offset: &Vector3<f64>) -> f64 {
        match self {
            KernelParams::Single { length } => kernel_value(offset.norm(), *length),
            KernelParams::PerClass { lengths } => kernel_value(offset.norm(), lengths[class]),
            KernelParams::Compound { lengths } => {
                let pair = &lengths[class];
                let dh = offset.xy().norm();
                kernel_value(dh, pair.horizontal) * kernel_value(offset.z.abs(), pair.vertical)
            }
        }
    }
}

/// A discretized depthwise filter: one `f×f×f` weight block per class,
/// stored as a `[C, f, f, f]` tensor. Weights are kernel values at the
/// metric offset of each tap from the center cell, so the center weight is
/// exactly 1 and the block is mirror-symmetric about it.
#[derive(Debug, Clone)]
pub struct KernelFilter {
    pub weights: Array4<f64>,
    /// Edge length of a voxel in meters; taps are `delta_r` apart.
    pub delta_r: f64,
}

impl KernelFilter {
    pub fn num_classes(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn filter_size(&self) -> usize {
        self.weights.shape()[1]
    }

    /// Tap offset of the center cell, `(f − 1) / 2`.
    pub fn radius(&self) -> usize {
        (self.filter_size() - 1) / 2
    }
}

fn check_filter_args(filter_size: usize, delta_r: f64) -> Result<()> {
    if filter_size == 0 || filter_size.is_multiple_of(2) {
        return Err(Error::domain(format!(
            "filter size must be odd and >= 1, got {filter_size}"
        )));
    }
    if !delta_r.is_finite() || delta_r <= 0.0 {
        return Err(Error::domain(format!(
            "voxel resolution must be finite and > 0, got {delta_r}"
        )));
    }
    Ok(())
}

/// Metric offset of tap `(a, b, c)` from the filter center.
#[inline]
fn tap_offset(a: usize, b: usize, c: usize, radius: usize, delta_r: f64) -> Vector3<f64> {
    Vector3::new(
        (a as f64 - radius as f64) * delta_r,
        (b as f64 - radius as f64) * delta_r,
        (c as f64 - radius as f64) * delta_r,
    )
}

/// Builds the `[C, f, f, f]` depthwise filter by sampling each class's
/// kernel at the metric offsets of the tap grid.
///
/// Length scales larger than the filter can represent are allowed — the
/// kernel support is truncated at the filter edge — but logged, since mass
/// beyond the edge is silently dropped.
pub fn build_filter(
    params: &KernelParams,
    filter_size: usize,
    delta_r: f64,
    num_classes: usize,
) -> Result<KernelFilter> {
    check_filter_args(filter_size, delta_r)?;
    params.validate(num_classes)?;

    let reach = delta_r * ((filter_size - 1) / 2 + 1) as f64;
    let longest = params.values().iter().cloned().fold(0.0_f64, f64::max);
    if longest > reach {
        log::warn!(
            "kernel length {longest} exceeds the filter reach {reach} \
             (size {filter_size}, resolution {delta_r}); support is truncated"
        );
    }

    let radius = (filter_size - 1) / 2;
    let mut weights = Array4::zeros((num_classes, filter_size, filter_size, filter_size));
    for cls in 0..num_classes {
        for a in 0..filter_size {
            for b in 0..filter_size {
                for c in 0..filter_size {
                    let off = tap_offset(a, b, c, radius, delta_r);
                    weights[[cls, a, b, c]] = params.evaluate(cls, &off);
                }
            }
        }
    }
    Ok(KernelFilter { weights, delta_r })
}

/// Per-tap callback of [`filter_grads`]: `(class, offset, a, b, c)`.
type TapVisitor<'a> = Box<dyn FnMut(usize, &Vector3<f64>, usize, usize, usize) + 'a>;

/// Derivative of every filter weight with respect to each kernel parameter,
/// one `[C, f, f, f]` tensor per parameter in the canonical order of
/// [`KernelParams::values`].
pub fn filter_grads(
    params: &KernelParams,
    filter_size: usize,
    delta_r: f64,
    num_classes: usize,
) -> Result<Vec<Array4<f64>>> {
    check_filter_args(filter_size, delta_r)?;
    params.validate(num_classes)?;

    let radius = (filter_size - 1) / 2;
    let shape = (num_classes, filter_size, filter_size, filter_size);
    let mut grads: Vec<Array4<f64>> = (0..params.parameter_count())
        .map(|_| Array4::zeros(shape))
        .collect();

    let for_each_tap = |mut fill: TapVisitor| {
        for cls in 0..num_classes {
            for a in 0..filter_size {
                for b in 0..filter_size {
                    for c in 0..filter_size {
                        let off = tap_offset(a, b, c, radius, delta_r);
                        fill(cls, &off, a, b, c);
                    }
                }
            }
        }
    };

    match params {
        KernelParams::Single { length } => {
            let l = *length;
            for_each_tap(Box::new(|cls, off, a, b, c| {
                grads[0][[cls, a, b, c]] = kernel_grad_value(off.norm(), l);
            }));
        }
        KernelParams::PerClass { lengths } => {
            let lengths = lengths.clone();
            for_each_tap(Box::new(|cls, off, a, b, c| {
                // Channel `cls` depends only on its own length.
                grads[cls][[cls, a, b, c]] = kernel_grad_value(off.norm(), lengths[cls]);
            }));
        }
        KernelParams::Compound { lengths } => {
            let lengths = lengths.clone();
            for_each_tap(Box::new(|cls, off, a, b, c| {
                let pair = &lengths[cls];
                let dh = off.xy().norm();
                let dv = off.z.abs();
                let kh = kernel_value(dh, pair.horizontal);
                let kv = kernel_value(dv, pair.vertical);
                // Product rule: the pair's two lengths each scale one factor.
                grads[2 * cls][[cls, a, b, c]] = kernel_grad_value(dh, pair.horizontal) * kv;
                grads[2 * cls + 1][[cls, a, b, c]] = kh * kernel_grad_value(dv, pair.vertical);
            }));
        }
    }
    Ok(grads)
}

/// A kernel parameterization together with the discretization settings it
/// was trained or configured for, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelFile {
    pub params: KernelParams,
    pub num_classes: usize,
    pub filter_size: usize,
    pub resolution: f64,
}

/// Writes kernel parameters as a `key=value` text file:
///
/// ```text
/// variant=compound
/// num_classes=2
/// lengths=0.5,0.2,0.5,0.2
/// filter_size=5
/// resolution=0.2
/// ```
///
/// `lengths` follows the canonical parameter order ([`KernelParams::values`]).
pub fn save_kernel_file(path: &Path, file: &KernelFile) -> Result<()> {
    file.params.validate(file.num_classes)?;
    check_filter_args(file.filter_size, file.resolution)?;
    let mut text = String::new();
    let _ = writeln!(text, "variant={}", file.params.variant().as_str());
    let _ = writeln!(text, "num_classes={}", file.num_classes);
    let lengths: Vec<String> = file.params.values().iter().map(f64::to_string).collect();
    let _ = writeln!(text, "lengths={}", lengths.join(","));
    let _ = writeln!(text, "filter_size={}", file.filter_size);
    let _ = writeln!(text, "resolution={}", file.resolution);
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a kernel parameter file written by [`save_kernel_file`]. Unknown
/// or missing keys, count mismatches, and invalid values are rejected.
pub fn load_kernel_file(path: &Path) -> Result<KernelFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut variant: Option<KernelVariant> = None;
    let mut num_classes: Option<usize> = None;
    let mut lengths: Option<Vec<f64>> = None;
    let mut filter_size: Option<usize> = None;
    let mut resolution: Option<f64> = None;

    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::config(format!(
                "{}:{}: expected key=value, got {line:?}",
                path.display(),
                idx + 1
            ))
        })?;
        let bad = |what: &str| {
            Error::config(format!(
                "{}:{}: invalid {what}: {value:?}",
                path.display(),
                idx + 1
            ))
        };
        match key.trim() {
            "variant" => variant = Some(value.trim().parse()?),
            "num_classes" => {
                num_classes = Some(value.trim().parse().map_err(|_| bad("class count"))?)
            }
            "lengths" => {
                let parsed: std::result::Result<Vec<f64>, _> =
                    value.split(',').map(|v| v.trim().parse::<f64>()).collect();
                lengths = Some(parsed.map_err(|_| bad("length list"))?);
            }
            "filter_size" => {
                filter_size = Some(value.trim().parse().map_err(|_| bad("filter size"))?)
            }
            "resolution" => resolution = Some(value.trim().parse().map_err(|_| bad("resolution"))?),
            other => {
                return Err(Error::config(format!(
                    "{}:{}: unknown key {other:?}",
                    path.display(),
                    idx + 1
                )))
            }
        }
    }

    let missing = |what: &str| Error::config(format!("{}: missing key {what:?}", path.display()));
    let variant = variant.ok_or_else(|| missing("variant"))?;
    let num_classes = num_classes.ok_or_else(|| missing("num_classes"))?;
    let lengths = lengths.ok_or_else(|| missing("lengths"))?;
    let filter_size = filter_size.ok_or_else(|| missing("filter_size"))?;
    let resolution = resolution.ok_or_else(|| missing("resolution"))?;

    let mut params = KernelParams::uniform(variant, num_classes, 1.0);
    if lengths.len() != params.parameter_count() {
        return Err(Error::config(format!(
            "{}: variant {} with {num_classes} classes needs {} lengths, got {}",
            path.display(),
            variant.as_str(),
            params.parameter_count(),
            lengths.len()
        )));
    }
    params.set_values(&lengths)?;
    params.validate(num_classes)?;
    check_filter_args(filter_size, resolution)?;
    Ok(KernelFile {
        params,
        num_classes,
        filter_size,
        resolution,
    })
}
