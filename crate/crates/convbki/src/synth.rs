//! Deterministic synthetic street scenes for tests and benchmarks.
//!
//! A static scene of four classes — a ground plane, thin vertical poles,
//! axis-aligned walls, and box-shaped vehicles — is sampled by a sensor
//! that translates along +x. Every point carries its true class and a
//! label that is flipped to a random wrong class with a configurable
//! probability, so the generator provides matched noisy-input and
//! ground-truth views of the same points.
//!
//! Structures float at z ≥ 0.2 while ground points stay in z ∈ [0, 0.05]:
//! at the default 0.2 m resolution no voxel ever mixes classes, so a
//! noise-free scene is mappable with zero error.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::grid::{FrameRecord, SemanticPoint};

pub const GROUND: usize = 0;
pub const POLE: usize = 1;
pub const WALL: usize = 2;
pub const VEHICLE: usize = 3;
pub const NUM_CLASSES: usize = 4;

/// Fraction of each frame's points drawn from each class, in class order.
const CLASS_FRACTIONS: [f64; NUM_CLASSES] = [0.40, 0.20, 0.25, 0.15];

const POLE_RADIUS: f64 = 0.06;
const STRUCTURE_MIN_Z: f64 = 0.2;
const POLE_TOP_Z: f64 = 2.6;
const WALL_TOP_Z: f64 = 2.4;
const VEHICLE_TOP_Z: f64 = 1.6;
const VEHICLE_HALF: [f64; 2] = [2.1, 0.9]; // xy half-extents of the box
const GROUND_ROUGHNESS: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    /// Half-width of the square scene footprint, meters.
    pub extent: f64,
    pub points_per_frame: usize,
    pub num_frames: usize,
    /// Sensor translation per frame along +x, meters.
    pub ego_velocity: f64,
    /// Probability that a point's label is flipped to a wrong class.
    pub flip_prob: f64,
    pub num_poles: usize,
    pub num_walls: usize,
    pub num_vehicles: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            extent: 5.0,
            points_per_frame: 4000,
            num_frames: 50,
            ego_velocity: 0.05,
            flip_prob: 0.3,
            num_poles: 10,
            num_walls: 4,
            num_vehicles: 3,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if !self.extent.is_finite() || self.extent < 2.0 {
            return Err(Error::domain(format!(
                "scene extent must be >= 2 m, got {}",
                self.extent
            )));
        }
        if self.points_per_frame == 0 || self.num_frames == 0 {
            return Err(Error::domain(
                "points_per_frame and num_frames must be >= 1",
            ));
        }
        if !self.ego_velocity.is_finite() || self.ego_velocity < 0.0 {
            return Err(Error::domain(format!(
                "ego velocity must be finite and >= 0, got {}",
                self.ego_velocity
            )));
        }
        if !(0.0..1.0).contains(&self.flip_prob) {
            return Err(Error::domain(format!(
                "flip probability must be in [0, 1), got {}",
                self.flip_prob
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Wall {
    center: Vector3<f64>,
    /// true: spans x; false: spans y.
    along_x: bool,
    length: f64,
}

#[derive(Debug, Clone)]
struct Scene {
    poles: Vec<Vector3<f64>>, // base centers at z = 0
    walls: Vec<Wall>,
    vehicles: Vec<Vector3<f64>>, // box centers in xy at z = 0
}

/// A generated sequence: noisy-label frames (sensor-frame points) plus the
/// true class of every point, index-aligned with the frames.
#[derive(Debug, Clone)]
pub struct SynthScene {
    pub frames: Vec<FrameRecord>,
    pub gt_classes: Vec<Vec<usize>>,
    pub num_classes: usize,
}

impl SynthScene {
    /// The same frames with true one-hot labels — the ground-truth view.
    pub fn gt_frames(&self) -> Vec<FrameRecord> {
        self.frames
            .iter()
            .zip(&self.gt_classes)
            .map(|(frame, classes)| FrameRecord {
                index: frame.index,
                points: frame
                    .points
                    .iter()
                    .zip(classes)
                    .map(|(p, &c)| {
                        SemanticPoint::one_hot(p.position, c, self.num_classes)
                            .expect("generated classes are in range")
                    })
                    .collect(),
                pose: frame.pose.clone(),
            })
            .collect()
    }

    /// Per-frame, per-point class of the noisy input labels, as needed for
    /// the evaluation fallback.
    pub fn fallback_classes(&self) -> Vec<Vec<usize>> {
        self.frames
            .iter()
            .map(|f| f.points.iter().map(SemanticPoint::hard_class).collect())
            .collect()
    }
}

fn sample_scene(rng: &mut ChaCha8Rng, config: &SynthConfig) -> Scene {
    let margin = 1.0;
    let lo = -config.extent + margin;
    let hi = config.extent - margin;
    let poles = (0..config.num_poles)
        .map(|_| Vector3::new(rng.gen_range(lo..hi), rng.gen_range(lo..hi), 0.0))
        .collect();
    let walls = (0..config.num_walls)
        .map(|_| Wall {
            center: Vector3::new(rng.gen_range(lo..hi), rng.gen_range(lo..hi), 0.0),
            along_x: rng.gen_bool(0.5),
            length: rng.gen_range(2.0..5.0),
        })
        .collect();
    let vehicles = (0..config.num_vehicles)
        .map(|_| Vector3::new(rng.gen_range(lo..hi), rng.gen_range(lo..hi), 0.0))
        .collect();
    Scene {
        poles,
        walls,
        vehicles,
    }
}

/// A point on the class's surface, in the global frame.
fn sample_point(
    rng: &mut ChaCha8Rng,
    scene: &Scene,
    config: &SynthConfig,
    class: usize,
) -> Vector3<f64> {
    let e = config.extent;
    match class {
        POLE => {
            let pole = &scene.poles[rng.gen_range(0..scene.poles.len())];
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            let z = rng.gen_range(STRUCTURE_MIN_Z..POLE_TOP_Z);
            Vector3::new(
                pole.x + POLE_RADIUS * theta.cos(),
                pole.y + POLE_RADIUS * theta.sin(),
                z,
            )
        }
        WALL => {
            let wall = &scene.walls[rng.gen_range(0..scene.walls.len())];
            let s = rng.gen_range(-wall.length / 2.0..wall.length / 2.0);
            let z = rng.gen_range(STRUCTURE_MIN_Z..WALL_TOP_Z);
            if wall.along_x {
                Vector3::new(wall.center.x + s, wall.center.y, z)
            } else {
                Vector3::new(wall.center.x, wall.center.y + s, z)
            }
        }
        VEHICLE => {
            let center = &scene.vehicles[rng.gen_range(0..scene.vehicles.len())];
            let (hx, hy) = (VEHICLE_HALF[0], VEHICLE_HALF[1]);
            // Pick among the top face and the four sides by surface area.
            let top = 4.0 * hx * hy;
            let side_x = 2.0 * (2.0 * hx) * (VEHICLE_TOP_Z - STRUCTURE_MIN_Z);
            let side_y = 2.0 * (2.0 * hy) * (VEHICLE_TOP_Z - STRUCTURE_MIN_Z);
            let pick = rng.gen_range(0.0..top + side_x + side_y);
            if pick < top {
                Vector3::new(
                    center.x + rng.gen_range(-hx..hx),
                    center.y + rng.gen_range(-hy..hy),
                    VEHICLE_TOP_Z,
                )
            } else if pick < top + side_x {
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                Vector3::new(
                    center.x + rng.gen_range(-hx..hx),
                    center.y + sign * hy,
                    rng.gen_range(STRUCTURE_MIN_Z..VEHICLE_TOP_Z),
                )
            } else {
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                Vector3::new(
                    center.x + sign * hx,
                    center.y + rng.gen_range(-hy..hy),
                    rng.gen_range(STRUCTURE_MIN_Z..VEHICLE_TOP_Z),
                )
            }
        }
        _ => Vector3::new(
            rng.gen_range(-e..e),
            rng.gen_range(-e..e),
            rng.gen_range(0.0..GROUND_ROUGHNESS),
        ),
    }
}

fn round_to_f32(v: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(v.x as f32 as f64, v.y as f32 as f64, v.z as f32 as f64)
}

/// Generates a scene deterministically from the seed: equal seeds and
/// configs give bitwise-identical output on every platform.
pub fn generate(seed: u64, config: &SynthConfig) -> Result<SynthScene> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = sample_scene(&mut rng, config);

    let start_x = -config.ego_velocity * (config.num_frames as f64 - 1.0) / 2.0;
    let mut frames = Vec::with_capacity(config.num_frames);
    let mut gt_classes = Vec::with_capacity(config.num_frames);
    for frame_index in 0..config.num_frames {
        let ego = Vector3::new(start_x + config.ego_velocity * frame_index as f64, 0.0, 0.0);
        let pose = Pose::from_translation(ego);
        let mut points = Vec::with_capacity(config.points_per_frame);
        let mut classes = Vec::with_capacity(config.points_per_frame);
        for _ in 0..config.points_per_frame {
            let mut class = pick_class(&mut rng);
            // Classes without instances fall back to ground.
            let available = match class {
                POLE => !scene.poles.is_empty(),
                WALL => !scene.walls.is_empty(),
                VEHICLE => !scene.vehicles.is_empty(),
                _ => true,
            };
            if !available {
                class = GROUND;
            }
            let global = sample_point(&mut rng, &scene, config, class);
            // Store sensor-frame coordinates at f32 precision, the payload
            // precision of the frame file formats.
            let sensor = round_to_f32(&(global - ego));
            let label_class = if rng.gen_bool(config.flip_prob) {
                let other = rng.gen_range(0..NUM_CLASSES - 1);
                if other >= class {
                    other + 1
                } else {
                    other
                }
            } else {
                class
            };
            points.push(SemanticPoint::one_hot(sensor, label_class, NUM_CLASSES)?);
            classes.push(class);
        }
        frames.push(FrameRecord {
            index: frame_index,
            points,
            pose,
        });
        gt_classes.push(classes);
    }
    Ok(SynthScene {
        frames,
        gt_classes,
        num_classes: NUM_CLASSES,
    })
}

fn pick_class(rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen_range(0.0..1.0);
    let mut acc = 0.0;
    for (class, &frac) in CLASS_FRACTIONS.iter().enumerate() {
        acc += frac;
        if u < acc {
            return class;
        }
    }
    NUM_CLASSES - 1
}
