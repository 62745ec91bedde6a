//! `convbki synth` — write a synthetic sequence to disk.
//!
//! Produces `frames/` (noisy labels, the mapping input), `gt/` (the same
//! points with true labels), and `poses.txt`, laid out so `build-map`,
//! `train`, and `eval` can consume the directory directly.

use std::fs;
use std::path::PathBuf;

use convbki::frame_io::{write_frame, write_poses, LabelMode};
use convbki::synth::{generate, SynthConfig};
use convbki::{Error, Result};

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
pub enum FrameFormat {
    Bin,
    Csv,
}

impl FrameFormat {
    fn extension(self) -> &'static str {
        match self {
            FrameFormat::Bin => "bin",
            FrameFormat::Csv => "csv",
        }
    }
}

#[derive(clap::Args)]
pub struct Args {
    /// Directory to create the sequence in.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub frames: usize,
    #[arg(long, default_value_t = 4000)]
    pub points_per_frame: usize,
    /// Probability of flipping each point's label to a wrong class.
    #[arg(long, default_value_t = 0.3)]
    pub flip_prob: f64,
    /// Half-width of the scene footprint, meters.
    #[arg(long, default_value_t = 5.0)]
    pub extent: f64,
    /// Ego translation per frame along +x, meters.
    #[arg(long, default_value_t = 0.05)]
    pub velocity: f64,
    #[arg(long, value_enum, default_value_t = FrameFormat::Bin)]
    pub format: FrameFormat,
}

pub fn run(args: Args) -> Result<()> {
    let config = SynthConfig {
        extent: args.extent,
        points_per_frame: args.points_per_frame,
        num_frames: args.frames,
        ego_velocity: args.velocity,
        flip_prob: args.flip_prob,
        ..SynthConfig::default()
    };
    let scene = generate(args.seed, &config)?;
    let gt_frames = scene.gt_frames();

    let frames_dir = args.out.join("frames");
    let gt_dir = args.out.join("gt");
    fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
    fs::create_dir_all(&gt_dir).map_err(|e| Error::io(&gt_dir, e))?;

    let ext = args.format.extension();
    for (noisy, truth) in scene.frames.iter().zip(&gt_frames) {
        let name = format!("{:06}.{ext}", noisy.index);
        write_frame(frames_dir.join(&name), &noisy.points, LabelMode::Hard)?;
        write_frame(gt_dir.join(&name), &truth.points, LabelMode::Hard)?;
    }
    let poses: Vec<_> = scene.frames.iter().map(|f| f.pose.clone()).collect();
    write_poses(args.out.join("poses.txt"), &poses)?;

    println!(
        "wrote {} frames x {} points ({} classes, flip {}) to {}",
        scene.frames.len(),
        args.points_per_frame,
        scene.num_classes,
        args.flip_prob,
        args.out.display()
    );
    Ok(())
}
