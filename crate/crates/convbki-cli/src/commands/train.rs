//! `convbki train` — fit kernel length scales on a labeled sequence.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use convbki::config::MapConfig;
use convbki::frame_io::load_sequence;
use convbki::kernel::{save_kernel_file, KernelFile};
use convbki::train::{make_samples, train, TrainConfig, TrainResult};
use convbki::{Error, Result};

#[derive(clap::Args)]
pub struct Args {
    /// Directory of input frames with (possibly noisy) labels.
    #[arg(long)]
    pub frames: PathBuf,
    /// Pose file shared by the input and ground-truth frames.
    #[arg(long)]
    pub poses: PathBuf,
    /// Directory of ground-truth frames, aligned with --frames.
    #[arg(long)]
    pub gt: PathBuf,
    /// Mapping configuration (key = value text).
    #[arg(long)]
    pub config: PathBuf,
    /// Output kernel parameter file.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional per-step loss CSV.
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
    #[arg(long, default_value_t = 0.007)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 1)]
    pub epochs: usize,
    /// Frames fused per training sample.
    #[arg(long, default_value_t = 10)]
    pub frames_per_sample: usize,
    /// Initial kernel length scale, meters.
    #[arg(long, default_value_t = 0.5)]
    pub l_init: f64,
}

fn write_loss_csv(path: &PathBuf, result: &TrainResult) -> Result<()> {
    let num_params = result.params.values().len();
    let mut text = String::from("step,epoch,sample,loss");
    for p in 0..num_params {
        text.push_str(&format!(",l{p}"));
    }
    text.push('\n');
    for step in &result.steps {
        text.push_str(&format!(
            "{},{},{},{}",
            step.step, step.epoch, step.sample, step.loss
        ));
        for l in &step.lengths {
            text.push_str(&format!(",{l}"));
        }
        text.push('\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(text.as_bytes())
        .map_err(|e| Error::io(path, e))
}

pub fn run(args: Args) -> Result<()> {
    let config = MapConfig::from_file(&args.config)?;
    let spec = config.grid_spec()?;

    let frames = load_sequence(&args.frames, &args.poses, config.num_classes)?;
    let gt_frames = load_sequence(&args.gt, &args.poses, config.num_classes)?;
    let samples = make_samples(&frames, &gt_frames, args.frames_per_sample)?;

    let train_config = TrainConfig {
        learning_rate: args.learning_rate,
        epochs: args.epochs,
        frames_per_sample: args.frames_per_sample,
        l_init: args.l_init,
        prior_alpha: config.prior,
        ..TrainConfig::default()
    };
    let result = train(
        &samples,
        &spec,
        config.kernel_variant,
        config.filter_size,
        &train_config,
    )?;

    save_kernel_file(
        &args.out,
        &KernelFile {
            params: result.params.clone(),
            num_classes: config.num_classes,
            filter_size: config.filter_size,
            resolution: config.resolution,
        },
    )?;
    if let Some(path) = &args.loss_csv {
        write_loss_csv(path, &result)?;
    }

    let first_loss = result.steps.first().map(|s| s.loss).unwrap_or(f64::NAN);
    let last_loss = result.steps.last().map(|s| s.loss).unwrap_or(f64::NAN);
    let lengths: Vec<String> = result
        .params
        .values()
        .iter()
        .map(|l| format!("{l:.4}"))
        .collect();
    println!(
        "trained on {} samples over {} epochs; loss {:.4} -> {:.4}; lengths [{}]; wrote {}",
        samples.len(),
        args.epochs,
        first_loss,
        last_loss,
        lengths.join(", "),
        args.out.display()
    );
    Ok(())
}
