//! `convbki eval` — score a map against ground-truth frames.
//!
//! Prints the report as JSON (or writes it to --out). Ground-truth points
//! whose voxel holds no evidence fall back to the classes in --fallback
//! when given — typically the raw input frames — matching an evaluation
//! protocol that scores every point rather than only the mapped ones.

use std::fs;
use std::path::PathBuf;

use convbki::config::MapConfig;
use convbki::eval::{evaluate, EvalOptions};
use convbki::frame_io::load_sequence;
use convbki::{Error, GlobalMap, Result, SemanticPoint};

#[derive(clap::Args)]
pub struct Args {
    /// Map file produced by build-map.
    #[arg(long)]
    pub map: PathBuf,
    /// Directory of ground-truth frames.
    #[arg(long)]
    pub gt: PathBuf,
    /// Pose file for the ground-truth frames.
    #[arg(long)]
    pub poses: PathBuf,
    /// Mapping configuration (key = value text); supplies the resolution.
    #[arg(long)]
    pub config: PathBuf,
    /// Frames whose labels stand in for unmapped points (same layout as
    /// --gt).
    #[arg(long)]
    pub fallback: Option<PathBuf>,
    /// Only score points within this range of the ego, meters.
    #[arg(long)]
    pub max_range: Option<f64>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: Args) -> Result<()> {
    let config = MapConfig::from_file(&args.config)?;
    let map = GlobalMap::load(&args.map)?;
    if map.num_classes != config.num_classes {
        return Err(Error::Config(format!(
            "{}: map has {} classes but the config says {}",
            args.map.display(),
            map.num_classes,
            config.num_classes
        )));
    }

    let gt_frames = load_sequence(&args.gt, &args.poses, config.num_classes)?;
    let fallback: Option<Vec<Vec<usize>>> = match &args.fallback {
        Some(dir) => Some(
            load_sequence(dir, &args.poses, config.num_classes)?
                .iter()
                .map(|f| f.points.iter().map(SemanticPoint::hard_class).collect())
                .collect(),
        ),
        None => None,
    };

    let options = EvalOptions {
        max_range: args.max_range,
    };
    let report = evaluate(
        &map,
        &gt_frames,
        fallback.as_deref(),
        config.resolution,
        &options,
    )?;

    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    match &args.out {
        Some(path) => {
            fs::write(path, json.as_bytes()).map_err(|e| Error::io(path, e))?;
            println!(
                "mIoU {:.2}% over {} points ({} via fallback, {} skipped); wrote {}",
                report.miou_pct,
                report.evaluated,
                report.fallback_used,
                report.skipped,
                path.display()
            );
        }
        None => println!("{json}"),
    }
    Ok(())
}
