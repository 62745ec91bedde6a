//! `convbki export-ply` — write a map as an ASCII PLY point cloud.

use std::path::PathBuf;

use convbki::config::MapConfig;
use convbki::ply::{write_ply_file, PlyOptions};
use convbki::{GlobalMap, Result};

#[derive(clap::Args)]
pub struct Args {
    /// Map file produced by build-map.
    #[arg(long)]
    pub map: PathBuf,
    /// Mapping configuration; supplies resolution and variance threshold.
    #[arg(long)]
    pub config: PathBuf,
    /// Output PLY file.
    #[arg(long)]
    pub out: PathBuf,
    /// Export every voxel, ignoring the variance threshold.
    #[arg(long)]
    pub keep_all: bool,
}

pub fn run(args: Args) -> Result<()> {
    let config = MapConfig::from_file(&args.config)?;
    let map = GlobalMap::load(&args.map)?;
    let options = PlyOptions {
        variance_threshold: if args.keep_all {
            None
        } else {
            Some(config.variance_threshold)
        },
    };
    let vertices = write_ply_file(&map, config.resolution, &options, &args.out)?;
    println!(
        "exported {vertices} of {} voxels to {}",
        map.len(),
        args.out.display()
    );
    Ok(())
}
