//! `convbki build-map` — fuse a frame sequence into a map file.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use convbki::config::MapConfig;
use convbki::frame_io::{frame_label_mode, load_sequence};
use convbki::kernel::load_kernel_file;
use convbki::update::FrameStats;
use convbki::{build_filter, Error, GlobalMap, KernelParams, Result};

#[derive(clap::Args)]
pub struct Args {
    /// Directory of frame files (.csv or .bin), ordered by name.
    #[arg(long)]
    pub frames: PathBuf,
    /// Pose file: one row-major 3x4 [R | t] per line.
    #[arg(long)]
    pub poses: PathBuf,
    /// Mapping configuration (key = value text).
    #[arg(long)]
    pub config: PathBuf,
    /// Trained kernel parameters; omit to use a uniform length scale.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Kernel length scale in meters when no --params file is given.
    #[arg(long, default_value_t = 0.5)]
    pub length: f64,
    /// Output map file.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional per-frame timing/throughput CSV.
    #[arg(long)]
    pub timing_csv: Option<PathBuf>,
}

/// The kernel parameters to fuse with: a trained file when given (checked
/// against the config's geometry), a uniform fallback otherwise.
fn resolve_params(args: &Args, config: &MapConfig) -> Result<KernelParams> {
    let Some(path) = &args.params else {
        return Ok(KernelParams::uniform(
            config.kernel_variant,
            config.num_classes,
            args.length,
        ));
    };
    let file = load_kernel_file(path)?;
    if file.num_classes != config.num_classes
        || file.filter_size != config.filter_size
        || file.resolution != config.resolution
    {
        return Err(Error::Config(format!(
            "{}: trained for {} classes, filter {}, resolution {}; config says {}, {}, {}",
            path.display(),
            file.num_classes,
            file.filter_size,
            file.resolution,
            config.num_classes,
            config.filter_size,
            config.resolution
        )));
    }
    Ok(file.params)
}

fn write_timing_csv(path: &PathBuf, stats: &[FrameStats]) -> Result<()> {
    let mut text = String::from("frame,points_in,skipped,upserts,evicted,update_ms\n");
    for s in stats {
        text.push_str(&format!(
            "{},{},{},{},{},{:.3}\n",
            s.frame, s.points_in, s.skipped, s.upserts, s.evicted, s.update_ms
        ));
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(text.as_bytes())
        .map_err(|e| Error::io(path, e))
}

pub fn run(args: Args) -> Result<()> {
    let config = MapConfig::from_file(&args.config)?;
    let spec = config.grid_spec()?;
    let params = resolve_params(&args, &config)?;
    let filter = build_filter(
        &params,
        config.filter_size,
        config.resolution,
        config.num_classes,
    )?;

    // The config declares the label encoding; a mismatch usually means the
    // wrong directory or the wrong config.
    if let Some(path) = first_frame_path(&args.frames)? {
        if let Some(mode) = frame_label_mode(&path, config.num_classes)? {
            if mode != config.label_mode {
                return Err(Error::Config(format!(
                    "{}: {} labels but the config declares label_mode = {}",
                    path.display(),
                    mode.as_str(),
                    config.label_mode.as_str()
                )));
            }
        }
    }
    let frames = load_sequence(&args.frames, &args.poses, config.num_classes)?;

    let mut map = GlobalMap::new(config.num_classes, config.prior, config.gc_window)?;
    let stats = convbki::sequential_fuse(&frames, &mut map, &spec, &filter)?;
    map.save(&args.out)?;

    if let Some(path) = &args.timing_csv {
        write_timing_csv(path, &stats)?;
    }

    let total_points: usize = stats.iter().map(|s| s.points_in).sum();
    let mut latencies: Vec<f64> = stats.iter().map(|s| s.update_ms).collect();
    latencies.sort_by(|a, b| a.partial_cmp(b).expect("finite timings"));
    let median = latencies
        .get(latencies.len() / 2)
        .copied()
        .unwrap_or_default();
    println!(
        "fused {} frames ({} points) into {} cells; median update {:.2} ms; wrote {}",
        stats.len(),
        total_points,
        map.len(),
        median,
        args.out.display()
    );
    Ok(())
}

/// First frame file in name order, if any.
fn first_frame_path(dir: &PathBuf) -> Result<Option<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("csv") | Some("bin")
            )
        })
        .collect();
    paths.sort();
    Ok(paths.into_iter().next())
}
