//! `convbki bench` — accuracy/latency/memory sweeps on a synthetic scene.
//!
//! Runs the full pipeline once per setting: sweep the filter size at fixed
//! resolution, then the resolution at fixed filter size. Each sweep is
//! printed as a table and written as a CSV.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use convbki::config::MapConfig;
use convbki::nalgebra::Vector3;
use convbki::sweep::{filter_size_sweep, resolution_sweep, SweepRow};
use convbki::synth::{generate, SynthConfig};
use convbki::{Error, Result};

#[derive(clap::Args)]
pub struct Args {
    /// Directory for the sweep CSVs.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub frames: usize,
    #[arg(long, default_value_t = 4000)]
    pub points_per_frame: usize,
    /// Filter edge lengths to sweep (odd).
    #[arg(long, value_delimiter = ',', default_values_t = [3usize, 5, 7, 9])]
    pub filter_sizes: Vec<usize>,
    /// Voxel resolutions to sweep, meters.
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.2, 0.4])]
    pub resolutions: Vec<f64>,
    /// Kernel length scale used for every setting, meters.
    #[arg(long, default_value_t = 0.4)]
    pub length: f64,
}

/// Window bounds divisible by 0.1/0.2/0.4 that contain the default scene.
fn bench_config() -> MapConfig {
    MapConfig {
        bounds_min: Vector3::new(-7.2, -7.2, -0.8),
        bounds_max: Vector3::new(7.2, 7.2, 3.2),
        ..MapConfig::default()
    }
}

fn write_rows(path: &PathBuf, parameter_name: &str, rows: &[SweepRow]) -> Result<()> {
    let mut text = format!("{parameter_name},median_update_ms,miou_pct,map_bytes\n");
    for row in rows {
        text.push_str(&format!(
            "{},{:.3},{:.2},{}\n",
            row.parameter, row.median_update_ms, row.miou_pct, row.map_bytes
        ));
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(text.as_bytes())
        .map_err(|e| Error::io(path, e))
}

fn print_table(title: &str, parameter_name: &str, rows: &[SweepRow]) {
    println!("{title}");
    println!(
        "  {parameter_name:>12}  {:>16}  {:>8}  {:>12}",
        "median ms", "mIoU %", "bytes"
    );
    for row in rows {
        println!(
            "  {:>12}  {:>16.3}  {:>8.2}  {:>12}",
            row.parameter, row.median_update_ms, row.miou_pct, row.map_bytes
        );
    }
}

pub fn run(args: Args) -> Result<()> {
    let scene = generate(
        args.seed,
        &SynthConfig {
            num_frames: args.frames,
            points_per_frame: args.points_per_frame,
            ..SynthConfig::default()
        },
    )?;
    let base = bench_config();

    fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;

    let filter_rows = filter_size_sweep(&scene, &base, &args.filter_sizes, args.length)?;
    print_table(
        &format!("filter-size sweep at {} m resolution", base.resolution),
        "filter_size",
        &filter_rows,
    );
    let filter_csv = args.out_dir.join("filter_size.csv");
    write_rows(&filter_csv, "filter_size", &filter_rows)?;

    let resolution_rows = resolution_sweep(&scene, &base, &args.resolutions, args.length)?;
    print_table(
        &format!("resolution sweep at filter size {}", base.filter_size),
        "resolution",
        &resolution_rows,
    );
    let resolution_csv = args.out_dir.join("resolution.csv");
    write_rows(&resolution_csv, "resolution", &resolution_rows)?;

    println!(
        "wrote {} and {}",
        filter_csv.display(),
        resolution_csv.display()
    );
    Ok(())
}
