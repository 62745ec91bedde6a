//! One module per subcommand; each exposes an `Args` struct and a
//! `run(args) -> convbki::Result<()>`.

pub mod bench;
pub mod build_map;
pub mod eval;
pub mod export_ply;
pub mod synth;
pub mod train;

#[derive(clap::Subcommand)]
pub enum Command {
    /// Generate a synthetic labeled sequence (frames, ground truth, poses).
    Synth(synth::Args),
    /// Fuse a frame sequence into a map file.
    BuildMap(build_map::Args),
    /// Fit kernel length scales on a labeled sequence.
    Train(train::Args),
    /// Score a map against ground-truth frames.
    Eval(eval::Args),
    /// Write a map as an ASCII PLY point cloud.
    ExportPly(export_ply::Args),
    /// Run resolution and filter-size sweeps on a synthetic scene.
    Bench(bench::Args),
}

impl Command {
    pub fn run(self) -> convbki::Result<()> {
        match self {
            Command::Synth(args) => synth::run(args),
            Command::BuildMap(args) => build_map::run(args),
            Command::Train(args) => train::run(args),
            Command::Eval(args) => eval::run(args),
            Command::ExportPly(args) => export_ply::run(args),
            Command::Bench(args) => bench::run(args),
        }
    }
}
