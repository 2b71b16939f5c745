use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "occkit", version, about = "Occupancy grids, ray-visible masks, RayIoU/mAVE metrics and flow warping")]
pub struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true, env = "OCCKIT_THREADS")]
    pub threads: Option<usize>,

    /// JSON file with default values; explicit flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ray-visible mask (V1, or V2 with --dilate) from a grid and ego path.
    GenMask(GenMaskArgs),
    /// RayIoU, mAVE variants and Occ Score for a prediction.
    Eval(EvalArgs),
    /// Adaptive-bin centers and aggregated flows from logits.
    Bins(BinsArgs),
    /// Forward-warp a feature grid along a flow field.
    Warp(WarpArgs),
    /// Warp an occupancy grid into soft per-class mass.
    WarpOcc(WarpOccArgs),
    /// Write a seeded synthetic scene.
    Synth(SynthArgs),
    /// Compare the library against the reference oracles.
    Selftest(SelftestArgs),
}

/// Where the rays come from: a saved bundle, or a trajectory plus pattern.
#[derive(Debug, Args)]
pub struct RaySource {
    /// Ray bundle JSON (`origins` + `pattern`).
    #[arg(long, conflicts_with = "trajectory")]
    pub bundle: Option<PathBuf>,

    /// Trajectory JSON (`poses` with `position` and `height`).
    #[arg(long)]
    pub trajectory: Option<PathBuf>,

    /// Ray pattern JSON (`elevations`, `azimuth_count`, `max_range`).
    #[arg(long, conflicts_with = "bundle")]
    pub pattern: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenMaskArgs {
    /// Occupancy container.
    #[arg(long)]
    pub gt: PathBuf,

    #[command(flatten)]
    pub rays: RaySource,

    /// Dilation radius in meters around hit voxels (V2).
    #[arg(long)]
    pub dilate: Option<f64>,

    /// Output mask container.
    #[arg(long)]
    pub out: PathBuf,

    /// One-channel feature container of per-voxel uncertainty.
    #[arg(long, requires = "hard_out")]
    pub uncertainty: Option<PathBuf>,

    /// Share of masked voxels kept as hard examples, in (0, 1].
    #[arg(long)]
    pub hard_fraction: Option<f64>,

    /// Output container for the hard-example mask.
    #[arg(long, requires = "uncertainty")]
    pub hard_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub gt: PathBuf,

    #[arg(long)]
    pub pred: PathBuf,

    /// Ground-truth flow container (zero flow if omitted).
    #[arg(long)]
    pub flow_gt: Option<PathBuf>,

    /// Predicted flow container (zero flow if omitted).
    #[arg(long)]
    pub flow_pred: Option<PathBuf>,

    #[command(flatten)]
    pub rays: RaySource,

    /// Depth thresholds in meters, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,

    /// Foreground class ids, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub foreground: Option<Vec<u8>>,

    /// Depth gate for true-positive mAVE, meters.
    #[arg(long)]
    pub mave_threshold: Option<f64>,

    /// Pool flow errors over all elements instead of averaging class means.
    #[arg(long)]
    pub pooled: bool,

    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BinsArgs {
    /// Logits as JSON, or a feature container with 2·n_bins channels.
    #[arg(long)]
    pub logits: PathBuf,

    #[arg(long)]
    pub n_bins: Option<usize>,

    #[arg(long, allow_hyphen_values = true)]
    pub fmin: Option<f64>,

    #[arg(long, allow_hyphen_values = true)]
    pub fmax: Option<f64>,

    /// Use the x scene bins for both axes.
    #[arg(long)]
    pub shared_bins: bool,

    /// Compare analytic gradients with central differences.
    #[arg(long)]
    pub check_grad: bool,

    /// Write the JSON result here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WarpArgs {
    #[arg(long)]
    pub features: PathBuf,

    #[arg(long)]
    pub flow: PathBuf,

    /// Seconds to advance (default 0.5).
    #[arg(long)]
    pub dt: Option<f64>,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct WarpOccArgs {
    /// Current-frame occupancy container.
    #[arg(long)]
    pub gt: PathBuf,

    #[arg(long)]
    pub flow: PathBuf,

    #[arg(long)]
    pub dt: Option<f64>,

    /// Soft-occupancy feature container to write.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Future-frame occupancy to score against.
    #[arg(long)]
    pub gt_future: Option<PathBuf>,

    /// Restrict the score to voxels set in this mask.
    #[arg(long, requires = "gt_future")]
    pub mask: Option<PathBuf>,

    /// Smoothing mass per class in the cross-entropy.
    #[arg(long)]
    pub eps: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long)]
    pub n_boxes: Option<usize>,

    #[arg(long)]
    pub dt: Option<f64>,

    /// Pattern stored in the written bundle.
    #[arg(long)]
    pub pattern: Option<PathBuf>,

    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    #[arg(long)]
    pub seed: Option<u64>,
}
