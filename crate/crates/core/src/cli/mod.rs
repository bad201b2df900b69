//! The `dream` command line.
//!
//! Every subcommand writes `key=value` lines to standard output. Failures print
//! one `error=<kind> code=<n> message=...` line to standard error and exit with
//! 2 (usage), 3 (data or format) or 4 (numerical).
//!
//! `--seed` falls back to the `DREAM_SEED` environment variable, then to 0.

mod commands;
mod error;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::block::Arch;
use crate::pose::GateMode;
use crate::synth::{PerturbationKind, YawDistribution};

pub use error::CliError;

/// Environment variable consulted when `--seed` is absent.
pub const SEED_ENV: &str = "DREAM_SEED";

#[derive(Debug, Parser)]
#[command(name = "dream", version, about = "Yaw-gated residual correction of face embeddings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with known poses and perturbation.
    Synth(SynthCmd),
    /// Estimate head pose from 21-point landmarks.
    Pose(PoseCmd),
    /// Fit a block on frozen (frontal, profile) pairs.
    Train(TrainCmd),
    /// Correct embeddings with a trained block.
    Apply(ApplyCmd),
    /// Verification metrics over a pair list or fold protocol.
    EvalVerify(VerifyCmd),
    /// Closed-set rank-k identification.
    EvalIdentify(IdentifyCmd),
    /// Gate and architecture comparison on generated data.
    Ablate(AblateCmd),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GateArg {
    Nonlinear,
    Linear,
    Closed,
}

impl From<GateArg> for GateMode {
    fn from(g: GateArg) -> Self {
        match g {
            GateArg::Nonlinear => GateMode::Nonlinear,
            GateArg::Linear => GateMode::Linear,
            GateArg::Closed => GateMode::Closed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArchArg {
    TwoFc,
    OneFc,
}

impl From<ArchArg> for Arch {
    fn from(a: ArchArg) -> Self {
        match a {
            ArchArg::TwoFc => Arch::TwoFc,
            ArchArg::OneFc => Arch::OneFc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum YawDistArg {
    Uniform,
    /// 70% Gaussian around frontal with 30° spread, 30% uniform.
    FrontalHeavy,
}

impl From<YawDistArg> for YawDistribution {
    fn from(y: YawDistArg) -> Self {
        match y {
            YawDistArg::Uniform => YawDistribution::Uniform,
            YawDistArg::FrontalHeavy => YawDistribution::frontal_heavy(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PerturbationArg {
    Linear,
    Mlp,
    Nilpotent,
}

impl From<PerturbationArg> for PerturbationKind {
    fn from(p: PerturbationArg) -> Self {
        match p {
            PerturbationArg::Linear => PerturbationKind::Linear,
            PerturbationArg::Mlp => PerturbationKind::NonlinearMlp,
            PerturbationArg::Nilpotent => PerturbationKind::Nilpotent,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SeedArg {
    /// RNG seed; defaults to $DREAM_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 100)]
    pub subjects: usize,
    /// Images per subject.
    #[arg(long, default_value_t = 10)]
    pub images: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, value_enum)]
    pub yaw_dist: Option<YawDistArg>,
    #[arg(long, value_enum, default_value_t = PerturbationArg::Linear)]
    pub perturbation: PerturbationArg,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Embedding noise norm; defaults to scale/10.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Landmark pixel noise standard deviation.
    #[arg(long, default_value_t = 0.0)]
    pub landmark_noise: f64,
    #[arg(long, default_value_t = 1000.0)]
    pub image_width: f64,
    #[arg(long, default_value_t = 1000.0)]
    pub image_height: f64,
    /// Share of subjects used for training.
    #[arg(long, default_value_t = 0.5)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    /// Same-subject evaluation pairs per subject.
    #[arg(long, default_value_t = 7)]
    pub same: usize,
    /// Cross-subject evaluation pairs per subject.
    #[arg(long, default_value_t = 7)]
    pub not_same: usize,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum, default_value_t = GateArg::Nonlinear)]
    pub gate: GateArg,
    #[arg(long, value_enum, default_value_t = ArchArg::TwoFc)]
    pub arch: ArchArg,
    /// Hidden width of the two-fc block; defaults to the embedding dimension.
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub weight_decay: f64,
}

/// Where yaws come from: `--poses` wins over `--landmarks`, which wins over
/// the yaw stored with each embedding.
#[derive(Debug, Clone, Args)]
pub struct YawArgs {
    /// Pose CSV as written by `dream pose`.
    #[arg(long)]
    pub poses: Option<PathBuf>,
    /// Landmark CSV; poses are estimated on the fly.
    #[arg(long)]
    pub landmarks: Option<PathBuf>,
    #[command(flatten)]
    pub camera: CameraArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CameraArgs {
    /// Face model CSV; the built-in 21-point model when absent.
    #[arg(long)]
    pub face_model: Option<PathBuf>,
    #[arg(long, default_value_t = 1000.0)]
    pub image_width: f64,
    #[arg(long, default_value_t = 1000.0)]
    pub image_height: f64,
}

#[derive(Debug, Args)]
pub struct SynthCmd {
    #[command(flatten)]
    pub synth: SynthArgs,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PoseCmd {
    #[arg(long)]
    pub landmarks: PathBuf,
    #[command(flatten)]
    pub camera: CameraArgs,
    /// Pose CSV to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainCmd {
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Pair list or protocol; same-subject rows become training pairs.
    #[arg(long)]
    pub pairs: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Expected embedding dimension.
    #[arg(long)]
    pub dim: Option<usize>,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub yaw: YawArgs,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Per-epoch loss CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ApplyCmd {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value_t = GateArg::Nonlinear)]
    pub gate: GateArg,
    #[arg(long)]
    pub dim: Option<usize>,
    #[command(flatten)]
    pub yaw: YawArgs,
    /// Corrected embeddings; CSV when the name ends in `.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyCmd {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub pairs: PathBuf,
    /// Correct the embeddings with this block before scoring.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = GateArg::Nonlinear)]
    pub gate: GateArg,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.001])]
    pub far: Vec<f64>,
    /// Linear interpolation between ROC points for TAR@FAR.
    #[arg(long)]
    pub interpolate: bool,
    /// Heatmap bins: a single count of equal bins over 0–90°, or the edges in degrees.
    #[arg(long, value_delimiter = ',')]
    pub yaw_bins: Option<Vec<f64>>,
    #[command(flatten)]
    pub yaw: YawArgs,
    /// Directory for the report, ROC and heatmap CSVs.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IdentifyCmd {
    /// Probe embeddings.
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub gallery: PathBuf,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = GateArg::Nonlinear)]
    pub gate: GateArg,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 5])]
    pub ranks: Vec<usize>,
    /// Skip probes whose subject is not in the gallery instead of failing.
    #[arg(long)]
    pub exclude_unknown: bool,
    #[command(flatten)]
    pub yaw: YawArgs,
    /// Report file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateCmd {
    #[command(flatten)]
    pub synth: SynthArgs,
    #[command(flatten)]
    pub train: AblateTrainArgs,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Also score with apply-time yaws scaled by 1 ± this fraction.
    #[arg(long)]
    pub yaw_noise: Option<f64>,
    /// Comparison table CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Training flags without `--gate`/`--arch`, which `ablate` sweeps.
#[derive(Debug, Clone, Args)]
pub struct AblateTrainArgs {
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub weight_decay: f64,
}

/// Resolves `--seed` against `DREAM_SEED`.
pub fn resolve_seed(flag: Option<u64>, env: Option<&str>) -> Result<u64, CliError> {
    match (flag, env) {
        (Some(s), _) => Ok(s),
        (None, Some(v)) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV} must be an unsigned integer, got `{v}`"))),
        (None, None) => Ok(0),
    }
}

/// Parses `argv` and runs the command, returning the process exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let first = e.to_string().lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ").to_string();
            let _ = writeln!(err, "{}", CliError::Usage(first).line());
            return 2;
        }
    };
    let env = std::env::var(SEED_ENV).ok();
    match commands::dispatch(cli.command, env.as_deref(), out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{}", e.line());
            e.exit_code()
        }
    }
}
