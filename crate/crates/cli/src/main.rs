use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mird::diffusion::DenoiserKind;
use mird::pipeline::{InfillRule, TauSource};
use mird::schedule::ScheduleConfig;

mod commands;

/// Frame interpolation by multiple-input residual diffusion.
#[derive(Debug, Parser)]
#[command(name = "mird", version, about)]
struct Cli {
    /// Worker threads; all cores when unset.
    #[arg(long, global = true, env = "MIRD_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize the frame between two inputs.
    Interpolate(InterpolateArgs),
    /// Run several seeds and map the per-pixel spread.
    Uncertainty(UncertaintyArgs),
    /// Estimate the temporal position of a triplet's middle frame.
    Tau(TauArgs),
    /// Print the noise schedule as CSV.
    Schedule(ScheduleCmdArgs),
    /// Render synthetic triplets.
    Synth(SynthArgs),
    /// Statistical self-test of the diffusion process.
    Verify(VerifyArgs),
}

fn parse_tau(s: &str) -> Result<TauSource, String> {
    if s == "ifd" {
        return Ok(TauSource::Ifd);
    }
    let t: f64 = s
        .parse()
        .map_err(|_| format!("expected a number in [0, 1] or \"ifd\", got {s:?}"))?;
    if (0.0..=1.0).contains(&t) {
        Ok(TauSource::Fixed(t))
    } else {
        Err(format!("tau must lie in [0, 1], got {t}"))
    }
}

fn parse_unit_open(s: &str) -> Result<f64, String> {
    let t: f64 = s.parse().map_err(|_| format!("expected a number, got {s:?}"))?;
    if t > 0.0 && t < 1.0 {
        Ok(t)
    } else {
        Err(format!("value must lie in (0, 1), got {t}"))
    }
}

fn parse_denoiser(s: &str) -> Result<DenoiserKind, String> {
    s.parse().map_err(|e: mird::Error| e.to_string())
}

fn parse_infill(s: &str) -> Result<InfillRule, String> {
    s.parse().map_err(|e: mird::Error| e.to_string())
}

#[derive(Debug, Clone, Args)]
struct ScheduleArgs {
    /// Diffusion steps T.
    #[arg(long, default_value_t = 20)]
    steps: usize,
    /// Noise scale.
    #[arg(long, default_value_t = 2.0)]
    kappa: f64,
    /// Growth exponent of the shift ladder.
    #[arg(long, default_value_t = 0.3)]
    p: f64,
    /// Total shift at the last step.
    #[arg(long, default_value_t = 0.99, value_parser = parse_unit_open)]
    eta_t: f64,
    /// Total shift at the first step, overriding min((0.04/kappa)^2, 0.001).
    #[arg(long, value_parser = parse_unit_open)]
    eta1: Option<f64>,
}

impl ScheduleArgs {
    fn config(&self) -> ScheduleConfig {
        ScheduleConfig {
            steps: self.steps,
            kappa: self.kappa,
            p: self.p,
            eta_t_sum: self.eta_t,
            eta_1_override: self.eta1,
            ..ScheduleConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
struct InterpCommon {
    /// First frame (PNG).
    #[arg(long)]
    i0: PathBuf,
    /// Last frame (PNG).
    #[arg(long)]
    i1: PathBuf,
    /// Ground-truth middle frame, for metrics, the oracle denoiser and tau=ifd.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Time of the synthesized frame in [0, 1], or "ifd" to estimate it from --gt.
    #[arg(long, default_value = "0.5", value_parser = parse_tau)]
    tau: TauSource,
    /// oracle, inversion, warp_blend or shrinkage.
    #[arg(long, default_value = "shrinkage", value_parser = parse_denoiser)]
    denoiser: DenoiserKind,
    /// mask_blend or literal.
    #[arg(long, default_value = "mask_blend", value_parser = parse_infill)]
    infill: InfillRule,
    #[arg(long, env = "MIRD_SEED", default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    schedule: ScheduleArgs,
}

#[derive(Debug, Args)]
struct InterpolateArgs {
    #[command(flatten)]
    common: InterpCommon,
    /// Output PNG.
    #[arg(long)]
    out: PathBuf,
    /// Write every chain state x_T..x_0 (clamped) as PNGs into this directory.
    #[arg(long)]
    dump_trajectory: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct UncertaintyArgs {
    #[command(flatten)]
    common: InterpCommon,
    /// Number of chains N_S.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(2..))]
    samples: u64,
    /// Directory for mean/sd/minmax PNGs and summary.json.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct TauArgs {
    /// First frame.
    #[arg(long, required_unless_present = "dir", conflicts_with = "dir", requires_all = ["itau", "i1"])]
    i0: Option<PathBuf>,
    /// Middle frame.
    #[arg(long, conflicts_with = "dir")]
    itau: Option<PathBuf>,
    /// Last frame.
    #[arg(long, conflicts_with = "dir")]
    i1: Option<PathBuf>,
    /// Flow I0 -> Itau (.flo) used instead of the estimator.
    #[arg(long, requires = "flow1", conflicts_with = "dir")]
    flow0: Option<PathBuf>,
    /// Flow I1 -> Itau (.flo).
    #[arg(long, requires = "flow0", conflicts_with = "dir")]
    flow1: Option<PathBuf>,
    /// Write the two motion masks here as mask0.png and mask1.png.
    #[arg(long, conflicts_with = "dir")]
    mask_dir: Option<PathBuf>,
    /// Directory of triplet subdirectories (frame1/2/3.png); batch mode.
    #[arg(long)]
    dir: Option<PathBuf>,
    /// Batch CSV destination; stdout when unset.
    #[arg(long, requires = "dir")]
    csv: Option<PathBuf>,
    /// Batch histogram summary destination; stderr when unset.
    #[arg(long, requires = "dir")]
    histogram: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScheduleCmdArgs {
    #[command(flatten)]
    schedule: ScheduleArgs,
    /// Condition weights, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "tau")]
    weights: Option<Vec<f64>>,
    /// Derive the two weights (1 - tau, tau) from a frame time.
    #[arg(long)]
    tau: Option<f64>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// JSON scene description.
    #[arg(long, requires = "tau", conflicts_with = "count")]
    spec: Option<PathBuf>,
    /// Time of the middle frame, in (0, 1).
    #[arg(long, value_parser = parse_unit_open)]
    tau: Option<f64>,
    /// Also write the analytic flow I0 -> I1 as gt.flo.
    #[arg(long)]
    flow: bool,
    /// Generate this many random translation triplets instead of one scene.
    #[arg(long, required_unless_present = "spec")]
    count: Option<u64>,
    #[arg(long, default_value_t = 96)]
    width: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 0.1, value_parser = parse_unit_open)]
    tau_min: f64,
    #[arg(long, default_value_t = 0.9, value_parser = parse_unit_open)]
    tau_max: f64,
    #[arg(long, env = "MIRD_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Monte-Carlo draws per check.
    #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(10_000..))]
    samples: u64,
    #[arg(long, env = "MIRD_SEED", default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    schedule: ScheduleArgs,
    /// Swap two rungs of the ladder to check that verification catches it.
    #[arg(long, hide = true)]
    inject_broken_schedule: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("mird: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Interpolate(a) => commands::interpolate(a),
        Command::Uncertainty(a) => commands::uncertainty(a),
        Command::Tau(a) => commands::tau(a),
        Command::Schedule(a) => commands::schedule(a),
        Command::Synth(a) => commands::synth(a),
        Command::Verify(a) => commands::verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mird: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
