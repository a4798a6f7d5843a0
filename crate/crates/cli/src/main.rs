use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tdpa_cli::commands::{self, EvalArgs, MineArgs, PipelineArgs};
use tdpa_cli::error::CliResult;
use tdpa_cli::{EngineConfig, Mode};

#[derive(Parser)]
#[command(name = "tdpa", version, about = "Tracklet DP tracking, hard example mining and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Engine configuration (JSON); see `tdpa defaults`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> CliResult<EngineConfig> {
        let mut cfg = match &self.config {
            Some(p) => EngineConfig::load(p)?,
            None => EngineConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic detection stream with ground truth.
    Simulate {
        #[arg(long, conflicts_with = "scenario")]
        preset: Option<String>,
        /// Scenario spec (JSON).
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Track through a detection stream.
    Track {
        #[arg(long)]
        stream: PathBuf,
        /// Predictions file; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the configured mode.
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Which frame-0 detection is the template.
        #[arg(long, default_value_t = 0)]
        ff_line: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Track with the short-term tracker only.
    TrackSt {
        #[arg(long)]
        stream: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        ff_line: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Score predictions against ground truth.
    Eval {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Also run the reset-based protocol on this stream.
        #[arg(long)]
        stream: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Report file; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write metric curves as CSV.
        #[arg(long)]
        curves: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Mine hard negatives and positives from an embedding gallery.
    Mine {
        #[arg(long)]
        gallery: PathBuf,
        /// Reference video id.
        #[arg(long)]
        reference: i64,
        /// Gallery entry used as the query; default: first entry of the reference video.
        #[arg(long)]
        query_entry: Option<u64>,
        #[arg(long)]
        k: Option<usize>,
        /// Number of negative videos.
        #[arg(long)]
        videos: Option<usize>,
        #[arg(long)]
        positives: Option<usize>,
        /// Jitter the output boxes.
        #[arg(long)]
        jitter: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// simulate + track + eval.
    Pipeline {
        #[arg(long, conflicts_with = "scenario")]
        preset: Option<String>,
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        out: PathBuf,
        /// Keep the intermediate stream, truth and prediction files.
        #[arg(long)]
        keep: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Print the default configuration.
    Defaults,
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate { preset, scenario, seed, out } => {
            let spec = commands::resolve_scenario(preset.as_deref(), scenario.as_deref(), seed)?;
            commands::simulate(&spec, &out)
        }
        Command::Track { stream, out, mode, ff_line, common } => {
            let cfg = common.load()?;
            commands::track(&stream, out.as_deref(), &cfg, mode.unwrap_or(cfg.mode), ff_line)
        }
        Command::TrackSt { stream, out, ff_line, common } => {
            let cfg = common.load()?;
            commands::track(&stream, out.as_deref(), &cfg, Mode::ShortTerm, ff_line)
        }
        Command::Eval { predictions, truth, stream, mode, out, curves, common } => {
            let cfg = common.load()?;
            let args = EvalArgs {
                predictions: &predictions,
                truth: &truth,
                stream: stream.as_deref(),
                out: out.as_deref(),
                curves: curves.as_deref(),
            };
            commands::eval(&args, &cfg, mode.unwrap_or(cfg.mode))
        }
        Command::Mine { gallery, reference, query_entry, k, videos, positives, jitter, out, common } => {
            let mut cfg = common.load()?;
            if let Some(k) = k {
                cfg.miner.k = k;
            }
            if let Some(v) = videos {
                cfg.miner.negative_videos = v;
            }
            if let Some(p) = positives {
                cfg.miner.positives = p;
            }
            let args = MineArgs {
                gallery: &gallery,
                reference,
                query_entry,
                jitter,
                out: out.as_deref(),
            };
            commands::mine(&args, &cfg)
        }
        Command::Pipeline { preset, scenario, mode, out, keep, common } => {
            let cfg = common.load()?;
            let spec = commands::resolve_scenario(preset.as_deref(), scenario.as_deref(), common.seed)?;
            let args = PipelineArgs { spec, out_dir: out, keep };
            let report = commands::pipeline(&args, &cfg, mode.unwrap_or(cfg.mode))?;
            print_stdout(&serde_json::to_string_pretty(&report).expect("report serializes"))
        }
        Command::Defaults => {
            print_stdout(&EngineConfig::default().to_json_pretty())
        }
    }
}

fn print_stdout(text: &str) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{text}")?;
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
