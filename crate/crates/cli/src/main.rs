use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rotrack::benchmark::{
    compare, load_sequence, read_result, result_json, run_ope, run_tre, synth_sequence, write_atomic, write_eval,
    EvalResult, Preset, RuntimeStats, SynthParams,
};
use rotrack::tracker::{TrackerConfig, Variant};

/// Rotation-adaptive correlation tracking: track, evaluate, synthesize, compare.
#[derive(Debug, Parser)]
#[command(name = "rotrack", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Track a sequence from its first ground-truth box and write result.json.
    Track {
        #[command(flatten)]
        tracker: TrackerArgs,
        /// Output file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a sequence and write result.json and curves.csv.
    Eval {
        #[command(flatten)]
        tracker: TrackerArgs,
        #[arg(long, value_enum, default_value_t = EvalMode::Ope)]
        mode: EvalMode,
        /// Number of TRE start points.
        #[arg(long, default_value_t = 3)]
        segments: usize,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a synthetic sequence with known ground truth.
    Synth {
        #[arg(long)]
        preset: Preset,
        #[arg(long, default_value_t = 60)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Rotation speed, degrees per frame.
        #[arg(long, allow_negative_numbers = true)]
        omega: Option<f64>,
        /// Pixels per frame as VX,VY.
        #[arg(long, value_parser = parse_velocity, allow_hyphen_values = true)]
        velocity: Option<(f64, f64)>,
        /// Size multiplier per frame.
        #[arg(long)]
        scale_rate: Option<f64>,
        /// Standard deviation of additive pixel noise.
        #[arg(long)]
        noise: Option<f64>,
        /// Standard deviation of the offset between sprite and ground truth.
        #[arg(long)]
        jitter: Option<f64>,
    },
    /// Compare paired result directories and report deltas with a sign test.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        baseline: Vec<PathBuf>,
        #[arg(long, num_args = 1.., required = true)]
        variant: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct TrackerArgs {
    /// Sequence directory (img/*.pgm and groundtruth_rect.txt).
    #[arg(long)]
    seq: PathBuf,
    /// Tracker configuration JSON; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the D/S/R flags of the configuration.
    #[arg(long)]
    variant: Option<Variant>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EvalMode {
    Ope,
    Tre,
}

fn parse_velocity(s: &str) -> Result<(f64, f64), String> {
    let (x, y) = s.split_once(',').ok_or("expected VX,VY")?;
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    Ok((num(x)?, num(y)?))
}

/// A failure with its exit code: 1 for usage, 2 for data.
struct Failure {
    code: u8,
    msg: String,
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure { code: 1, msg: msg.into() }
}

fn data(e: impl std::fmt::Display) -> Failure {
    Failure { code: 2, msg: e.to_string() }
}

fn effective_config(args: &TrackerArgs) -> Result<TrackerConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
            TrackerConfig::from_json(&text).map_err(|e| data(format!("{}: {e}", path.display())))?
        }
        None => TrackerConfig::default(),
    };
    if let Some(v) = args.variant {
        cfg = cfg.with_variant(v);
    }
    Ok(cfg)
}

fn report_runtime(r: &RuntimeStats) {
    eprintln!("{} frames in {:.3} s ({:.1} fps)", r.frames, r.seconds, r.fps());
}

fn read_results(dirs: &[PathBuf]) -> Result<Vec<EvalResult>, Failure> {
    dirs.iter()
        .map(|d| {
            let file = if d.is_dir() { d.join("result.json") } else { d.clone() };
            read_result(&file).map(|r| r.result).map_err(data)
        })
        .collect()
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Track { tracker, out } => {
            let cfg = effective_config(&tracker)?;
            let seq = load_sequence(&tracker.seq).map_err(data)?;
            let result = run_ope(&seq, &cfg).map_err(data)?;
            write_atomic(&out, result_json(&result, &cfg).map_err(data)?.as_bytes()).map_err(data)?;
            report_runtime(&result.runtime);
        }
        Command::Eval {
            tracker,
            mode,
            segments,
            out,
        } => {
            let cfg = effective_config(&tracker)?;
            let seq = load_sequence(&tracker.seq).map_err(data)?;
            let result = match mode {
                EvalMode::Ope => run_ope(&seq, &cfg),
                EvalMode::Tre => {
                    if segments == 0 {
                        return Err(usage("--segments must be at least 1"));
                    }
                    run_tre(&seq, &cfg, segments)
                }
            }
            .map_err(data)?;
            write_eval(&out, &result, &cfg).map_err(data)?;
            println!("{}: AUC {:.4}, precision@20 {:.4}", result.sequence, result.auc, result.precision_20);
            report_runtime(&result.runtime);
        }
        Command::Synth {
            preset,
            frames,
            seed,
            out,
            omega,
            velocity,
            scale_rate,
            noise,
            jitter,
        } => {
            let d = SynthParams::default();
            let params = SynthParams {
                frames,
                omega: omega.unwrap_or(d.omega),
                velocity: velocity.unwrap_or(d.velocity),
                scale_rate: scale_rate.unwrap_or(d.scale_rate),
                noise: noise.unwrap_or(d.noise),
                jitter: jitter.unwrap_or(d.jitter),
                ..d
            };
            synth_sequence(preset, &params, seed, &out).map_err(data)?;
        }
        Command::Compare { baseline, variant, out } => {
            if baseline.len() != variant.len() {
                return Err(usage(format!(
                    "--baseline has {} entries but --variant has {}",
                    baseline.len(),
                    variant.len()
                )));
            }
            let report = compare(&read_results(&baseline)?, &read_results(&variant)?).map_err(data)?;
            let json = serde_json::to_string_pretty(&report).map_err(data)?;
            write_atomic(&out, json.as_bytes()).map_err(data)?;
            print!("{}", report.table);
            println!(
                "sign test: {} up, {} down, {} tied, p = {:.4}",
                report.sign_test.positive, report.sign_test.negative, report.sign_test.ties, report.sign_test.p_value
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("rotrack: {}", f.msg.lines().next().unwrap_or(""));
            ExitCode::from(f.code)
        }
    }
}
