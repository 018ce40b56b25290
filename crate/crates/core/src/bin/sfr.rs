use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sfr_core::commands::{
    cmd_encode, cmd_eval, cmd_fit, cmd_gradcheck, cmd_roundtrip, cmd_synth, format_gradcheck,
    CodecOptions, EncodeOptions, EvalOptions, FitOptions, RoundtripOptions, SynthOptions,
};
use sfr_core::fit::{FitConfig, FitMode};
use sfr_core::losses::LossWeights;
use sfr_core::metrics::default_thresholds;
use sfr_core::synth::SynthSpec;

#[derive(Parser)]
#[command(
    name = "sfr",
    version,
    about = "Structured float representations for 2.5D joints"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct Codec {
    /// Side of the input frames.
    #[arg(long, default_value_t = 128)]
    size_m: usize,
    /// Side of the representation grids.
    #[arg(long, default_value_t = 64)]
    size_n: usize,
    /// Odd Gaussian kernel size.
    #[arg(long, default_value_t = 7)]
    kernel_k: usize,
}

impl From<Codec> for CodecOptions {
    fn from(c: Codec) -> Self {
        CodecOptions {
            size_m: c.size_m,
            size_n: c.size_n,
            kernel_k: c.kernel_k,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic corpus.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        joints: usize,
        #[arg(long, default_value_t = 64)]
        resolution: usize,
        #[arg(long, default_value_t = 4.0)]
        blob_radius: f64,
        /// Write frames in the binary format.
        #[arg(long)]
        binary: bool,
    },
    /// Encode annotated frames into an SFR bundle.
    Encode {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        codec: Codec,
    },
    /// Encode, decode and compare every joint.
    Roundtrip {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Also write decoded joints in annotation format.
        #[arg(long)]
        pred_out: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[command(flatten)]
        codec: Codec,
    },
    /// Finite-difference check of the analytic gradients.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        instances: usize,
        /// Write the report here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit one frame's representations through the decoders.
    Fit {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long, default_value_t = 0)]
        frame_id: u64,
        #[arg(long, default_value = "full", value_parser = parse_mode)]
        mode: FitMode,
        #[arg(long, default_value_t = 0.4)]
        step_size: f64,
        #[arg(long, default_value_t = 2000)]
        max_iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        lambda_h: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda_d: f64,
        #[arg(long)]
        out_dir: PathBuf,
        /// Fail unless every decoded coordinate is within this distance.
        #[arg(long)]
        tol: Option<f64>,
        #[command(flatten)]
        codec: Codec,
    },
    /// Mean 3D error and threshold curve in millimeters.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        geometry: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_mode(s: &str) -> Result<FitMode, String> {
    s.parse::<FitMode>().map_err(|e| e.to_string())
}

fn run(cli: Cli) -> sfr_core::Result<bool> {
    match cli.command {
        Command::Synth {
            out_dir,
            count,
            seed,
            joints,
            resolution,
            blob_radius,
            binary,
        } => {
            let spec = SynthSpec {
                n_joints: joints,
                resolution,
                blob_radius,
                seed,
                ..SynthSpec::default()
            };
            let s = cmd_synth(&SynthOptions {
                out_dir,
                count,
                spec,
                binary,
            })?;
            println!("wrote {count} frames to {}", s.frames.display());
            Ok(true)
        }
        Command::Encode {
            frames,
            annotations,
            out_dir,
            codec,
        } => {
            let s = cmd_encode(&EncodeOptions {
                frames,
                annotations,
                out_dir,
                codec: codec.into(),
            })?;
            for (id, why) in &s.skipped {
                eprintln!("skipped frame {id}: {why}");
            }
            println!(
                "encoded {} frames, skipped {}, wrote {} files",
                s.frames_encoded,
                s.skipped.len(),
                s.files
            );
            Ok(true)
        }
        Command::Roundtrip {
            frames,
            annotations,
            report,
            pred_out,
            tol,
            codec,
        } => {
            let s = cmd_roundtrip(&RoundtripOptions {
                frames,
                annotations,
                codec: codec.into(),
                tol,
                report,
                predictions: pred_out,
            })?;
            println!(
                "passed {} failed {} excluded {}",
                s.passed, s.failed, s.excluded
            );
            Ok(s.all_passed())
        }
        Command::Gradcheck {
            seed,
            instances,
            out,
        } => {
            let r = cmd_gradcheck(seed, instances)?;
            let text = format_gradcheck(&r);
            print!("{text}");
            if let Some(path) = out {
                std::fs::write(path, &text)?;
            }
            Ok(r.passed())
        }
        Command::Fit {
            frames,
            annotations,
            frame_id,
            mode,
            step_size,
            max_iters,
            seed,
            lambda_h,
            lambda_d,
            out_dir,
            tol,
            codec,
        } => {
            let config = FitConfig {
                mode,
                step_size,
                max_iters,
                seed,
                ..FitConfig::default()
            };
            let s = cmd_fit(&FitOptions {
                frames,
                annotations,
                frame_id,
                codec: codec.into(),
                config,
                weights: LossWeights::new(lambda_h, lambda_d)?,
                out_dir,
            })?;
            let last = s.result.trace.last().map_or(f64::NAN, |r| r.total);
            println!(
                "mode {mode} final loss {last:e} max coordinate error {:e}",
                s.max_error
            );
            Ok(tol.is_none_or(|t| s.max_error <= t))
        }
        Command::Eval {
            pred,
            gt,
            geometry,
            out,
        } => {
            let s = cmd_eval(&EvalOptions {
                predictions: pred,
                ground_truth: gt,
                geometry,
                out,
                thresholds: default_thresholds(),
            })?;
            println!("mean 3d error {:.6} mm", s.error.overall);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
