use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use remag_cli::{run, Command, JobSpec, SweepAxis};
use remag_core::dynamics::Frame;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FrameArg {
    Lab,
    Rot,
}

/// Cavity-magnon coupling simulator.
#[derive(Debug, Parser)]
#[command(name = "remag", version)]
struct Args {
    command: Command,
    /// JSON run configuration (see presets/).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Sweep axis as axis=start:stop:count with axis one of fm, b, phi, f.
    #[arg(long = "sweep", value_parser = parse_sweep)]
    sweeps: Vec<SweepAxis>,
    /// Integration frame for ringdowns.
    #[arg(long, value_enum, default_value = "rot")]
    frame: FrameArg,
    /// RK4 step in ps (default 10 rotating, 1 lab).
    #[arg(long)]
    dt_ps: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    db_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    db_max: Option<f64>,
    /// Worker threads (default: one per core).
    #[arg(long)]
    jobs: Option<usize>,
    /// S11 trace for `fit`: f_mhz,s11_re,s11_im per line.
    #[arg(long)]
    input: Option<PathBuf>,
}

fn parse_sweep(s: &str) -> Result<SweepAxis, String> {
    s.parse()
}

fn main() -> ExitCode {
    let args = Args::parse();
    let job = JobSpec {
        command: args.command,
        config: args.config,
        input: args.input,
        sweeps: args.sweeps,
        out: args.out,
        jobs: args.jobs,
        frame: match args.frame {
            FrameArg::Lab => Frame::Lab,
            FrameArg::Rot => Frame::Rotating,
        },
        dt_ps: args.dt_ps,
        db_min: args.db_min,
        db_max: args.db_max,
    };
    match run(&job) {
        Ok(report) => {
            for line in &report.summary {
                println!("{line}");
            }
            for f in &report.files {
                eprintln!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("remag: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
