use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dynasc::experiments::{run_command, Command, Experiment};
use dynasc::Error;

#[derive(Parser)]
#[command(name = "dynasc", version, about = "Semantic image link and lander experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output_dir`, then `out/`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train teacher and student codecs on the synthetic corpus.
    TrainCodec(Common),
    /// Reconstruction PSNR against SNR.
    EvalReconstruction(Common),
    /// Encoder and transmission time and energy.
    EvalTiming(Common),
    /// Landing-site detection accuracy against SNR.
    EvalDetection(Common),
    /// Train the landing policy and sweep links and SNRs.
    Landing(Common),
    /// Closed-form time-reduction probability against Monte Carlo.
    Prop2Table(Common),
}

fn run(cmd: Command, args: Common) -> Result<(), Error> {
    let exp = Experiment::load(&args.config, args.seed)?;
    let out = args
        .out
        .or_else(|| exp.cfg.output_dir.as_ref().map(|p| exp.resolve(p)))
        .unwrap_or_else(|| PathBuf::from("out"));
    let written = run_command(cmd, &exp, &out, &mut |msg| eprintln!("{msg}"))?;
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, args) = match cli.command {
        Cmd::TrainCodec(a) => (Command::TrainCodec, a),
        Cmd::EvalReconstruction(a) => (Command::EvalReconstruction, a),
        Cmd::EvalTiming(a) => (Command::EvalTiming, a),
        Cmd::EvalDetection(a) => (Command::EvalDetection, a),
        Cmd::Landing(a) => (Command::Landing, a),
        Cmd::Prop2Table(a) => (Command::Prop2Table, a),
    };
    match run(cmd, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
