use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bsde_lab::config::{ExperimentConfig, Overrides};
use bsde_lab::error::{CliError, EXIT_CHECK_FAILED, EXIT_MISMATCH, EXIT_OK};
use bsde_lab::{gallery_json, gallery_table, in_pool, replay, run};
use bsde_lab_core::generators::{Verdict, WeightParams};

#[derive(Parser)]
#[command(name = "bsde-lab", version, about = "Monte Carlo laboratory for random-horizon BSDEs")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "BSDE_LAB_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        cfg.apply(&Overrides { seed: self.seed, paths: self.paths, steps: self.steps, out: self.out.clone() });
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate, check, solve and write a run directory.
    Run(RunArgs),
    /// Assumption checks only.
    Check(RunArgs),
    /// List the preset generators.
    Gallery {
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Re-execute a run directory and compare every artifact.
    Replay { dir: PathBuf },
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    let threads = cli.threads;
    match cli.cmd {
        Cmd::Run(a) => {
            let cfg = a.load()?;
            let out = in_pool(threads, || run::run(&cfg))??;
            print!("{}", out.summary.render());
            for f in &out.failures {
                eprintln!("failed: {f}");
            }
            println!("run directory: {}", out.dir.display());
            Ok(out.status.exit_code())
        }
        Cmd::Check(a) => {
            let cfg = a.load()?;
            let (reps, table) = in_pool(threads, || run::check(&cfg))??;
            print!("{}", table.render());
            let failed = reps.iter().any(|r| r.verdict == Verdict::Fail);
            Ok(if failed { EXIT_CHECK_FAILED } else { EXIT_OK })
        }
        Cmd::Gallery { json } => {
            let params = WeightParams::default();
            if json {
                println!("{}", gallery_json(&params));
            } else {
                print!("{}", gallery_table(&params).render());
            }
            Ok(EXIT_OK)
        }
        Cmd::Replay { dir } => {
            let rep = in_pool(threads, || replay::replay(&dir))??;
            for m in &rep.mismatches {
                eprintln!("mismatch: {m}");
            }
            println!("compared {} artifacts, {} mismatches", rep.compared.len(), rep.mismatches.len());
            Ok(if rep.ok() { EXIT_OK } else { EXIT_MISMATCH })
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
