use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cryoclass::config::PipelineConfig;
use cryoclass::pipeline::{replot, Runner, Stage};
use cryoclass::Error;

#[derive(Parser)]
#[command(name = "cryoclass", version, about = "CTF-aware class averaging of cryo-EM projection images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a noisy CTF-affected stack (or copy the configured input).
    Simulate(Common),
    /// Estimate the covariance model and write Wiener-filtered images.
    Denoise(Common),
    /// Initial rotation-invariant candidate lists of size S.
    Neighbors(Common),
    /// Rerank candidates with the anisotropic affinity and keep K.
    Rerank(Common),
    /// Class averages and the figure montage.
    Average(Common),
    /// Ground-truth evaluation of initial and reranked neighbors.
    Evaluate(Common),
    /// Redraw the montage and density plot from a finished run.
    Plot {
        #[command(flatten)]
        common: Common,
        /// Montage columns (and rows).
        #[arg(long, default_value_t = 8)]
        cols: usize,
    },
    /// All stages.
    Pipeline(Common),
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Simulation seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Extra `key=value` overrides, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Precondition(_) | Error::Domain(_) => 2,
        Error::Numerical(_) => 4,
        Error::Io { .. }
        | Error::Format { .. }
        | Error::UnsupportedMode { .. }
        | Error::NonSquare { .. }
        | Error::Metadata { .. }
        | Error::Shape { .. }
        | Error::MissingTruth(_) => 3,
    }
}

fn load_config(c: &Common) -> Result<PipelineConfig, Error> {
    let mut cfg = match &c.config {
        Some(path) => PipelineConfig::from_file(path).map_err(|e| match e {
            Error::Io { .. } => Error::Config(e.to_string()),
            other => other,
        })?,
        None => PipelineConfig::default(),
    };
    for kv in &c.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(out) = &c.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn init_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("thread pool already initialized: {e}");
        }
    }
}

fn run(command: Command) -> Result<(), (Option<Stage>, Error)> {
    let (common, until) = match command {
        Command::Simulate(c) => (c, Stage::Simulate),
        Command::Denoise(c) => (c, Stage::Denoise),
        Command::Neighbors(c) => (c, Stage::Candidates),
        Command::Rerank(c) => (c, Stage::Rerank),
        Command::Average(c) => (c, Stage::Average),
        Command::Evaluate(c) | Command::Pipeline(c) => (c, Stage::Evaluate),
        Command::Plot { common, cols } => {
            init_threads(common.threads);
            let cfg = load_config(&common).map_err(|e| (None, e))?;
            for f in replot(&cfg.out, cols).map_err(|e| (None, e))? {
                println!("{}", f.display());
            }
            return Ok(());
        }
    };
    init_threads(common.threads);
    let cfg = load_config(&common).map_err(|e| (None, e))?;
    let runner = Runner::new(cfg).map_err(|e| (None, e))?;
    let out = runner.out().to_path_buf();
    let manifest = runner.run_until(until).map_err(|f| (Some(f.stage), f.error))?;
    for s in &manifest.stages {
        println!(
            "{:<10} {:>8.2} s{}",
            s.name,
            s.seconds,
            if s.cached { "  (cached)" } else { "" }
        );
    }
    println!("manifest: {}", out.join(cryoclass::pipeline::MANIFEST).display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("CRYOCLASS_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err((stage, e)) => {
            match stage {
                Some(s) => eprintln!("error: stage {s} failed: {e}"),
                None => eprintln!("error: {e}"),
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
