mod commands;
mod config;

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Command, Failure};
use config::RunConfig;

/// Band structures and generalized Dirac cones of anisotropic honeycomb
/// emitter lattices.
#[derive(Parser)]
#[command(name = "metasurface", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Bands along a path of symmetry points.
    Bands(Opts),
    /// Bands on a square k-grid.
    Surface(Opts),
    /// Search for band degeneracies and classify them (JSON).
    FindCones(Opts),
    /// Classify the pair gap near given k-points (JSON).
    Classify(Opts),
    /// Follow one degeneracy through a beta range (JSON).
    SweepBeta(Opts),
    /// Ewald splitting and direct-sum diagnostics of the lattice sums.
    Convergence(Opts),
}

#[derive(Args)]
struct Opts {
    /// key = value configuration file.
    #[arg(value_name = "CONFIG")]
    config_file: Option<PathBuf>,
    /// Same as the positional CONFIG.
    #[arg(long = "config", value_name = "PATH", conflicts_with = "config_file")]
    config_path: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    d0: Option<String>,
    #[arg(long)]
    beta: Option<String>,
    /// lo,hi
    #[arg(long = "beta-range")]
    beta_range: Option<String>,
    /// retarded, quasistatic or both.
    #[arg(long)]
    mode: Option<String>,
    /// out_of_plane, in_plane or all.
    #[arg(long)]
    block: Option<String>,
    /// i,j band indices within the block.
    #[arg(long)]
    pair: Option<String>,
    /// Comma-separated symmetry labels.
    #[arg(long)]
    path: Option<String>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<String>,
    /// Any other configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Opts {
    fn config(&self) -> Result<RunConfig, Failure> {
        let mut cfg = RunConfig::default();
        if let Some(path) = self.config_file.as_ref().or(self.config_path.as_ref()) {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
            cfg.apply_text(&text)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        }
        let flags = [
            ("d0", &self.d0),
            ("beta", &self.beta),
            ("beta_range", &self.beta_range),
            ("mode", &self.mode),
            ("block", &self.block),
            ("pair", &self.pair),
            ("path", &self.path),
            ("format", &self.format),
            ("threads", &self.threads),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        for kv in &self.set {
            let Some((k, v)) = kv.split_once('=') else {
                return Err(Failure::Config(format!("--set expects KEY=VALUE, got `{kv}`")));
            };
            cfg.set(k.trim(), v)?;
        }
        Ok(cfg)
    }
}

fn execute(cmd: Command, opts: &Opts) -> Result<(), Failure> {
    let cfg = opts.config()?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(format!("thread pool: {e}")))?;
    }
    let text = commands::run(cmd, &cfg)?;
    match &opts.out {
        Some(path) => fs::write(path, text)
            .map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure::Config(format!("cannot write output: {e}")))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, opts) = match &cli.command {
        Cmd::Bands(o) => (Command::Bands, o),
        Cmd::Surface(o) => (Command::Surface, o),
        Cmd::FindCones(o) => (Command::FindCones, o),
        Cmd::Classify(o) => (Command::Classify, o),
        Cmd::SweepBeta(o) => (Command::SweepBeta, o),
        Cmd::Convergence(o) => (Command::Convergence, o),
    };
    match execute(cmd, opts) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(3)
        }
    }
}
