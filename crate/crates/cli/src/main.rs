//! `graphrep` command line: runs the experiments and dumps environments and
//! bases.
//!
//! Exit status: 0 on success, 1 on usage or configuration errors, 2 when an
//! experiment fails at run time.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use graphrep::harness::{self, EnvKind, ExperimentConfig, ModelKind};
use graphrep::Error;

#[derive(Debug, Parser)]
#[command(name = "graphrep", version, about = "Graph-embedding basis functions for least-squares policy iteration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Learn policies with each basis and record steps-to-goal.
    Grpi(ExperimentArgs),
    /// Smoothness of the optimal value function on estimated and ideal graphs.
    Smoothness(ExperimentArgs),
    /// Least-squares fitting error of the optimal value function per basis.
    Mse(ExperimentArgs),
    /// Write one basis matrix as TSV.
    Embed(ExperimentArgs),
    /// Write an environment's layout map.
    Env(EnvArgs),
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// Config file of `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Single seed replacing the configured seed list.
    #[arg(long)]
    seed: Option<u64>,
    /// two-room, obstacle-room or three-room.
    #[arg(long)]
    env: Option<String>,
    /// pvf, pvf-ideal, n2v, s2v, gw or vgae; `grpi` and `mse` take a
    /// comma-separated list.
    #[arg(long)]
    model: Option<String>,
    /// Basis dimension, or a comma-separated ascending list.
    #[arg(long, allow_negative_numbers = true)]
    dim: Option<String>,
}

#[derive(Debug, Args)]
struct EnvArgs {
    #[arg(long, default_value = "two-room")]
    env: String,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Width of the three-room layout.
    #[arg(long, default_value_t = 100)]
    width: usize,
    /// Height of the three-room layout.
    #[arg(long, default_value_t = 50)]
    height: usize,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Parse { .. } => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn parse_dims(text: &str) -> Result<Vec<usize>, Failure> {
    text.split(',')
        .map(|part| match part.trim().parse::<i64>() {
            Ok(d) if d > 0 => Ok(d as usize),
            _ => Err(Failure::Usage(format!("--dim must be a positive integer or a list of them, got '{text}'"))),
        })
        .collect()
}

fn parse_models(text: &str) -> Result<Vec<ModelKind>, Failure> {
    text.split(',')
        .map(|m| m.trim().parse::<ModelKind>().map_err(|e| Failure::Usage(format!("--model: {e}"))))
        .collect()
}

/// Config file (if any) with the flags applied on top.
fn load_config(args: &ExperimentArgs) -> Result<(ExperimentConfig, Vec<ModelKind>), Failure> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_file(path).map_err(|e| match e {
            Error::Io(io) => Failure::Usage(format!("cannot read config {}: {io}", path.display())),
            other => Failure::from(other),
        })?,
        None => ExperimentConfig::default(),
    };
    if let Some(env) = &args.env {
        cfg.env = env.parse::<EnvKind>().map_err(|e| Failure::Usage(format!("--env: {e}")))?;
    }
    let mut models = vec![cfg.model];
    if let Some(text) = &args.model {
        models = parse_models(text)?;
        cfg.model = models[0];
    }
    if let Some(text) = &args.dim {
        cfg.dims = parse_dims(text)?;
    }
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    cfg.validate()?;
    Ok((cfg, models))
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_records(records: &[harness::ResultRecord], out: Option<&Path>) -> Result<(), Failure> {
    let mut w = open_output(out)?;
    harness::write_csv(records, &mut w)?;
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Grpi(args) => {
            let (cfg, models) = load_config(&args)?;
            let mut records = Vec::new();
            for model in models {
                records.extend(harness::run_grpi(&ExperimentConfig { model, ..cfg.clone() })?);
            }
            if records.is_empty() {
                log::warn!("every experiment cell failed; writing an empty table");
            }
            write_records(&records, args.out.as_deref())
        }
        Command::Smoothness(args) => {
            let (cfg, _) = load_config(&args)?;
            write_records(&harness::run_smoothness(&cfg)?, args.out.as_deref())
        }
        Command::Mse(args) => {
            let (cfg, models) = load_config(&args)?;
            write_records(&harness::run_mse(&cfg, &models)?, args.out.as_deref())
        }
        Command::Embed(args) => {
            let (cfg, _) = load_config(&args)?;
            if cfg.dims.len() != 1 || cfg.seeds.len() != 1 {
                return Err(Failure::Usage("embed needs exactly one dimension and one seed".into()));
            }
            let basis = harness::embed(&cfg, cfg.dims[0], cfg.seeds[0])?;
            let mut w = open_output(args.out.as_deref())?;
            basis.write_tsv(&mut w)?;
            w.flush()?;
            Ok(())
        }
        Command::Env(args) => {
            let kind = args.env.parse::<EnvKind>().map_err(|e| Failure::Usage(format!("--env: {e}")))?;
            let spec = kind.spec((args.width, args.height))?;
            let mut w = open_output(args.out.as_deref())?;
            w.write_all(spec.to_map().as_bytes())?;
            w.flush()?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
