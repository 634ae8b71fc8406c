use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rcrl::config::{RunConfig, OUTPUT_ENV_VAR};
use rcrl::error::Error;
use rcrl::rac::{SliceSpec, FAILURE_MARKER};
use rcrl::runner;

#[derive(Parser)]
#[command(name = "rcrl", version, about = "Reachability-constrained RL: training, ground truth and export")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy; writes config, manifest, metrics.csv and checkpoints.
    Train(TrainArgs),
    /// Solve the safety Bellman equation on a grid (2-D environments).
    Oracle(OutArgs),
    /// Evaluate a checkpoint under the environment's protocol.
    Eval(EvalArgs),
    /// Export learned-constraint slices as CSV.
    Slice(SliceArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Dotted `key=value` overrides, applied in order.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct OutArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Output directory; defaults to a directory under the output root.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace existing output.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Output root; the run directory is `<root>/<config stem>_seed<seed>`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SliceArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Slice spec (TOML): axes, lower, upper, counts, base, optional sweep.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

enum Failure {
    /// Bad configuration or inputs; exit 2.
    Usage(String),
    /// The command itself failed; exit 1.
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn io_err(e: std::io::Error) -> Failure {
    Failure::Runtime(e.to_string())
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig, Failure> {
    RunConfig::load(&args.config, &args.overrides).map_err(|e| match e {
        Error::Io(io) => Failure::Usage(format!("{}: {io}", args.config.display())),
        other => Failure::Usage(other.to_string()),
    })
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into())
}

/// Clears `path` under `--force`; otherwise refuses if it exists.
fn claim(path: &Path, force: bool) -> Result<(), Failure> {
    if !path.exists() {
        return Ok(());
    }
    if !force {
        return Err(Failure::Usage(format!("{} exists; pass --force to replace it", path.display())));
    }
    if path.is_dir() {
        fs::remove_dir_all(path).map_err(io_err)
    } else {
        fs::remove_file(path).map_err(io_err)
    }
}

fn cmd_train(args: &TrainArgs) -> Result<(), Failure> {
    let cfg = load_config(&args.cfg)?;
    cfg.validate()?;
    let dir = cfg.run_dir(&stem(&args.cfg.config), args.out.as_deref());
    claim(&dir, args.force)?;
    fs::create_dir_all(&dir).map_err(io_err)?;
    match runner::run_training(&cfg, Some(&dir)) {
        Ok(run) => {
            let report = serde_json::json!({
                "run_dir": dir,
                "final_eval": run.artifacts.final_eval,
            });
            println!("{}", serde_json::to_string_pretty(&report).map_err(|e| Failure::Runtime(e.to_string()))?);
            Ok(())
        }
        Err(e) => {
            let marker = dir.join(FAILURE_MARKER);
            if !marker.exists() {
                let _ = fs::write(&marker, format!("{e}\n"));
            }
            Err(Failure::Runtime(e.to_string()))
        }
    }
}

fn cmd_oracle(args: &OutArgs) -> Result<(), Failure> {
    let cfg = load_config(&args.cfg)?;
    cfg.validate()?;
    let env = cfg.env.build();
    cfg.oracle.grid(env.as_ref())?;
    let dir = match &args.out {
        Some(d) => d.clone(),
        None => {
            let root = cfg
                .output_dir
                .as_ref()
                .map(PathBuf::from)
                .or_else(|| std::env::var_os(OUTPUT_ENV_VAR).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("out"));
            root.join(format!("{}_oracle", stem(&args.cfg.config)))
        }
    };
    claim(&dir, args.force)?;
    let summary = runner::write_oracle_outputs(&cfg, &dir)?;
    println!("{}", serde_json::to_string_pretty(&summary).map_err(|e| Failure::Runtime(e.to_string()))?);
    Ok(())
}

/// Checkpoint problems are input errors.
fn as_input_error(e: Error) -> Failure {
    match e {
        Error::Io(_) | Error::Approx(_) | Error::Config(_) => Failure::Usage(e.to_string()),
        other => Failure::Runtime(other.to_string()),
    }
}

fn cmd_eval(args: &EvalArgs) -> Result<(), Failure> {
    let cfg = load_config(&args.cfg)?;
    cfg.validate()?;
    if let Some(out) = &args.out {
        claim(out, args.force)?;
    }
    let env = cfg.env.build();
    rcrl::rac::load_networks(&args.checkpoint, env.as_ref(), &cfg.constraint_kind(), &cfg.train).map_err(as_input_error)?;
    let report = runner::evaluate_checkpoint(&cfg, &args.checkpoint)?;
    let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::Runtime(e.to_string()))?;
    println!("{text}");
    if let Some(out) = &args.out {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(io_err)?;
        }
        fs::write(out, text + "\n").map_err(io_err)?;
    }
    Ok(())
}

fn cmd_slice(args: &SliceArgs) -> Result<(), Failure> {
    let cfg = load_config(&args.cfg)?;
    cfg.validate()?;
    let text = fs::read_to_string(&args.spec).map_err(|e| Failure::Usage(format!("{}: {e}", args.spec.display())))?;
    let spec: SliceSpec =
        toml::from_str(&text).map_err(|e| Failure::Usage(format!("slice spec {}: {e}", args.spec.display())))?;
    spec.expand()?;
    let env = cfg.env.build();
    rcrl::rac::load_networks(&args.checkpoint, env.as_ref(), &cfg.constraint_kind(), &cfg.train).map_err(as_input_error)?;
    claim(&args.out, args.force)?;
    for path in runner::write_slices(&cfg, &args.checkpoint, &spec, &args.out)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Slice(a) => cmd_slice(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
