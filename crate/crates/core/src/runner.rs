//! Glue between a [`RunConfig`] and the trainer: oracle ground truth,
//! manifests and learned-kernel extraction.

use std::fs;
use std::io;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{EnvKind, RunConfig};
use crate::constraints::ConstraintKind;
use crate::env::Environment;
use crate::error::Result;
use crate::error::Error;
use crate::oracle::{analytic_kernel, evaluate_policy_safety, solve_sbe, GridSpec, KernelMask, OracleConfig, SbeSolution};
use crate::rac::{
    evaluate, evaluation_starts, export_slice, load_networks, rng_for, train, EvalReport, Networks, RunArtifacts,
    SliceSpec, Stream, TrainSetup,
};

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub env: String,
    pub algorithm: String,
    pub total_steps: u64,
}

impl Manifest {
    pub fn for_config(cfg: &RunConfig) -> Result<Self> {
        let env = cfg.env.build();
        Ok(Self {
            config_hash: cfg.hash()?,
            seed: cfg.seed,
            version: VERSION.to_string(),
            env: env.spec().name.clone(),
            algorithm: cfg.constraint_kind().name().to_string(),
            total_steps: cfg.total_steps,
        })
    }
}

/// Ground truth for a 2-D environment on the configured grid.
pub struct OracleRun {
    pub grid: GridSpec,
    pub solution: SbeSolution,
    pub seconds: f64,
}

pub fn solve_oracle(cfg: &RunConfig, env: &dyn Environment) -> Result<OracleRun> {
    let grid = cfg.oracle.grid(env)?;
    let start = Instant::now();
    let solution = solve_sbe(env, &grid, &cfg.oracle.solver_config())?;
    Ok(OracleRun { grid, solution, seconds: start.elapsed().as_secs_f64() })
}

/// Sub-zero set of `F(s, π(s))` on `grid` (2-D environments).
pub fn learned_kernel(nets: &Networks, env: &dyn Environment, kind: &ConstraintKind, grid: &GridSpec) -> Result<KernelMask> {
    Ok(export_slice(nets, env, kind, &SliceSpec::full(grid))?.kernel())
}

/// States from which the learned policy itself keeps the constraint, by
/// grid evaluation of its safety value (2-D environments).
pub fn policy_kernel(nets: &Networks, env: &dyn Environment, grid: &GridSpec, oracle: &OracleConfig) -> Result<KernelMask> {
    let policy = |s: &[f64]| nets.act(s).expect("policy input matches the state dimension");
    Ok(evaluate_policy_safety(env, &policy, grid, oracle)?.values.kernel())
}

/// `env` with its constraint tightened to `max(h(s), F(s, π(s)) − η)`.
struct OwnConstraint<'a> {
    inner: &'a dyn Environment,
    nets: &'a Networks,
    eta: f64,
}

impl Environment for OwnConstraint<'_> {
    fn spec(&self) -> &crate::env::EnvSpec {
        self.inner.spec()
    }

    fn reset(&self, rng: &mut dyn rand::RngCore) -> crate::env::StateVec {
        self.inner.reset(rng)
    }

    fn constraint(&self, s: &[f64]) -> f64 {
        let f = self.nets.constraint_at_policy(&[s.to_vec()]).expect("state matches the networks")[0];
        self.inner.constraint(s).max(f - self.eta)
    }

    fn reward(&self, s: &[f64], a: &[f64]) -> f64 {
        self.inner.reward(s, a)
    }

    fn dynamics(&self, s: &[f64], a: &[f64]) -> Vec<f64> {
        self.inner.dynamics(s, a)
    }

    fn in_region(&self, s: &[f64]) -> bool {
        self.inner.in_region(s)
    }
}

/// States from which the learned policy keeps both `h` and its own learned
/// constraint `F(s, π(s))` non-positive at every step: the feasible set of
/// the constrained problem the policy was trained on (2-D environments).
pub fn self_consistent_kernel(
    nets: &Networks,
    env: &dyn Environment,
    kind: &ConstraintKind,
    grid: &GridSpec,
    oracle: &OracleConfig,
) -> Result<KernelMask> {
    let eta = match kind {
        ConstraintKind::RewardShaping { .. } => {
            return Err(Error::Config("reward shaping has no learned constraint".into()))
        }
        ConstraintKind::CumulativeCost { threshold } => *threshold,
        _ => 0.0,
    };
    let own = OwnConstraint { inner: env, nets, eta };
    policy_kernel(nets, &own, grid, oracle)
}

pub struct TrainedRun {
    pub artifacts: RunArtifacts,
    pub oracle: Option<OracleRun>,
}

/// Trains per `cfg`. For 2-D environments the oracle kernel is solved first
/// and used for probes and evaluation starts. With `out`, the resolved
/// config, the manifest and all trainer artifacts are written there.
pub fn run_training(cfg: &RunConfig, out: Option<&Path>) -> Result<TrainedRun> {
    cfg.validate()?;
    let env = cfg.env.build();
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config.toml"), cfg.to_toml_string()?)?;
        let manifest = Manifest::for_config(cfg)?;
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    }
    let oracle = if env.spec().state_dim == 2 { Some(solve_oracle(cfg, env.as_ref())?) } else { None };
    let setup = TrainSetup {
        env: env.as_ref(),
        kind: cfg.constraint_kind(),
        cfg: cfg.train.clone(),
        total_steps: cfg.total_steps,
        eval_interval: cfg.eval_interval,
        seed: cfg.seed,
        kernel: oracle.as_ref().map(|o| o.solution.values().kernel()),
    };
    let artifacts = train(&setup, out)?;
    Ok(TrainedRun { artifacts, oracle })
}

/// What `oracle` writes next to the grids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub env: String,
    pub points: usize,
    pub gamma: f64,
    pub sweeps: usize,
    pub seconds: f64,
    pub kernel_fraction: f64,
    /// Closed-form kernel and its cell agreement with the grid kernel, for
    /// the double integrator.
    pub analytic_fraction: Option<f64>,
    pub agreement: Option<f64>,
}

/// Solves the oracle for `cfg` and writes `value_grid.csv`,
/// `kernel_mask.csv`, `analytic_kernel.csv` (double integrator) and
/// `summary.json` into `dir`.
pub fn write_oracle_outputs(cfg: &RunConfig, dir: &Path) -> Result<OracleSummary> {
    cfg.validate()?;
    let env = cfg.env.build();
    let run = solve_oracle(cfg, env.as_ref())?;
    let values = run.solution.values();
    let kernel = values.kernel();
    fs::create_dir_all(dir)?;
    values.write_csv(io::BufWriter::new(fs::File::create(dir.join("value_grid.csv"))?))?;
    kernel.write_csv(io::BufWriter::new(fs::File::create(dir.join("kernel_mask.csv"))?))?;
    let analytic = match cfg.env.kind {
        EnvKind::DoubleIntegrator => {
            let p = &cfg.env.double_integrator;
            let k = analytic_kernel(&run.grid, p.a_max, p.bound)?;
            k.write_csv(io::BufWriter::new(fs::File::create(dir.join("analytic_kernel.csv"))?))?;
            Some(k)
        }
        EnvKind::Quadrotor => None,
    };
    let summary = OracleSummary {
        env: env.spec().name.clone(),
        points: cfg.oracle.points,
        gamma: cfg.oracle.gamma,
        sweeps: run.solution.solution.residuals.len(),
        seconds: run.seconds,
        kernel_fraction: kernel.fraction(),
        analytic_fraction: analytic.as_ref().map(KernelMask::fraction),
        agreement: analytic.as_ref().map(|a| kernel.agreement(a)),
    };
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(summary)
}

/// Evaluates a checkpoint under the environment's protocol: the fixed
/// starts when it has them, otherwise seeded starts inside the oracle kernel
/// (2-D) or plain resets.
pub fn evaluate_checkpoint(cfg: &RunConfig, checkpoint: &Path) -> Result<EvalReport> {
    cfg.validate()?;
    let env = cfg.env.build();
    let nets = load_networks(checkpoint, env.as_ref(), &cfg.constraint_kind(), &cfg.train)?;
    let kernel = match env.evaluation_starts() {
        None if env.spec().state_dim == 2 => Some(solve_oracle(cfg, env.as_ref())?.solution.values().kernel()),
        _ => None,
    };
    let mut rng = rng_for(cfg.seed, Stream::Eval);
    let starts = evaluation_starts(env.as_ref(), kernel.as_ref(), cfg.train.eval_episodes, &mut rng);
    evaluate(env.as_ref(), &nets, &starts)
}

/// Exports one CSV per slice of `spec` (one per sweep value, or a single
/// `slice.csv`) into `dir`; returns the written paths.
pub fn write_slices(cfg: &RunConfig, checkpoint: &Path, spec: &SliceSpec, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    cfg.validate()?;
    let env = cfg.env.build();
    let kind = cfg.constraint_kind();
    let nets = load_networks(checkpoint, env.as_ref(), &kind, &cfg.train)?;
    let slices = spec.expand()?;
    let grids = slices
        .iter()
        .map(|(_, s)| export_slice(&nets, env.as_ref(), &kind, s))
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(dir)?;
    let mut written = Vec::with_capacity(grids.len());
    for ((name, _), grid) in slices.iter().zip(&grids) {
        let path = dir.join(format!("{name}.csv"));
        grid.write_csv(io::BufWriter::new(fs::File::create(&path)?))?;
        written.push(path);
    }
    Ok(written)
}

