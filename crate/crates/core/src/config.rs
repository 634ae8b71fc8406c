//! Run configuration: one TOML file per experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::constraints::ConstraintKind;
use crate::env::Environment;
use crate::envs::{DoubleIntegrator, DoubleIntegratorSpec, Quadrotor2D, Quadrotor2DSpec};
use crate::error::{Error, Result};
use crate::oracle::{GridSpec, OracleConfig};
use crate::rac::TrainConfig;

/// Default output root when neither the config nor the command line names one.
pub const OUTPUT_ENV_VAR: &str = "RCRL_OUT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Rcrl,
    Lagrangian,
    Cbf,
    Si,
    RewardShaping,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    DoubleIntegrator,
    Quadrotor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub kind: EnvKind,
    pub double_integrator: DoubleIntegratorSpec,
    pub quadrotor: Quadrotor2DSpec,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            kind: EnvKind::DoubleIntegrator,
            double_integrator: DoubleIntegratorSpec::default(),
            quadrotor: Quadrotor2DSpec::default(),
        }
    }
}

impl EnvConfig {
    pub fn build(&self) -> Box<dyn Environment> {
        match self.kind {
            EnvKind::DoubleIntegrator => Box::new(DoubleIntegrator::new(self.double_integrator.clone())),
            EnvKind::Quadrotor => Box::new(Quadrotor2D::new(self.quadrotor.clone())),
        }
    }
}

/// Hyperparameters of the baseline constraint functionals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstraintParams {
    pub mu: f64,
    pub sigma: f64,
    pub n: f64,
    pub k: f64,
    pub eta_d: f64,
    pub rho: f64,
    pub threshold: f64,
}

impl Default for ConstraintParams {
    fn default() -> Self {
        Self { mu: 0.1, sigma: 0.1, n: 2.0, k: 1.0, eta_d: 0.1, rho: 0.5, threshold: 0.1 }
    }
}

/// Grid for the oracle command and for classifying probe and evaluation
/// states of 2-D environments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub points: usize,
    pub action_samples: usize,
    pub tolerance: f64,
    pub gamma: f64,
    pub max_sweeps: usize,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self { points: 201, action_samples: 21, tolerance: 1e-6, gamma: 0.99, max_sweeps: 100_000 }
    }
}

impl OracleSection {
    pub fn solver_config(&self) -> OracleConfig {
        OracleConfig {
            gamma: self.gamma,
            action_samples: self.action_samples,
            tolerance: self.tolerance,
            max_sweeps: self.max_sweeps,
        }
    }

    /// Uniform grid over the probe box of a 2-D environment.
    pub fn grid(&self, env: &dyn Environment) -> Result<GridSpec> {
        let spec = env.spec();
        if spec.state_dim != 2 {
            return Err(Error::Config(format!("oracle needs a 2-D environment, `{}` has {} dims", spec.name, spec.state_dim)));
        }
        let axes = (0..2).map(|i| crate::oracle::Axis::new(spec.probe_low[i], spec.probe_high[i], self.points)).collect();
        Ok(GridSpec::new(axes)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_total_steps")]
    pub total_steps: u64,
    #[serde(default = "default_eval_interval")]
    pub eval_interval: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default)]
    pub constraint: ConstraintParams,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub oracle: OracleSection,
}

fn default_total_steps() -> u64 {
    200_000
}

fn default_eval_interval() -> u64 {
    5_000
}

impl RunConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            seed: 0,
            total_steps: default_total_steps(),
            eval_interval: default_eval_interval(),
            output_dir: None,
            env: EnvConfig::default(),
            constraint: ConstraintParams::default(),
            train: TrainConfig::default(),
            oracle: OracleSection::default(),
        }
    }

    pub fn constraint_kind(&self) -> ConstraintKind {
        let p = &self.constraint;
        match self.algorithm {
            Algorithm::Rcrl => ConstraintKind::Reachability,
            Algorithm::Lagrangian => ConstraintKind::CumulativeCost { threshold: p.threshold },
            Algorithm::Cbf => ConstraintKind::Cbf { mu: p.mu },
            Algorithm::Si => ConstraintKind::SafetyIndex { sigma: p.sigma, n: p.n, k: p.k, eta_d: p.eta_d },
            Algorithm::RewardShaping => ConstraintKind::RewardShaping { rho: p.rho },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eval_interval == 0 {
            return Err(Error::Config("eval_interval: must be positive".into()));
        }
        self.constraint_kind()
            .validate()
            .map_err(|e| Error::Config(format!("constraint: {e}")))?;
        self.train.validate()?;
        self.oracle.solver_config().validate().map_err(|e| Error::Config(format!("oracle: {e}")))?;
        self.env.build().spec().validate().map_err(|e| Error::Config(format!("env: {e}")))?;
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses `text`, applies `key=value` overrides (dotted paths, values in
    /// TOML syntax with bare strings accepted) and validates.
    pub fn load_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::load_with_overrides(&text, overrides)
    }

    /// SHA-256 of the canonical serialization, as lowercase hex.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml_string()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    /// `<root>/<stem>_seed<seed>` where the root is the config's
    /// `output_dir`, else `$RCRL_OUT`, else `out`.
    pub fn run_dir(&self, stem: &str, root_override: Option<&Path>) -> PathBuf {
        let root = root_override
            .map(Path::to_path_buf)
            .or_else(|| self.output_dir.as_ref().map(PathBuf::from))
            .or_else(|| std::env::var_os(OUTPUT_ENV_VAR).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"));
        root.join(format!("{stem}_seed{}", self.seed))
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::Config(format!("override `{spec}` has an empty key")));
    }
    let value = parse_value(raw);
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = RunConfig::from_toml_str("algorithm = \"rcrl\"").unwrap();
        assert_eq!(cfg, RunConfig::new(Algorithm::Rcrl));
        cfg.validate().unwrap();
    }

    #[test]
    fn round_trip_is_identity() {
        let mut cfg = RunConfig::new(Algorithm::Si);
        cfg.env.kind = EnvKind::Quadrotor;
        cfg.train.hidden = vec![32, 32];
        cfg.train.lr_critic = crate::rac::LrRange(3e-4, 3e-6);
        cfg.output_dir = Some("runs".into());
        cfg.seed = 42;
        let text = cfg.to_toml_string().unwrap();
        let back = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml_string().unwrap(), text);
        assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
    }

    #[test]
    fn overrides_set_dotted_paths() {
        let cfg = RunConfig::load_with_overrides(
            "algorithm = \"cbf\"",
            &["seed=7".into(), "train.batch_size=64".into(), "env.kind=quadrotor".into(), "constraint.mu=0.2".into()],
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.train.batch_size, 64);
        assert_eq!(cfg.env.kind, EnvKind::Quadrotor);
        assert_eq!(cfg.constraint_kind(), ConstraintKind::Cbf { mu: 0.2 });
    }

    #[test]
    fn invalid_inputs_are_config_errors() {
        assert!(RunConfig::from_toml_str("algorithm = \"ppo\"").is_err());
        assert!(RunConfig::from_toml_str("algorithm = \"rcrl\"\nbogus = 1").is_err());
        assert!(RunConfig::load_with_overrides("algorithm = \"rcrl\"", &["train.lr_actor=[1.0, 1e-6]".into()]).is_err());
        assert!(RunConfig::load_with_overrides("algorithm = \"cbf\"", &["constraint.mu=2.0".into()]).is_err());
        assert!(RunConfig::load_with_overrides("algorithm = \"rcrl\"", &["seed".into()]).is_err());
    }

    #[test]
    fn run_dir_layout() {
        let mut cfg = RunConfig::new(Algorithm::Rcrl);
        cfg.seed = 7;
        assert_eq!(cfg.run_dir("di_rcrl", Some(Path::new("out"))), PathBuf::from("out/di_rcrl_seed7"));
        cfg.output_dir = Some("elsewhere".into());
        assert_eq!(cfg.run_dir("di_rcrl", None), PathBuf::from("elsewhere/di_rcrl_seed7"));
    }

    #[test]
    fn hash_changes_with_content() {
        let a = RunConfig::new(Algorithm::Rcrl);
        let mut b = a.clone();
        b.seed = 1;
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
        assert_eq!(a.hash().unwrap().len(), 64);
    }
}
