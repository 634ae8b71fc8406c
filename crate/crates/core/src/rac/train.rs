use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::mpsc::sync_channel;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::nets::{Batch, Networks};
use super::replay::ReplayBuffer;
use super::updates::{actor_update, critic_update, multiplier_update, safety_critic_update};
use crate::approx::{checkpoint, polyak_update, Adam, LinearSchedule, Mlp, ProjectionSpec};
use crate::constraints::{constraint_value, shape_reward, ConstraintKind, ConstraintSample, MultiplierShape};
use crate::env::{cost_of, ActionVec, Done, Environment, StateVec, Transition};
use crate::error::{Error, Result};
use crate::oracle::KernelMask;

/// Independent random streams derived from the run seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    EnvReset = 2,
    Exploration = 3,
    Replay = 4,
    Eval = 5,
}

pub fn rng_for(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Radical-inverse (Halton) point `index` in `[0, 1)^dims`; at most 12 dims.
pub fn halton(index: u64, dims: usize) -> Vec<f64> {
    const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    PRIMES[..dims]
        .iter()
        .map(|&b| {
            let (mut i, mut f, mut r) = (index, 1.0, 0.0);
            while i > 0 {
                f /= b as f64;
                r += f * (i % b) as f64;
                i /= b;
            }
            r
        })
        .collect()
}

/// Quasi-random probe states split by feasibility class.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeSet {
    pub feasible: Vec<Vec<f64>>,
    pub infeasible: Vec<Vec<f64>>,
}

impl ProbeSet {
    /// With an oracle kernel, states at least two cells inside it count as
    /// feasible and states outside it as infeasible; without one, the sign
    /// of `h` decides.
    pub fn build(env: &dyn Environment, kernel: Option<&KernelMask>, count: usize) -> Self {
        let spec = env.spec();
        let dims = spec.probe_low.len();
        let deep = kernel.map(|k| k.erode(2));
        let (mut feasible, mut infeasible) = (Vec::with_capacity(count), Vec::with_capacity(count));
        let mut i = 1u64;
        // A class may be empty for degenerate kernels; stop after a bounded search.
        while (feasible.len() < count || infeasible.len() < count) && i < 1000 * count as u64 {
            let u = halton(i, dims);
            i += 1;
            let base: Vec<f64> = (0..dims).map(|j| spec.probe_low[j] + u[j] * (spec.probe_high[j] - spec.probe_low[j])).collect();
            let s = env.complete_state(&base).0;
            let (is_feasible, is_infeasible) = match (kernel, &deep) {
                (Some(k), Some(d)) => (d.at(&s), !k.at(&s)),
                _ => {
                    let h = env.constraint(&s);
                    (h <= 0.0, h > 0.0)
                }
            };
            if is_feasible && feasible.len() < count {
                feasible.push(s);
            } else if is_infeasible && infeasible.len() < count {
                infeasible.push(s);
            }
        }
        Self { feasible, infeasible }
    }
}

pub fn mean_lambda(nets: &Networks, states: &[Vec<f64>]) -> Result<f64> {
    if states.is_empty() {
        return Ok(f64::NAN);
    }
    let s_n = nets.norm.states(states.iter().map(|s| s.as_slice()));
    let l = nets.lambdas(&s_n)?;
    Ok(l.iter().sum::<f64>() / l.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean undiscounted return `Σr` per episode.
    pub avg_return: f64,
    /// Mean of `Σc / T` per episode over the visited successor states, `T`
    /// the protocol horizon.
    pub violation_rate: f64,
    /// Fraction of episodes with at least one violation.
    pub violating_episodes: f64,
    pub episodes: usize,
    pub horizon: usize,
}

/// Evaluation starts: the environment's fixed list if it has one, otherwise
/// `n` seeded states inside the interior of the oracle kernel, otherwise `n`
/// seeded resets.
pub fn evaluation_starts(env: &dyn Environment, kernel: Option<&KernelMask>, n: usize, rng: &mut dyn RngCore) -> Vec<StateVec> {
    if let Some(starts) = env.evaluation_starts() {
        return starts;
    }
    match kernel {
        Some(k) => {
            let inner = k.erode(1);
            let mut out = Vec::with_capacity(n);
            let mut tries = 0usize;
            while out.len() < n && tries < 10_000 * n {
                tries += 1;
                let s = env.reset(rng);
                if inner.at(s.as_slice()) {
                    out.push(s);
                }
            }
            out
        }
        None => (0..n).map(|_| env.reset(rng)).collect(),
    }
}

/// Deterministic rollouts of the actor from each start.
pub fn evaluate(env: &dyn Environment, nets: &Networks, starts: &[StateVec]) -> Result<EvalReport> {
    let horizon = env.spec().max_episode_len;
    let (mut ret, mut rate, mut bad) = (0.0, 0.0, 0usize);
    for start in starts {
        let mut s = start.clone();
        let (mut g, mut costs, mut violated) = (0.0, 0u64, env.constraint(s.as_slice()) > 0.0);
        for _ in 0..horizon {
            let a = ActionVec(nets.act(s.as_slice())?);
            let t = env.step(&s, &a)?;
            g += t.r;
            costs += u64::from(cost_of(t.h_next));
            violated |= t.h_next > 0.0;
            if t.done == Done::Exit {
                break;
            }
            s = t.s_next;
        }
        ret += g;
        rate += costs as f64 / horizon as f64;
        bad += usize::from(violated);
    }
    let n = starts.len().max(1) as f64;
    Ok(EvalReport {
        avg_return: ret / n,
        violation_rate: rate / n,
        violating_episodes: bad as f64 / n,
        episodes: starts.len(),
        horizon,
    })
}

pub const METRICS_HEADER: &str =
    "step,avg_return,violation_rate,q_loss,qh_loss,actor_loss,mean_lambda_feasible,mean_lambda_infeasible";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub avg_return: f64,
    pub violation_rate: f64,
    pub q_loss: f64,
    pub qh_loss: f64,
    pub actor_loss: f64,
    pub mean_lambda_feasible: f64,
    pub mean_lambda_infeasible: f64,
}

impl MetricsRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.step,
            self.avg_return,
            self.violation_rate,
            self.q_loss,
            self.qh_loss,
            self.actor_loss,
            self.mean_lambda_feasible,
            self.mean_lambda_infeasible
        )
    }
}

pub fn write_metrics_csv<W: Write>(mut w: W, rows: &[MetricsRow]) -> std::io::Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.csv_line())?;
    }
    Ok(())
}

/// Everything a training run needs besides the output location.
pub struct TrainSetup<'a> {
    pub env: &'a dyn Environment,
    pub kind: ConstraintKind,
    pub cfg: TrainConfig,
    pub total_steps: u64,
    pub eval_interval: u64,
    pub seed: u64,
    /// Oracle kernel for probe classification and evaluation starts.
    pub kernel: Option<KernelMask>,
}

#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub metrics: Vec<MetricsRow>,
    pub initial: Networks,
    pub nets: Networks,
    pub probes: ProbeSet,
    pub final_eval: EvalReport,
}

/// Collects one transition per call with exploration noise.
struct Rollout<'a> {
    env: &'a dyn Environment,
    state: StateVec,
    t: usize,
    reset_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
}

impl<'a> Rollout<'a> {
    fn new(env: &'a dyn Environment, seed: u64) -> Self {
        let mut reset_rng = rng_for(seed, Stream::EnvReset);
        let state = env.reset(&mut reset_rng);
        Self { env, state, t: 0, reset_rng, noise_rng: rng_for(seed, Stream::Exploration) }
    }

    fn step(&mut self, actor: &Mlp, obs_scale: &[f64], std: f64) -> Result<Transition> {
        let s_n: Vec<f64> = self.state.0.iter().zip(obs_scale).map(|(v, k)| v * k).collect();
        let mut a = actor.forward(&s_n)?;
        if std > 0.0 {
            let normal = Normal::new(0.0, std).map_err(|_| Error::Config("exploration std".into()))?;
            for v in a.iter_mut() {
                *v += normal.sample(&mut self.noise_rng);
            }
        }
        let mut tr = self.env.step(&self.state, &ActionVec(a))?;
        self.t += 1;
        if tr.done == Done::No && self.t >= self.env.spec().max_episode_len {
            tr.done = Done::Timeout;
        }
        if tr.done.is_done() {
            self.state = self.env.reset(&mut self.reset_rng);
            self.t = 0;
        } else {
            self.state = tr.s_next.clone();
        }
        Ok(tr)
    }
}

struct Optimizers {
    critic: Adam,
    safety: Adam,
    actor: Adam,
    multiplier: Option<Adam>,
}

#[derive(Default)]
struct LossAccumulator {
    q: (f64, u64),
    qh: (f64, u64),
    actor: (f64, u64),
}

fn mean((sum, n): (f64, u64)) -> f64 {
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// The learner: networks, optimizers and replay, advanced one environment
/// step at a time.
pub struct Learner<'a> {
    setup: &'a TrainSetup<'a>,
    pub nets: Networks,
    opt: Optimizers,
    buffer: ReplayBuffer,
    replay_rng: ChaCha8Rng,
    updates: u64,
    losses: LossAccumulator,
}

impl<'a> Learner<'a> {
    pub fn new(setup: &'a TrainSetup<'a>) -> Result<Self> {
        let cfg = &setup.cfg;
        let spec = setup.env.spec();
        let mut init_rng = rng_for(setup.seed, Stream::Init);
        let mut nets = Networks::init_with(
            spec,
            &setup.kind,
            &cfg.hidden,
            cfg.multiplier_hidden.as_deref().unwrap_or(&cfg.hidden),
            cfg.lambda_max,
            &mut init_rng,
        )?;
        nets.multiplier_gain = cfg.multiplier_input_gain;
        nets.set_initial_lambda(cfg.lambda_init)?;
        let proj = ProjectionSpec { clip_norm: Some(cfg.clip_norm), box_limit: None };
        let adam = |n: usize, s: LinearSchedule| Adam::new(n, s).with_projection(proj);
        let total = setup.total_steps;
        let opt = Optimizers {
            critic: adam(nets.critic.num_params(), cfg.lr_critic.schedule(total)),
            safety: adam(nets.safety.num_params(), cfg.lr_critic.schedule(total)),
            actor: adam(nets.actor.num_params(), cfg.lr_actor.schedule(total)),
            multiplier: nets.multiplier.as_ref().map(|m| adam(m.num_params(), cfg.lr_multiplier.schedule(total))),
        };
        Ok(Self {
            setup,
            nets,
            opt,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            replay_rng: rng_for(setup.seed, Stream::Replay),
            updates: 0,
            losses: LossAccumulator::default(),
        })
    }

    fn reward(&self, t: &Transition) -> f64 {
        let r = match self.setup.kind {
            k @ ConstraintKind::RewardShaping { .. } => shape_reward(&k, t.r, t.h).expect("reward shaping kind"),
            _ => t.r,
        };
        r * self.setup.cfg.reward_scale
    }

    /// Adds a transition and, past warm-up, runs the updates for step `k`.
    pub fn observe(&mut self, t: Transition, k: u64) -> Result<()> {
        self.buffer.push(t);
        if (self.buffer.len() as u64) < self.setup.cfg.warmup_steps.max(1) {
            return Ok(());
        }
        self.update(k)
    }

    fn update(&mut self, k: u64) -> Result<()> {
        let setup = self.setup;
        let cfg = &setup.cfg;
        let kind = setup.kind;
        let spec = setup.env.spec();
        let idx = self.buffer.sample_indices(cfg.batch_size, &mut self.replay_rng);
        let ts: Vec<&Transition> = idx.iter().map(|i| self.buffer.get(*i)).collect();
        let dt = spec.dt;
        let batch = Batch::from_transitions(
            &ts,
            &self.nets.norm,
            |t| self.reward(t),
            |t| {
                let sample = ConstraintSample { h: t.h, h_next: t.h_next, dt };
                if kind.is_energy_function() {
                    constraint_value(&kind, &sample, None).expect("energy constraints need no critics")
                } else {
                    0.0
                }
            },
        );
        let (lr_c, lr_a, lr_m) = cfg.rates_at(k, setup.total_steps);
        self.updates += 1;

        let g = critic_update(&self.nets, &batch, cfg.gamma)?;
        self.opt.critic.step_with_lr(&mut self.nets.critic.params, &g.grad, lr_c)?;
        self.losses.q.0 += g.loss;
        self.losses.q.1 += 1;

        if self.nets.shape != MultiplierShape::None {
            let g = safety_critic_update(&self.nets, &batch, &kind, cfg.gamma, spec.exit_violation)?;
            self.opt.safety.step_with_lr(&mut self.nets.safety.params, &g.grad, lr_c)?;
            self.losses.qh.0 += g.loss;
            self.losses.qh.1 += 1;
        }

        if self.updates.is_multiple_of(cfg.actor_interval) {
            let g = actor_update(&self.nets, &batch, &kind)?;
            self.opt.actor.step_with_lr(&mut self.nets.actor.params, &g.grad, lr_a)?;
            self.losses.actor.0 += g.loss;
            self.losses.actor.1 += 1;
        }

        if self.updates.is_multiple_of(cfg.multiplier_interval) {
            if let (Some(opt), Some(_)) = (self.opt.multiplier.as_mut(), self.nets.multiplier.as_ref()) {
                let g = multiplier_update(&self.nets, &batch, &kind)?;
                let descent: Vec<f64> = g.grad.iter().map(|v| -v).collect();
                let m = self.nets.multiplier.as_mut().expect("multiplier present");
                opt.step_with_lr(&mut m.params, &descent, lr_m)?;
            }
        }

        polyak_update(&mut self.nets.critic_target.params, &self.nets.critic.params, cfg.tau)?;
        polyak_update(&mut self.nets.safety_target.params, &self.nets.safety.params, cfg.tau)?;
        Ok(())
    }

    fn take_losses(&mut self) -> (f64, f64, f64) {
        let l = std::mem::take(&mut self.losses);
        (mean(l.q), mean(l.qh), mean(l.actor))
    }
}

/// Artifact writer for a run directory.
struct RunDir<'p> {
    root: &'p Path,
    metrics: BufWriter<File>,
}

impl<'p> RunDir<'p> {
    fn create(root: &'p Path) -> Result<Self> {
        fs::create_dir_all(root.join("checkpoints"))?;
        let mut metrics = BufWriter::new(File::create(root.join("metrics.csv"))?);
        writeln!(metrics, "{METRICS_HEADER}")?;
        Ok(Self { root, metrics })
    }

    fn row(&mut self, row: &MetricsRow) -> Result<()> {
        writeln!(self.metrics, "{}", row.csv_line())?;
        self.metrics.flush()?;
        Ok(())
    }

    fn checkpoint(&self, name: &str, nets: &Networks, setup: &TrainSetup<'_>) -> Result<()> {
        let path = self.root.join("checkpoints").join(format!("{name}.bin"));
        checkpoint::save(&path, &nets.named())?;
        let sidecar = serde_json::json!({
            "format": "rcrl-net-v1",
            "env": setup.env.spec().name,
            "constraint": setup.kind,
            "train": setup.cfg,
            "normalizer": nets.norm,
            "lambda_max": nets.lambda_max,
        });
        fs::write(path.with_extension("json"), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }
}

pub const FAILURE_MARKER: &str = "FAILED";

/// Runs the actor-critic loop. With `out`, metrics are streamed to
/// `out/metrics.csv`, checkpoints go to `out/checkpoints/`, and a failure
/// leaves a `FAILED` marker holding the error.
pub fn train(setup: &TrainSetup<'_>, out: Option<&Path>) -> Result<RunArtifacts> {
    let mut dir = out.map(RunDir::create).transpose()?;
    let result = train_inner(setup, dir.as_mut());
    if let (Err(e), Some(root)) = (&result, out) {
        fs::write(root.join(FAILURE_MARKER), format!("{e}\n"))?;
    }
    result
}

fn train_inner(setup: &TrainSetup<'_>, mut dir: Option<&mut RunDir<'_>>) -> Result<RunArtifacts> {
    setup.cfg.validate()?;
    setup.kind.validate()?;
    setup.env.spec().validate()?;
    if setup.eval_interval == 0 {
        return Err(Error::Config("eval_interval: must be positive".into()));
    }
    let env = setup.env;
    let mut learner = Learner::new(setup)?;
    let initial = learner.nets.clone();
    if let Some(d) = dir.as_deref_mut() {
        d.checkpoint("init", &initial, setup)?;
    }
    let probes = ProbeSet::build(env, setup.kernel.as_ref(), setup.cfg.probe_count);
    let mut eval_rng = rng_for(setup.seed, Stream::Eval);
    let starts = evaluation_starts(env, setup.kernel.as_ref(), setup.cfg.eval_episodes, &mut eval_rng);

    let mut metrics = Vec::new();
    let mut last_eval = None;
    let mut record = |learner: &mut Learner<'_>, step: u64, dir: Option<&mut RunDir<'_>>| -> Result<()> {
        let report = evaluate(env, &learner.nets, &starts)?;
        let (q, qh, actor) = learner.take_losses();
        let row = MetricsRow {
            step,
            avg_return: report.avg_return,
            violation_rate: report.violation_rate,
            q_loss: q,
            qh_loss: qh,
            actor_loss: actor,
            mean_lambda_feasible: mean_lambda(&learner.nets, &probes.feasible)?,
            mean_lambda_infeasible: mean_lambda(&learner.nets, &probes.infeasible)?,
        };
        if let Some(d) = dir {
            d.row(&row)?;
        }
        metrics.push(row);
        last_eval = Some(report);
        Ok(())
    };

    record(&mut learner, 0, dir.as_deref_mut())?;
    let total = setup.total_steps;
    let obs_scale = learner.nets.norm.obs_scale.clone();
    let mut on_step = |learner: &mut Learner<'_>, k: u64, t: Transition, dir: Option<&mut RunDir<'_>>| -> Result<()> {
        learner.observe(t, k)?;
        let done = k + 1;
        if done.is_multiple_of(setup.eval_interval) || done == total {
            record(learner, done, dir)?;
        }
        Ok(())
    };

    if setup.cfg.rollout_thread {
        // Lockstep schedule: the learner sends the actor snapshot for step k
        // and waits for that step's transition before updating.
        std::thread::scope(|scope| -> Result<()> {
            let (policy_tx, policy_rx) = sync_channel::<(Mlp, f64)>(1);
            let (tr_tx, tr_rx) = sync_channel::<Result<Transition>>(1);
            let seed = setup.seed;
            let scale = obs_scale.clone();
            scope.spawn(move || {
                let mut rollout = Rollout::new(env, seed);
                while let Ok((actor, std)) = policy_rx.recv() {
                    if tr_tx.send(rollout.step(&actor, &scale, std)).is_err() {
                        break;
                    }
                }
            });
            for k in 0..total {
                let std = setup.cfg.exploration.std_at(k, total);
                policy_tx
                    .send((learner.nets.actor.clone(), std))
                    .map_err(|_| Error::Config("rollout thread stopped".into()))?;
                let t = tr_rx.recv().map_err(|_| Error::Config("rollout thread stopped".into()))??;
                on_step(&mut learner, k, t, dir.as_deref_mut())?;
            }
            Ok(())
        })?;
    } else {
        let mut rollout = Rollout::new(env, setup.seed);
        for k in 0..total {
            let std = setup.cfg.exploration.std_at(k, total);
            let t = rollout.step(&learner.nets.actor, &obs_scale, std)?;
            on_step(&mut learner, k, t, dir.as_deref_mut())?;
        }
    }

    if let Some(d) = dir {
        d.checkpoint("final", &learner.nets, setup)?;
    }
    Ok(RunArtifacts {
        metrics,
        initial,
        nets: learner.nets,
        probes,
        final_eval: last_eval.expect("at least one evaluation"),
    })
}

/// Restores networks from a checkpoint file.
pub fn load_networks(path: &Path, env: &dyn Environment, kind: &ConstraintKind, cfg: &TrainConfig) -> Result<Networks> {
    let mut named = checkpoint::load(path)?;
    let take = |named: &mut Vec<(String, Mlp)>, n: &str| checkpoint::take_named(named, n);
    let shape = kind.multiplier_shape();
    let nets = Networks {
        critic: take(&mut named, "critic")?,
        critic_target: take(&mut named, "critic_target")?,
        safety: take(&mut named, "safety")?,
        safety_target: take(&mut named, "safety_target")?,
        actor: take(&mut named, "actor")?,
        multiplier: match shape {
            MultiplierShape::None => None,
            _ => Some(take(&mut named, "multiplier")?),
        },
        shape,
        lambda_max: cfg.lambda_max,
        multiplier_gain: cfg.multiplier_input_gain,
        norm: super::nets::Normalizer::from_spec(env.spec()),
    };
    let spec = env.spec();
    if nets.actor.input_dim() != spec.state_dim
        || nets.actor.output_dim() != spec.action_dim
        || nets.safety.input_dim() != spec.state_dim + spec.action_dim
    {
        return Err(Error::Config(format!("checkpoint does not match environment `{}`", spec.name)));
    }
    Ok(nets)
}
