//! Shared fixtures for the update-gradient checks.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rcrl::approx::Mlp;
use rcrl::constraints::ConstraintKind;
use rcrl::env::{ActionVec, Done, Environment, Transition};
use rcrl::envs::{DoubleIntegrator, Quadrotor2D};
use rcrl::rac::{Batch, Grad, Networks};

pub const GAMMA: f64 = 0.99;
pub const TRIALS: usize = 50;
pub const STEP: f64 = 1e-5;

pub fn random_transition(env: &dyn Environment, rng: &mut ChaCha8Rng) -> Transition {
    let spec = env.spec();
    let s = env.reset(rng);
    let s_next = env.reset(rng);
    let a: Vec<f64> = spec.action_low.iter().zip(&spec.action_high).map(|(l, h)| rng.random_range(*l..*h)).collect();
    let h = env.constraint(s.as_slice());
    let h_next = env.constraint(s_next.as_slice());
    Transition {
        r: rng.random_range(-1.0..0.0),
        c: u8::from(h > 0.0),
        done: if rng.random_bool(0.2) { Done::Exit } else { Done::No },
        s,
        a: ActionVec(a),
        s_next,
        h,
        h_next,
    }
}

pub struct Case {
    pub env: Box<dyn Environment>,
    pub nets: Networks,
    pub batch: Batch,
}

pub fn case(kind: &ConstraintKind, rng: &mut ChaCha8Rng) -> Case {
    let env: Box<dyn Environment> =
        if rng.random_bool(0.5) { Box::new(DoubleIntegrator::default()) } else { Box::new(Quadrotor2D::default()) };
    let width = rng.random_range(8..=16);
    let mut nets = Networks::init(env.spec(), kind, &[width, width], 100.0, rng).unwrap();
    // Move targets and the multiplier away from their initial values so
    // every term carries weight.
    for net in [&mut nets.critic_target, &mut nets.safety_target] {
        for p in net.params.iter_mut() {
            *p += rng.random_range(-0.1..0.1);
        }
    }
    if let Some(m) = nets.multiplier.as_mut() {
        for p in m.params.iter_mut() {
            *p += rng.random_range(-0.5..0.5);
        }
    }
    let n = rng.random_range(3..12);
    let ts: Vec<Transition> = (0..n).map(|_| random_transition(env.as_ref(), rng)).collect();
    let refs: Vec<&Transition> = ts.iter().collect();
    let sampled: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let i = std::cell::Cell::new(0);
    let batch = Batch::from_transitions(&refs, &nets.norm, |t| t.r, |_| {
        i.set(i.get() + 1);
        sampled[i.get() - 1]
    });
    Case { env, nets, batch }
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Central differences of `loss` in the parameters selected by `pick`.
pub fn numeric(nets: &Networks, pick: fn(&mut Networks) -> &mut Mlp, loss: &dyn Fn(&Networks) -> f64) -> Vec<f64> {
    let mut probe = nets.clone();
    let n = pick(&mut probe).params.len();
    (0..n)
        .map(|i| {
            let p = pick(&mut probe).params[i];
            pick(&mut probe).params[i] = p + STEP;
            let up = loss(&probe);
            pick(&mut probe).params[i] = p - STEP;
            let down = loss(&probe);
            pick(&mut probe).params[i] = p;
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

/// Largest relative error between `op`'s analytic gradient and central
/// differences of its loss over `trials` random cases; the second value is
/// the number of cases whose analytic gradient was identically zero.
pub fn worst_gradient_error(
    seed: u64,
    trials: usize,
    kinds: &[ConstraintKind],
    pick: fn(&mut Networks) -> &mut Mlp,
    op: &dyn Fn(&Networks, &Batch, &ConstraintKind, f64) -> Grad,
) -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst, mut zero) = (0.0_f64, 0);
    for trial in 0..trials {
        let kind = kinds[trial % kinds.len()];
        let c = case(&kind, &mut rng);
        let exit_violation = c.env.spec().exit_violation;
        let analytic = op(&c.nets, &c.batch, &kind, exit_violation).grad;
        let fd = numeric(&c.nets, pick, &|n| op(n, &c.batch, &kind, exit_violation).loss);
        zero += usize::from(analytic.iter().all(|g| *g == 0.0));
        worst = worst.max(rel_err(&analytic, &fd));
    }
    (worst, zero)
}

pub fn critic(n: &mut Networks) -> &mut Mlp {
    &mut n.critic
}

pub fn safety(n: &mut Networks) -> &mut Mlp {
    &mut n.safety
}

pub fn actor(n: &mut Networks) -> &mut Mlp {
    &mut n.actor
}

pub fn multiplier(n: &mut Networks) -> &mut Mlp {
    n.multiplier.as_mut().unwrap()
}
