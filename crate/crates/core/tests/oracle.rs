use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rcrl::env::Environment;
use rcrl::envs::{ConstantConstraint, DoubleIntegrator};
use rcrl::oracle::{
    analytic_kernel, contraction_check, evaluate_policy_safety, solve_sbe, GridSpec, OracleConfig,
    SafetyBellman,
};

fn di_grid(n: usize) -> GridSpec {
    GridSpec::uniform(2, -5.0, 5.0, n).unwrap()
}

#[test]
fn constant_constraint_is_its_own_fixed_point() {
    let env = ConstantConstraint::new(-1.0);
    let sol = solve_sbe(&env, &di_grid(21), &OracleConfig::default()).unwrap();
    assert!(sol.values().values.iter().all(|v| (v + 1.0).abs() < 1e-12));
    assert!(sol.values().kernel().mask.iter().all(|m| *m));
}

#[test]
fn double_integrator_origin_feasible_and_fast_top_infeasible() {
    let env = DoubleIntegrator::default();
    let sol = solve_sbe(&env, &di_grid(101), &OracleConfig::default()).unwrap();
    let v = sol.values();
    assert!(v.interpolate(&[0.0, 0.0]) < 0.0);
    assert!(v.interpolate(&[0.0, 5.0]) > 0.0);
    // Braking distance from (4, 1.5) is 2.25 > 1.
    assert!(v.interpolate(&[4.0, 1.5]) > 0.0);
    assert!(v.interpolate(&[4.0, -1.5]) < 0.0);
}

#[test]
fn residuals_decrease_after_first_sweep() {
    let env = DoubleIntegrator::default();
    let sol = solve_sbe(&env, &di_grid(61), &OracleConfig::default()).unwrap();
    let r = &sol.solution.residuals;
    assert!(r.len() > 2);
    for w in r[1..].windows(2) {
        assert!(w[1] <= w[0], "residual increased: {} -> {}", w[0], w[1]);
    }
}

#[test]
fn value_is_floored_by_constraint() {
    // (1-γ)h + γ·max{h, ·} >= (1-γ)h + γh = h.
    let env = DoubleIntegrator::default();
    let cfg = OracleConfig::default();
    let sol = solve_sbe(&env, &di_grid(61), &cfg).unwrap();
    let v = sol.values();
    for (i, p) in v.spec.points().enumerate() {
        assert!(v.values[i] >= env.constraint(&p) - 1e-12);
    }
}

#[test]
fn non_convergence_reports_residual() {
    let env = DoubleIntegrator::default();
    let cfg = OracleConfig { max_sweeps: 3, ..OracleConfig::default() };
    let err = solve_sbe(&env, &di_grid(41), &cfg).unwrap_err();
    match err {
        rcrl::error::OracleError::NotConverged { sweeps, residual } => {
            assert_eq!(sweeps, 3);
            assert!(residual > 0.0);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn grid_dimension_must_match_state_dimension() {
    let env = DoubleIntegrator::default();
    let g = GridSpec::uniform(3, -5.0, 5.0, 5).unwrap();
    assert!(solve_sbe(&env, &g, &OracleConfig::default()).is_err());
}

#[test]
fn greedy_policy_reproduces_sbe_values() {
    let env = DoubleIntegrator::default();
    let cfg = OracleConfig::default();
    let grid = di_grid(81);
    let sbe = solve_sbe(&env, &grid, &cfg).unwrap();
    let policy = sbe.greedy_policy();
    let eval = evaluate_policy_safety(&env, &policy, &grid, &cfg).unwrap();
    let gap = eval.values.sup_distance(sbe.values());
    assert!(gap <= 2.0 * cfg.tolerance, "gap {gap}");
}

#[test]
fn null_policy_drifts_out() {
    let env = DoubleIntegrator::default();
    let cfg = OracleConfig::default();
    let grid = di_grid(81);
    let eval = evaluate_policy_safety(&env, &|_: &[f64]| vec![0.0], &grid, &cfg).unwrap();
    assert!(eval.values.interpolate(&[0.0, 1.0]) > 0.0);
    // At rest the null policy is safe forever.
    assert!(eval.values.interpolate(&[1.0, 0.0]) < 0.0);
}

#[test]
fn policy_kernels_nest_inside_optimal_kernel() {
    let env = DoubleIntegrator::default();
    let cfg = OracleConfig::default();
    let grid = di_grid(61);
    let optimal = solve_sbe(&env, &grid, &cfg).unwrap().values().kernel();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..4 {
        let (k1, k2, c) = (rng.random_range(-1.0..1.0), rng.random_range(-2.0..2.0), rng.random_range(-0.3..0.3));
        let policy = move |s: &[f64]| vec![(k1 * s[0] + k2 * s[1] + c).clamp(-0.5, 0.5)];
        let k = evaluate_policy_safety(&env, &policy, &grid, &cfg).unwrap().values.kernel();
        assert_eq!(k.excess_over(&optimal, 1), 0);
    }
}

#[test]
fn kernel_shrinks_with_discount_up_to_one_band() {
    let env = DoubleIntegrator::default();
    let grid = di_grid(61);
    let lo = solve_sbe(&env, &grid, &OracleConfig { gamma: 0.95, ..Default::default() })
        .unwrap()
        .values()
        .kernel();
    let hi = solve_sbe(&env, &grid, &OracleConfig { gamma: 0.99, ..Default::default() })
        .unwrap()
        .values()
        .kernel();
    assert_eq!(hi.excess_over(&lo, 1), 0);
}

#[test]
fn contraction_ratio_bounded_by_gamma() {
    let cfg = OracleConfig::default();
    let ratio = contraction_check(&cfg, 20, 9).unwrap();
    assert!(ratio <= cfg.gamma + 1e-12, "ratio {ratio}");
    assert!(ratio > 0.0);
}

#[test]
fn contraction_ratio_examples() {
    let env = DoubleIntegrator::default();
    let grid = di_grid(21);
    let op = SafetyBellman::for_policy(&env, &grid, 0.99, &|_: &[f64]| vec![0.0]).unwrap();
    let q: Vec<f64> = (0..grid.len()).map(|i| 100.0 + i as f64).collect();
    assert_eq!(op.contraction_ratio(&q, &q), 0.0);

    // Values far above h keep the max on the value branch, so a constant
    // shift comes back scaled by exactly gamma on every non-exit cell.
    let kappa = 1e-3;
    let shifted: Vec<f64> = q.iter().map(|v| v + kappa).collect();
    let r = op.contraction_ratio(&q, &shifted);
    assert!((r - 0.99).abs() < 1e-9, "ratio {r}");
}

#[test]
fn analytic_and_dp_kernels_mostly_agree_on_coarse_grid() {
    let env = DoubleIntegrator::default();
    let grid = di_grid(81);
    let dp = solve_sbe(&env, &grid, &OracleConfig::default()).unwrap().values().kernel();
    let exact = analytic_kernel(&grid, 0.5, 5.0).unwrap();
    assert!(dp.agreement(&exact) > 0.95, "agreement {}", dp.agreement(&exact));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn operator_is_monotone(seed in any::<u64>(), scale in 0.01f64..10.0) {
        let env = DoubleIntegrator::default();
        let grid = di_grid(15);
        let op = SafetyBellman::with_actions(&env, &grid, 0.99, &[vec![-0.5], vec![0.0], vec![0.5]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-10.0..10.0)).collect();
        let q_hat: Vec<f64> = q.iter().map(|v| v + scale * rng.random_range(0.0..1.0)).collect();
        let (bq, bq_hat) = (op.apply(&q), op.apply(&q_hat));
        for (a, b) in bq.iter().zip(&bq_hat) {
            prop_assert!(a <= b);
        }
        prop_assert!(op.contraction_ratio(&q, &q_hat) <= 0.99 + 1e-12);
    }
}
