mod common;

use std::collections::HashMap;

use clusterdual::delay::{DelayMode, DelaySchedule};
use clusterdual::diagnostics::{check_lemma2, consensus_average, dual_objective};
use clusterdual::oracle::waterfilling;
use clusterdual::problem::Problem;
use clusterdual::scenario::Scenario;
use clusterdual::solver::{matrix_step, ReadMode, RunReport, Solver, SolverConfig, StepRule};
use common::{max_abs_diff, micro_problem, random_problem, Shape, MICRO_ALPHA0};
use proptest::prelude::*;

fn solve(p: &Problem, q: usize, mode: DelayMode, seed: u64, iters: usize, threads: usize) -> RunReport {
    let n = p.network.num_agents();
    let sched = DelaySchedule::new(q, mode, seed, n).unwrap();
    let mut cfg = SolverConfig::new(n);
    cfg.max_iters = iters;
    cfg.patience = 0;
    cfg.threads = threads;
    cfg.record_state = true;
    Solver::new(p, sched, cfg).unwrap().run().unwrap()
}

#[test]
fn trajectory_is_seed_and_thread_independent() {
    let p = random_problem(11, Shape::default());
    let base = solve(&p, 3, DelayMode::Uniform, 1, 400, 1);
    for (seed, threads) in [(2, 1), (99, 3), (1, 4)] {
        let other = solve(&p, 3, DelayMode::Uniform, seed, 400, threads);
        assert_eq!(base.alpha, other.alpha);
        assert_eq!(base.omega, other.omega);
        let cols = |r: &RunReport| -> Vec<(usize, f64, f64, f64, f64)> {
            r.summary.iter().map(|s| (s.t, s.h, s.h_erg, s.znorm, s.znorm_erg)).collect()
        };
        assert_eq!(cols(&base), cols(&other));
    }
    let constant = solve(&p, 3, DelayMode::Constant, 0, 400, 1);
    assert_eq!(base.alpha, constant.alpha);
}

#[test]
fn recorded_trajectory_replays_the_matrix_form() {
    let p = random_problem(23, Shape::default());
    let q = 2;
    let run = solve(&p, q, DelayMode::Uniform, 5, 60, 1);
    let solver = Solver::new(
        &p,
        DelaySchedule::new(q, DelayMode::Uniform, 5, p.network.num_agents()).unwrap(),
        SolverConfig::new(p.network.num_agents()),
    )
    .unwrap();
    let d = 2 * q + 1;
    let states = &run.states;
    assert_eq!(states.len(), 61);
    for t in 0..60usize {
        let lag = t.saturating_sub(d);
        let (a, w) = matrix_step(&solver.ops, &p, &run.steps, &states[t].alpha, &states[lag].alpha, &states[lag].omega).unwrap();
        assert!(max_abs_diff(&a, &states[t + 1].alpha) <= 1e-12, "t = {t}");
        assert!(max_abs_diff(&w, &states[t + 1].omega) <= 1e-12, "t = {t}");
    }
}

#[test]
fn offline_lemma2_matches_online_tracker() {
    let p = random_problem(31, Shape::default());
    let q = 1;
    let d = 2 * q + 1;
    let run = solve(&p, q, DelayMode::Uniform, 3, 200, 1);
    let solver = Solver::new(
        &p,
        DelaySchedule::new(q, DelayMode::Uniform, 3, p.network.num_agents()).unwrap(),
        SolverConfig::new(p.network.num_agents()),
    )
    .unwrap();
    let alphas: Vec<Vec<f64>> = run.states.iter().map(|s| s.alpha.clone()).collect();
    let omegas: Vec<Vec<f64>> = run.states.iter().map(|s| s.omega.clone()).collect();
    let offline = check_lemma2(&solver.ops, &alphas, &omegas).unwrap();
    let online = &run.lemma2;
    assert!(offline.applicable && online.applicable);
    assert_eq!(offline.t_final, 199);
    assert_eq!(online.t_final, offline.t_final);
    for (a, b) in [
        (offline.c2_lhs, online.c2_lhs),
        (offline.c2_rhs, online.c2_rhs),
        (offline.omega_bound_lhs, online.omega_bound_lhs),
        (offline.omega_bound_rhs, online.omega_bound_rhs),
        (offline.c2_min_slack, online.c2_min_slack),
        (offline.omega_bound_min_slack, online.omega_bound_min_slack),
    ] {
        assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{a} vs {b}");
    }
    assert!(offline.c2_min_slack >= -1e-9);
    assert!(offline.omega_bound_min_slack >= -1e-9);
    assert!(check_lemma2(&solver.ops, &alphas[..2 * d + 1], &omegas[..2 * d + 1]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lemma2_holds_on_random_runs(seed in any::<u64>(), q in 0usize..4) {
        let p = random_problem(seed, Shape::default());
        let run = solve(&p, q, DelayMode::Uniform, seed, 2 * (2 * q + 1) + 40, 1);
        prop_assert!(run.lemma2.applicable);
        prop_assert!(run.lemma2.c1_min_slack >= -1e-9, "{:?}", run.lemma2);
        prop_assert!(run.lemma2.c2_min_slack >= -1e-9, "{:?}", run.lemma2);
        prop_assert!(run.lemma2.omega_bound_min_slack >= -1e-9, "{:?}", run.lemma2);
        prop_assert!(run.audit.max_alpha_lag <= q);
        prop_assert!(run.audit.max_omega_lag <= 2 * q);
    }
}

#[test]
fn table_delays_respect_the_bound_and_fifo() {
    let p = random_problem(41, Shape::default());
    let n = p.network.num_agents();
    let mut table = HashMap::new();
    for u in 0..n {
        for v in 0..n {
            table.insert((u, v), (u * 7 + v * 3) % 5);
        }
    }
    let run = solve(&p, 4, DelayMode::Table(table), 0, 120, 1);
    assert!(run.audit.max_alpha_lag <= 4);
    assert!(run.audit.max_omega_lag <= 8);
    assert!(run.audit.reads_checked > 0);
    let reference = solve(&p, 4, DelayMode::Constant, 0, 120, 1);
    assert_eq!(run.alpha, reference.alpha);
}

#[test]
fn freshest_reads_also_converge_on_the_micro_instance() {
    let p = micro_problem();
    let sched = DelaySchedule::new(3, DelayMode::Uniform, 9, 1).unwrap();
    let mut cfg = SolverConfig::new(1);
    cfg.read_mode = ReadMode::Freshest;
    cfg.alpha0 = Some(MICRO_ALPHA0.to_vec());
    cfg.max_iters = 500;
    let run = Solver::new(&p, sched, cfg).unwrap().run().unwrap();
    assert!(run.last.x[0][0].abs() < 1e-9);
}

#[test]
fn strong_duality_identity_on_a_converged_run() {
    let sc = Scenario::bundled("simA").unwrap().unwrap();
    let p = sc.problem().unwrap();
    let n = p.network.num_agents();
    let sched = DelaySchedule::new(0, DelayMode::Uniform, 0, n).unwrap();
    let mut cfg = SolverConfig::new(n);
    cfg.max_iters = 200_000;
    cfg.patience = 0;
    cfg.pi = vec![0.1; n];
    let solver = Solver::new(&p, sched, cfg).unwrap();
    let run = solver.run().unwrap();
    let oracle = waterfilling(&p).unwrap();
    assert!(max_abs_diff(&run.last.x.concat(), &oracle.flat()) < 1e-4, "{:?}", run.last.x);
    let avg = consensus_average(&solver.ops, &run.alpha);
    assert!(solver.ops.consensus_violation(&avg) < 1e-12);
    let h = dual_objective(&solver.ops, &p, &avg).unwrap();
    assert!(((-h - oracle.objective) / oracle.objective).abs() < 1e-4);
    // weak duality at arbitrary points of the dual domain
    let zero = vec![0.0; solver.ops.layout.alpha_len];
    assert!(-dual_objective(&solver.ops, &p, &zero).unwrap() <= oracle.objective + 1e-9);
}

#[test]
fn per_agent_rule_uses_per_agent_steps() {
    let p = random_problem(51, Shape::default());
    let n = p.network.num_agents();
    let sched = DelaySchedule::new(1, DelayMode::Uniform, 0, n).unwrap();
    let mut cfg = SolverConfig::new(n);
    cfg.step = StepRule::AutoPerAgent;
    let s = Solver::new(&p, sched, cfg).unwrap();
    assert_eq!(s.steps, s.certificate.per_agent_steps);
    assert!(s.steps.iter().all(|c| *c >= s.certificate.c_max));
}
