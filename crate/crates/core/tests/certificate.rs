mod common;

use clusterdual::operators::{assemble, certify_step_sizes, eigen_range, power_iteration};
use clusterdual::scenario::Scenario;
use common::{dense_min_eigs, random_problem, rng, Shape};
use rand::Rng;

#[test]
fn random_networks_certify_at_c_max() {
    for seed in 0..20u64 {
        let p = random_problem(1000 + seed, Shape { max_clusters: 4, max_size: 4, ..Shape::default() });
        let mut r = rng(seed);
        let pi: Vec<f64> = (0..p.network.num_agents()).map(|_| r.random_range(0.05..2.0)).collect();
        let q = r.random_range(0..6usize);
        let ops = assemble(&p, 2 * q + 1, &pi).unwrap();
        let cert = certify_step_sizes(&ops, None).unwrap();
        assert!(cert.certified, "seed {seed}: {cert:?}");
        assert!(cert.min_eig_descent >= -1e-8);
        assert!(cert.min_eig_metric > 1e-12);
        let (m1, m2) = dense_min_eigs(&ops, &cert.steps);
        assert!(m1 >= -1e-8, "seed {seed}: dense min-eig {m1}");
        assert!(m2 > 1e-12, "seed {seed}: dense min-eig {m2}");
        let rel = (cert.tau_max_ztbz - cert.tau_max_ztbz_power).abs() / cert.tau_max_ztbz.max(1e-300);
        assert!(rel < 1e-6, "seed {seed}: eigen {} vs power {}", cert.tau_max_ztbz, cert.tau_max_ztbz_power);
    }
}

#[test]
fn per_agent_steps_certify_on_random_networks() {
    for seed in 0..20u64 {
        let p = random_problem(2000 + seed, Shape::default());
        let ops = assemble(&p, 3, &vec![0.5; p.network.num_agents()]).unwrap();
        let steps = certify_step_sizes(&ops, None).unwrap().per_agent_steps;
        let cert = certify_step_sizes(&ops, Some(&steps)).unwrap();
        assert!(cert.certified, "seed {seed}: {cert:?}");
    }
}

#[test]
fn doubling_the_certified_step_is_rejected_somewhere() {
    let mut rejected = 0;
    for seed in 0..20u64 {
        let p = random_problem(3000 + seed, Shape::default());
        let ops = assemble(&p, 1, &vec![1.0; p.network.num_agents()]).unwrap();
        let c = certify_step_sizes(&ops, None).unwrap().c_max;
        let big = vec![4.0 * c; ops.num_agents()];
        if !certify_step_sizes(&ops, Some(&big)).unwrap().certified {
            rejected += 1;
        }
    }
    assert!(rejected > 0);
}

#[test]
fn shipped_scenarios_certify() {
    for name in ["simA.json", "simB.json"] {
        let sc = Scenario::bundled(name).unwrap().unwrap();
        let p = sc.problem().unwrap();
        let cfg = sc.solver_config(None).unwrap();
        let d = sc.schedule(None, None, None).unwrap().d();
        for pi in [cfg.pi.clone(), vec![1.0; p.network.num_agents()]] {
            let ops = assemble(&p, d, &pi).unwrap();
            let cert = certify_step_sizes(&ops, None).unwrap();
            assert!(cert.min_eig_descent >= -1e-8, "{name}: {}", cert.min_eig_descent);
            assert!(cert.min_eig_metric > 1e-12, "{name}: {}", cert.min_eig_metric);
            let ztbz = ops.weighted_gram(&ops.b_diag());
            let (_, tau) = eigen_range(&ztbz);
            let tau_p = power_iteration(&ztbz, 1e-13, 200_000);
            assert!((tau - tau_p).abs() <= 1e-6 * tau);
        }
    }
}
