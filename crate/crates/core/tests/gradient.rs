mod common;

use clusterdual::operators::assemble;
use common::{random_problem, random_vec, rng, Shape};
use proptest::prelude::*;
use rand::Rng;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn gradient_matches_central_differences(seed in any::<u64>()) {
        let p = random_problem(seed, Shape::default());
        let ops = assemble(&p, 1, &vec![1.0; p.network.num_agents()]).unwrap();
        let mut r = rng(seed.rotate_left(17));
        let k = r.random_range(0..ops.num_agents());
        let agent = &ops.agents[k];
        let f = &p.agents[k].f;
        let alpha = random_vec(&mut r, agent.len(), 2.0);
        let g = agent.gradient(f, &alpha).unwrap();
        let h = 1e-5;
        let fd: Vec<f64> = (0..alpha.len())
            .map(|i| {
                let mut up = alpha.clone();
                let mut dn = alpha.clone();
                up[i] += h;
                dn[i] -= h;
                (agent.s_value(f, &up).unwrap() - agent.s_value(f, &dn).unwrap()) / (2.0 * h)
            })
            .collect();
        let err: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
        let rel = norm(&err) / norm(&g).max(f64::MIN_POSITIVE);
        prop_assert!(rel <= 1e-5, "relative FD error {rel:e}");
    }
}

#[test]
fn sampled_lipschitz_ratio_is_bounded_by_h() {
    let mut worst = 0.0f64;
    for pair in 0..1000u64 {
        let p = random_problem(pair.wrapping_mul(0x9e37_79b9), Shape::default());
        let ops = assemble(&p, 1, &vec![1.0; p.network.num_agents()]).unwrap();
        let mut r = rng(pair);
        let k = r.random_range(0..ops.num_agents());
        let agent = &ops.agents[k];
        let f = &p.agents[k].f;
        let scale = [0.01, 1.0, 5.0][pair as usize % 3];
        let a = random_vec(&mut r, agent.len(), 2.0);
        let b: Vec<f64> = a.iter().map(|v| v + r.random_range(-scale..scale)).collect();
        let ga = agent.gradient(f, &a).unwrap();
        let gb = agent.gradient(f, &b).unwrap();
        let dg: Vec<f64> = ga.iter().zip(&gb).map(|(x, y)| x - y).collect();
        let da: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let ratio = norm(&dg) / norm(&da);
        assert!(
            ratio <= agent.h * (1.0 + 1e-6),
            "pair {pair}: ratio {ratio} exceeds h = {}",
            agent.h
        );
        worst = worst.max(ratio / agent.h);
    }
    assert!(worst > 0.0);
}
