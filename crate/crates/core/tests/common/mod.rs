#![allow(dead_code)]

use clusterdual::network::ClusterNetwork;
use clusterdual::problem::{
    split_b, AgentProblem, CouplingConstraint, DualBoxes, NonsmoothCost, Problem, Sense, SmoothCost,
};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random spanning tree on `n` vertices plus a few extra chords, 0-based.
pub fn random_connected_edges(rng: &mut ChaCha8Rng, n: usize, extra: usize) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for k in 1..n {
        let parent = order[rng.random_range(0..k)];
        let (a, b) = (order[k].min(parent), order[k].max(parent));
        edges.push((a, b));
    }
    for _ in 0..extra {
        if n < 2 {
            break;
        }
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        let e = (a.min(b), a.max(b));
        if a != b && !edges.contains(&e) {
            edges.push(e);
        }
    }
    edges.shuffle(rng);
    edges
}

pub fn random_network(rng: &mut ChaCha8Rng, max_clusters: usize, max_size: usize) -> ClusterNetwork {
    let clusters = rng.random_range(1..=max_clusters);
    let sizes: Vec<usize> = (0..clusters).map(|_| rng.random_range(1..=max_size)).collect();
    let intra = sizes
        .iter()
        .map(|&s| random_connected_edges(rng, s, 1))
        .collect();
    let total = sizes.iter().sum();
    let global = random_connected_edges(rng, total, 2);
    ClusterNetwork::new(sizes, intra, global).expect("random network is valid")
}

pub fn random_smooth(rng: &mut ChaCha8Rng, dim: usize) -> SmoothCost {
    let a: Vec<f64> = (0..dim).map(|_| rng.random_range(0.2..3.0)).collect();
    let b: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
    if rng.random_bool(0.4) {
        let p = (0..dim).map(|_| rng.random_range(0.0..1.0)).collect();
        let r = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        SmoothCost::quadratic_plus_exp(a, b, p, r).unwrap()
    } else {
        SmoothCost::quadratic(a, b).unwrap()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub max_clusters: usize,
    pub max_size: usize,
    pub max_dim: usize,
    pub max_rows: usize,
}

impl Default for Shape {
    fn default() -> Self {
        Self {
            max_clusters: 3,
            max_size: 3,
            max_dim: 2,
            max_rows: 2,
        }
    }
}

/// Feasible random instance: every agent of a cluster either has no box or one containing a common core interval.
pub fn random_problem(seed: u64, shape: Shape) -> Problem {
    let mut rng = rng(seed);
    let net = random_network(&mut rng, shape.max_clusters, shape.max_size);
    let dim = rng.random_range(1..=shape.max_dim);
    let rows = rng.random_range(1..=shape.max_rows);
    let mut agents = Vec::new();
    for i in 0..net.num_clusters() {
        let lo: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..0.0)).collect();
        let hi: Vec<f64> = lo.iter().map(|l| l + rng.random_range(0.5..3.0)).collect();
        for _ in 0..net.cluster_size(i) {
            let f = random_smooth(&mut rng, dim);
            let g = if rng.random_bool(0.3) {
                NonsmoothCost::Zero
            } else {
                let l = lo.iter().map(|v| v - rng.random_range(0.0..0.5)).collect();
                let u = hi.iter().map(|v| v + rng.random_range(0.0..0.5)).collect();
                NonsmoothCost::boxed(l, u).unwrap()
            };
            agents.push(AgentProblem { f, g });
        }
    }
    let cols = net.num_clusters() * dim;
    let a = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.5..1.5));
    let b: Vec<f64> = (0..rows).map(|_| rng.random_range(-1.0..3.0)).collect();
    let sense = if rng.random_bool(0.5) {
        Sense::LessEqual
    } else {
        Sense::Equal
    };
    let split = split_b(&b, &net, None).unwrap();
    Problem::new(
        net,
        dim,
        agents,
        CouplingConstraint { a, b, sense, split },
        DualBoxes::new(100.0, 100.0, sense).unwrap(),
    )
    .unwrap()
}

pub fn random_vec(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-scale..scale)).collect()
}

/// `f = x^2`, `g` the indicator of `[0, 1]`, one agent, `x <= 1`.
pub fn micro_problem() -> Problem {
    let net = ClusterNetwork::new(vec![1], vec![vec![]], vec![]).unwrap();
    Problem::new(
        net,
        1,
        vec![AgentProblem {
            f: SmoothCost::scalar(1.0, 0.0),
            g: NonsmoothCost::interval(0.0, 1.0).unwrap(),
        }],
        CouplingConstraint {
            a: DMatrix::from_element(1, 1, 1.0),
            b: vec![1.0],
            sense: Sense::LessEqual,
            split: vec![vec![1.0]],
        },
        DualBoxes::new(100.0, 100.0, Sense::LessEqual).unwrap(),
    )
    .unwrap()
}

pub const MICRO_ALPHA0: [f64; 3] = [-2.0, 0.0, 1.0];

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Independent dense evaluation of both certificate matrices.
pub fn dense_min_eigs(ops: &clusterdual::operators::SystemOperators, steps: &[f64]) -> (f64, f64) {
    let z = &ops.z;
    let b = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(ops.b_diag()));
    let s = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(ops.s.clone()));
    let c_inv = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(
        ops.expand(steps).iter().map(|c| 1.0 / c).collect(),
    ));
    let h = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(ops.expand(&ops.h())));
    let m1 = &c_inv - h - z.transpose() * b * z;
    let m2 = &c_inv - z.transpose() * s * z;
    (
        m1.symmetric_eigen().eigenvalues.min(),
        m2.symmetric_eigen().eigenvalues.min(),
    )
}
