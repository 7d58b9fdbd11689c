//! Per-agent cost components, coupling constraint and dual boxes.
//!
//! Everything is in minimization form. Smooth parts are separable per
//! coordinate, so every oracle here works coordinate by coordinate.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::network::ClusterNetwork;

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoothKind {
    /// `a x^2 + b x`
    Quadratic,
    /// `a x^2 + b x + p exp(r x)`
    QuadraticPlusExp,
}

/// Separable strongly convex cost; coefficient vectors have one entry per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothCost {
    pub kind: SmoothKind,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub p: Vec<f64>,
    pub r: Vec<f64>,
}

impl SmoothCost {
    pub fn quadratic(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let m = a.len();
        Self::new(SmoothKind::Quadratic, a, b, vec![0.0; m], vec![0.0; m])
    }

    pub fn quadratic_plus_exp(a: Vec<f64>, b: Vec<f64>, p: Vec<f64>, r: Vec<f64>) -> Result<Self> {
        Self::new(SmoothKind::QuadraticPlusExp, a, b, p, r)
    }

    /// Scalar helper for one-dimensional costs.
    pub fn scalar(a: f64, b: f64) -> Self {
        Self::quadratic(vec![a], vec![b]).expect("scalar quadratic")
    }

    fn new(kind: SmoothKind, a: Vec<f64>, b: Vec<f64>, p: Vec<f64>, r: Vec<f64>) -> Result<Self> {
        let m = a.len();
        if m == 0 {
            return Err(Error::Validation("smooth cost has no coordinates".into()));
        }
        if b.len() != m || p.len() != m || r.len() != m {
            return Err(Error::Validation(format!(
                "smooth cost coefficient lengths differ: a={}, b={}, p={}, r={}",
                m,
                b.len(),
                p.len(),
                r.len()
            )));
        }
        let all = a.iter().chain(&b).chain(&p).chain(&r);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::Validation("smooth cost has non-finite coefficient".into()));
        }
        if let Some(v) = a.iter().find(|&&v| v <= 0.0) {
            return Err(Error::Validation(format!(
                "quadratic coefficient {v} must be positive for strong convexity"
            )));
        }
        if let Some(v) = p.iter().find(|&&v| v < 0.0) {
            return Err(Error::Validation(format!(
                "exponential weight {v} must be non-negative"
            )));
        }
        if kind == SmoothKind::Quadratic && p.iter().any(|&v| v != 0.0) {
            return Err(Error::Validation(
                "quadratic cost cannot carry an exponential term".into(),
            ));
        }
        Ok(Self { kind, a, b, p, r })
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// Strong convexity modulus `2 min a`.
    pub fn sigma(&self) -> f64 {
        2.0 * self.a.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn value_coord(&self, k: usize, x: f64) -> f64 {
        let mut v = self.a[k] * x * x + self.b[k] * x;
        if self.p[k] != 0.0 {
            v += self.p[k] * (self.r[k] * x).exp();
        }
        v
    }

    pub fn derivative_coord(&self, k: usize, x: f64) -> f64 {
        let mut v = 2.0 * self.a[k] * x + self.b[k];
        if self.p[k] != 0.0 {
            v += self.p[k] * self.r[k] * (self.r[k] * x).exp();
        }
        v
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        x.iter().enumerate().map(|(k, &v)| self.value_coord(k, v)).sum()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(k, &v)| self.derivative_coord(k, v))
            .collect()
    }

    /// `argmin_n f(n) - w^T n`, i.e. the gradient of the conjugate at `w`.
    pub fn conjugate_argmin(&self, w: &[f64]) -> Result<Vec<f64>> {
        debug_assert_eq!(w.len(), self.dim());
        w.iter()
            .enumerate()
            .map(|(k, &wk)| self.argmin_coord(k, wk))
            .collect()
    }

    /// `f°(w) = w^T y* - f(y*)`.
    pub fn conjugate_value(&self, w: &[f64]) -> Result<f64> {
        let y = self.conjugate_argmin(w)?;
        let inner: f64 = w.iter().zip(&y).map(|(a, b)| a * b).sum();
        Ok(inner - self.value(&y))
    }

    fn argmin_coord(&self, k: usize, w: f64) -> Result<f64> {
        let (a, b, p, r) = (self.a[k], self.b[k], self.p[k], self.r[k]);
        let y0 = (w - b) / (2.0 * a);
        if p == 0.0 || r == 0.0 {
            // p e^{0} is a constant and does not move the minimizer
            return Ok(y0);
        }
        // stationarity residual; derivative is at least 2a so the root lies
        // within |g(y0)| / 2a of y0
        let g = |y: f64| 2.0 * a * y + b + p * r * (r * y).exp() - w;
        let dg = |y: f64| 2.0 * a + p * r * r * (r * y).exp();
        let tol = NEWTON_TOL * (1.0 + w.abs() + b.abs());
        let g0 = g(y0);
        if !g0.is_finite() {
            return Err(Error::Numerical(format!(
                "conjugate oracle overflow at w = {w}"
            )));
        }
        if g0.abs() <= tol {
            return Ok(y0);
        }
        let radius = g0.abs() / (2.0 * a);
        let (mut lo, mut hi) = if g0 > 0.0 {
            (y0 - radius, y0)
        } else {
            (y0, y0 + radius)
        };
        let mut y = y0;
        for _ in 0..NEWTON_MAX_ITER {
            let gy = g(y);
            if gy.abs() <= tol {
                return Ok(y);
            }
            if gy > 0.0 {
                hi = y;
            } else {
                lo = y;
            }
            let step = y - gy / dg(y);
            y = if step.is_finite() && step > lo && step < hi {
                step
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= f64::EPSILON * (1.0 + y.abs()) {
                let gy = g(y);
                if gy.abs() <= tol.max(1e3 * f64::EPSILON * (1.0 + w.abs())) {
                    return Ok(y);
                }
                break;
            }
        }
        Err(Error::Numerical(format!(
            "conjugate oracle did not converge for w = {w} (coordinate {k})"
        )))
    }
}

/// Non-smooth part `g`: box indicator or identically zero.
#[derive(Debug, Clone, PartialEq)]
pub enum NonsmoothCost {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Zero,
}

impl NonsmoothCost {
    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::Validation(format!(
                "box bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (k, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if l.is_nan() || u.is_nan() || l > u {
                return Err(Error::Validation(format!(
                    "empty box in coordinate {k}: [{l}, {u}]"
                )));
            }
        }
        Ok(NonsmoothCost::Box { lower, upper })
    }

    pub fn interval(lower: f64, upper: f64) -> Result<Self> {
        Self::boxed(vec![lower], vec![upper])
    }

    /// Euclidean projection onto the domain (identity for the zero kind).
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match self {
            NonsmoothCost::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(&v, (&l, &u))| v.clamp(l, u))
                .collect(),
            NonsmoothCost::Zero => x.to_vec(),
        }
    }

    pub fn bounds_coord(&self, k: usize) -> (f64, f64) {
        match self {
            NonsmoothCost::Box { lower, upper } => (lower[k], upper[k]),
            NonsmoothCost::Zero => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// `prox^c_{g°}[s] = s - c prox^{1/c}_g[s / c]`.
    pub fn prox_conjugate(&self, s: &[f64], c: f64) -> Vec<f64> {
        match self {
            NonsmoothCost::Box { lower, upper } => s
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(&v, (&l, &u))| v - c * (v / c).clamp(l, u))
                .collect(),
            NonsmoothCost::Zero => vec![0.0; s.len()],
        }
    }

    /// `g°(mu)`: the support function of the box, or the indicator of `{0}`.
    pub fn conjugate_value(&self, mu: &[f64]) -> f64 {
        match self {
            NonsmoothCost::Box { lower, upper } => mu
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(&m, (&l, &u))| {
                    // 0 * inf is NaN; a zero multiplier contributes nothing
                    if m == 0.0 {
                        0.0
                    } else {
                        (m * l).max(m * u)
                    }
                })
                .sum(),
            NonsmoothCost::Zero => {
                if mu.iter().all(|&m| m == 0.0) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    LessEqual,
    Equal,
}

/// `A x {<=, =} b` with `A` in cluster column blocks of width `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingConstraint {
    pub a: DMatrix<f64>,
    pub b: Vec<f64>,
    pub sense: Sense,
    /// One `b_ij` per agent in relabeled order.
    pub split: Vec<Vec<f64>>,
}

impl CouplingConstraint {
    pub fn rows(&self) -> usize {
        self.b.len()
    }

    /// Column block `A_i` (B x M).
    pub fn block(&self, cluster: usize, dim: usize) -> DMatrix<f64> {
        self.a.columns(cluster * dim, dim).into_owned()
    }
}

/// Splits `b` across agents: equal shares by default, otherwise the supplied split.
pub fn split_b(b: &[f64], network: &ClusterNetwork, split: Option<&[Vec<f64>]>) -> Result<Vec<Vec<f64>>> {
    let n = network.num_agents();
    match split {
        None => Ok(vec![b.iter().map(|v| v / n as f64).collect(); n]),
        Some(parts) => {
            if parts.len() != n {
                return Err(Error::Validation(format!(
                    "split has {} parts for {n} agents",
                    parts.len()
                )));
            }
            for (k, bk) in b.iter().enumerate() {
                let mut total = 0.0;
                for (idx, part) in parts.iter().enumerate() {
                    if part.len() != b.len() {
                        return Err(Error::Validation(format!(
                            "split part {idx} has length {} but b has {}",
                            part.len(),
                            b.len()
                        )));
                    }
                    total += part[k];
                }
                if (total - bk).abs() > 1e-12 {
                    return Err(Error::Validation(format!(
                        "split row {k} sums to {total}, expected {bk}"
                    )));
                }
            }
            Ok(parts.to_vec())
        }
    }
}

/// Boxes `Y_i = [-rho_Y, rho_Y]^{n_i M}` and `J`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualBoxes {
    pub rho_y: f64,
    pub rho_j: f64,
    pub sense: Sense,
}

impl DualBoxes {
    pub const DEFAULT_RADIUS: f64 = 100.0;

    pub fn new(rho_y: f64, rho_j: f64, sense: Sense) -> Result<Self> {
        if !(rho_y > 0.0 && rho_y.is_finite() && rho_j > 0.0 && rho_j.is_finite()) {
            return Err(Error::Validation(format!(
                "dual box radii must be positive and finite (rho_Y = {rho_y}, rho_J = {rho_j})"
            )));
        }
        Ok(Self { rho_y, rho_j, sense })
    }

    pub fn j_bounds(&self) -> (f64, f64) {
        match self.sense {
            Sense::LessEqual => (0.0, self.rho_j),
            Sense::Equal => (-self.rho_j, self.rho_j),
        }
    }

    pub fn project_y(&self, v: &mut [f64]) {
        for x in v {
            *x = x.clamp(-self.rho_y, self.rho_y);
        }
    }

    pub fn project_j(&self, v: &mut [f64]) {
        let (lo, hi) = self.j_bounds();
        for x in v {
            *x = x.clamp(lo, hi);
        }
    }

    pub fn in_y(&self, v: &[f64]) -> bool {
        v.iter().all(|x| x.abs() <= self.rho_y)
    }

    pub fn in_j(&self, v: &[f64]) -> bool {
        let (lo, hi) = self.j_bounds();
        v.iter().all(|&x| x >= lo && x <= hi)
    }

    /// `max_i max_{nu in Y_i} |nu| = rho_Y sqrt(max_i n_i M)`.
    pub fn iota_y(&self, network: &ClusterNetwork, dim: usize) -> f64 {
        let widest = network.cluster_sizes().iter().max().copied().unwrap_or(0);
        self.rho_y * ((widest * dim) as f64).sqrt()
    }

    /// `max_{phi in J} |phi| = rho_J sqrt(B)` for both senses.
    pub fn iota_j(&self, rows: usize) -> f64 {
        self.rho_j * (rows as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentProblem {
    pub f: SmoothCost,
    pub g: NonsmoothCost,
}

/// A complete instance: network, per-agent costs, coupling and dual boxes.
#[derive(Debug, Clone)]
pub struct Problem {
    pub network: ClusterNetwork,
    pub dim: usize,
    /// Relabeled order.
    pub agents: Vec<AgentProblem>,
    pub coupling: CouplingConstraint,
    pub boxes: DualBoxes,
}

impl Problem {
    pub fn new(
        network: ClusterNetwork,
        dim: usize,
        agents: Vec<AgentProblem>,
        coupling: CouplingConstraint,
        boxes: DualBoxes,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("primal dimension must be positive".into()));
        }
        if agents.len() != network.num_agents() {
            return Err(Error::Validation(format!(
                "{} agent problems for {} agents",
                agents.len(),
                network.num_agents()
            )));
        }
        for (k, ag) in agents.iter().enumerate() {
            if ag.f.dim() != dim {
                return Err(Error::Validation(format!(
                    "agent {k}: smooth cost has dimension {} instead of {dim}",
                    ag.f.dim()
                )));
            }
            if let NonsmoothCost::Box { lower, .. } = &ag.g {
                if lower.len() != dim {
                    return Err(Error::Validation(format!(
                        "agent {k}: box has dimension {} instead of {dim}",
                        lower.len()
                    )));
                }
            }
        }
        let rows = coupling.rows();
        if rows == 0 {
            return Err(Error::Validation("coupling has no rows".into()));
        }
        if coupling.a.shape() != (rows, network.num_clusters() * dim) {
            return Err(Error::Validation(format!(
                "coupling matrix is {:?}, expected ({rows}, {})",
                coupling.a.shape(),
                network.num_clusters() * dim
            )));
        }
        split_b(&coupling.b, &network, Some(&coupling.split))?;
        if boxes.sense != coupling.sense {
            return Err(Error::Validation("dual box sense differs from coupling sense".into()));
        }
        Ok(Self {
            network,
            dim,
            agents,
            coupling,
            boxes,
        })
    }

    pub fn rows(&self) -> usize {
        self.coupling.rows()
    }

    /// Intersection of the agents' boxes for cluster `i`, coordinate `k`.
    pub fn cluster_bounds(&self, cluster: usize, k: usize) -> (f64, f64) {
        let start = self.network.cluster_offset(cluster);
        let n = self.network.cluster_size(cluster);
        self.agents[start..start + n]
            .iter()
            .fold((f64::NEG_INFINITY, f64::INFINITY), |(lo, hi), ag| {
                let (l, u) = ag.g.bounds_coord(k);
                (lo.max(l), hi.min(u))
            })
    }

    /// Primal objective `sum_ij f_ij(x_i)` (box terms are the caller's responsibility).
    pub fn objective(&self, x: &[Vec<f64>]) -> f64 {
        let mut total = 0.0;
        for i in 0..self.network.num_clusters() {
            let start = self.network.cluster_offset(i);
            for j in 0..self.network.cluster_size(i) {
                total += self.agents[start + j].f.value(&x[i]);
            }
        }
        total
    }

    /// `A x - b`.
    pub fn coupling_residual(&self, x: &[Vec<f64>]) -> Vec<f64> {
        let flat: Vec<f64> = x.iter().flatten().copied().collect();
        let ax = &self.coupling.a * nalgebra::DVector::from_vec(flat);
        ax.iter().zip(&self.coupling.b).map(|(a, b)| a - b).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn grid_argmin(f: impl Fn(f64) -> f64, lo: f64, hi: f64, steps: usize) -> f64 {
        let h = (hi - lo) / steps as f64;
        (0..=steps)
            .map(|k| lo + k as f64 * h)
            .min_by(|a, b| f(*a).partial_cmp(&f(*b)).unwrap())
            .unwrap()
    }

    #[test]
    fn conjugate_argmin_examples() {
        let f = SmoothCost::scalar(1.0, 0.0);
        assert_abs_diff_eq!(f.conjugate_argmin(&[2.0]).unwrap()[0], 1.0, epsilon = 1e-15);

        let f = SmoothCost::scalar(0.8, -3.3);
        let y = f.conjugate_argmin(&[0.0]).unwrap()[0];
        assert_abs_diff_eq!(y, 2.0625, epsilon = 1e-12);
        let grid = grid_argmin(|x| 0.8 * x * x - 3.3 * x, 0.0, 5.0, 500_000);
        assert_abs_diff_eq!(y, grid, epsilon = 1e-5);

        let f = SmoothCost::quadratic_plus_exp(vec![1.0], vec![0.0], vec![1.0], vec![1.0]).unwrap();
        let y = f.conjugate_argmin(&[0.0]).unwrap()[0];
        // independent bisection on 2y + e^y = 0
        let (mut lo, mut hi) = (-1.0f64, 0.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if 2.0 * mid + mid.exp() > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert_abs_diff_eq!(y, 0.5 * (lo + hi), epsilon = 1e-12);
        assert_abs_diff_eq!(y, -0.3517, epsilon = 1e-4);
    }

    #[test]
    fn conjugate_value_examples() {
        let f = SmoothCost::scalar(1.0, 0.0);
        assert_abs_diff_eq!(f.conjugate_value(&[2.0]).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f.conjugate_value(&[0.0]).unwrap(), 0.0, epsilon = 1e-15);
        let f = SmoothCost::scalar(0.8, -3.3);
        let y = f.conjugate_argmin(&[1.0]).unwrap()[0];
        assert_abs_diff_eq!(y, 2.6875, epsilon = 1e-12);
        let expected = 2.6875 - (0.8 * 2.6875f64.powi(2) - 3.3 * 2.6875);
        assert_abs_diff_eq!(f.conjugate_value(&[1.0]).unwrap(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, 5.778, epsilon = 1e-3);
        // grid sup of w n - f(n)
        let best = grid_argmin(|x| -(x - (0.8 * x * x - 3.3 * x)), 0.0, 6.0, 600_000);
        assert_abs_diff_eq!(best, 2.6875, epsilon = 1e-5);
    }

    #[test]
    fn prox_conjugate_examples() {
        let g = NonsmoothCost::interval(0.0, 1.0).unwrap();
        assert_abs_diff_eq!(g.prox_conjugate(&[0.5], 1.0)[0], 0.0);
        assert_abs_diff_eq!(g.prox_conjugate(&[3.0], 2.0)[0], 1.0);
        assert_abs_diff_eq!(g.prox_conjugate(&[-1.0], 1.0)[0], -1.0);
        assert_eq!(NonsmoothCost::Zero.prox_conjugate(&[3.0, -1.0], 0.5), vec![0.0, 0.0]);
    }

    #[test]
    fn prox_conjugate_minimizes_direct_objective() {
        // g°(n) = max(0, n) for [0,1]; minimize g°(n) + (n - 3)^2 / (2c) with c = 2
        let best = grid_argmin(|n| n.max(0.0) + (n - 3.0).powi(2) / 4.0, -2.0, 5.0, 700_000);
        assert_abs_diff_eq!(best, 1.0, epsilon = 1e-5);
    }

    #[test]
    fn support_function_of_box() {
        let g = NonsmoothCost::boxed(vec![0.0, -1.0], vec![2.0, 3.0]).unwrap();
        assert_abs_diff_eq!(g.conjugate_value(&[1.0, -2.0]), 2.0 + 2.0);
        assert_eq!(NonsmoothCost::Zero.conjugate_value(&[0.0]), 0.0);
        assert!(NonsmoothCost::Zero.conjugate_value(&[1e-3]).is_infinite());
    }

    #[test]
    fn split_b_examples() {
        let net = ClusterNetwork::from_one_based(
            vec![1, 1, 1, 2],
            vec![vec![], vec![], vec![], vec![(1, 2)]],
            vec![(2, 4), (1, 2), (4, 5), (3, 4), (2, 5)],
        )
        .unwrap();
        let parts = split_b(&[5.0], &net, None).unwrap();
        assert!(parts.iter().all(|p| p == &vec![1.0]));
        let user: Vec<Vec<f64>> = [5.0, 0.0, 0.0, 0.0, 0.0].iter().map(|&v| vec![v]).collect();
        assert!(split_b(&[5.0], &net, Some(&user)).is_ok());
        let user: Vec<Vec<f64>> = [1.0, 1.0, 1.0, 1.0, 0.0].iter().map(|&v| vec![v]).collect();
        assert!(matches!(split_b(&[5.0], &net, Some(&user)), Err(Error::Validation(_))));
    }

    #[test]
    fn rejects_invalid_costs() {
        assert!(SmoothCost::quadratic(vec![0.0], vec![1.0]).is_err());
        assert!(SmoothCost::quadratic_plus_exp(vec![1.0], vec![0.0], vec![-1.0], vec![1.0]).is_err());
        assert!(NonsmoothCost::interval(1.0, 0.0).is_err());
        assert!(DualBoxes::new(0.0, 1.0, Sense::Equal).is_err());
    }

    #[test]
    fn dual_box_norms() {
        let net = ClusterNetwork::new(vec![4, 2], vec![vec![(0, 1), (1, 2), (2, 3)], vec![(0, 1)]], vec![(0, 5), (3, 4), (4, 5), (1, 2), (0, 1), (2, 3)]).unwrap();
        let boxes = DualBoxes::new(2.0, 3.0, Sense::LessEqual).unwrap();
        assert_abs_diff_eq!(boxes.iota_y(&net, 1), 4.0);
        assert_abs_diff_eq!(boxes.iota_j(4), 6.0);
        assert_eq!(boxes.j_bounds(), (0.0, 3.0));
    }

    fn smooth_strategy() -> impl Strategy<Value = SmoothCost> {
        (0.05f64..5.0, -5.0f64..5.0, 0.0f64..3.0, -2.0f64..2.0).prop_map(|(a, b, p, r)| {
            SmoothCost::quadratic_plus_exp(vec![a], vec![b], vec![p], vec![r]).unwrap()
        })
    }

    proptest! {
        #[test]
        fn fenchel_young_equality(f in smooth_strategy(), w in -20.0f64..20.0) {
            let y = f.conjugate_argmin(&[w]).unwrap();
            let lhs = f.value(&y) + f.conjugate_value(&[w]).unwrap();
            prop_assert!((lhs - w * y[0]).abs() <= 1e-10 * (1.0 + (w * y[0]).abs()));
            // stationarity
            prop_assert!((f.derivative_coord(0, y[0]) - w).abs() <= 1e-10 * (1.0 + w.abs()));
        }

        #[test]
        fn conjugate_gradient_is_lipschitz(f in smooth_strategy(), w1 in -20.0f64..20.0, w2 in -20.0f64..20.0) {
            let y1 = f.conjugate_argmin(&[w1]).unwrap()[0];
            let y2 = f.conjugate_argmin(&[w2]).unwrap()[0];
            prop_assert!((y1 - y2).abs() <= (w1 - w2).abs() / f.sigma() * (1.0 + 1e-8) + 1e-13);
        }

        #[test]
        fn moreau_identity(l in -3.0f64..0.0, width in 0.0f64..3.0, s in -10.0f64..10.0, c in 0.01f64..10.0) {
            let g = NonsmoothCost::interval(l, l + width).unwrap();
            let lhs = g.prox_conjugate(&[s], c)[0] + c * g.project(&[s / c])[0];
            prop_assert!((lhs - s).abs() <= 1e-12 * (1.0 + s.abs()));
        }
    }
}
