//! Centralized reference solvers for the primal problem.
//!
//! All three work directly on `F_i = sum_j f_ij` over `X_i` (the intersection
//! of the cluster's boxes) using only values, derivatives and clipping.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::problem::{Problem, Sense};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSolution {
    /// One block `x_i` per cluster.
    pub x: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
    pub objective: f64,
    pub residual: Vec<f64>,
}

impl OracleSolution {
    fn finish(problem: &Problem, x: Vec<Vec<f64>>, lambda: Vec<f64>) -> Self {
        Self {
            objective: problem.objective(&x),
            residual: problem.coupling_residual(&x),
            x,
            lambda,
        }
    }

    /// Optimal dual objective `H* = -F(x*)`.
    pub fn h_star(&self) -> f64 {
        -self.objective
    }

    /// Agent copies `y_ij = x_i` in relabeled order.
    pub fn agent_copies(&self, problem: &Problem) -> Vec<Vec<f64>> {
        (0..problem.network.num_agents())
            .map(|g| self.x[problem.network.locate(g).0].clone())
            .collect()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.x.iter().flatten().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    Waterfilling,
    ProjectedGradient,
    Grid,
}

impl std::str::FromStr for OracleMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "waterfilling" => Ok(Self::Waterfilling),
            "projected_gradient" | "pg" => Ok(Self::ProjectedGradient),
            "grid" => Ok(Self::Grid),
            other => Err(Error::Validation(format!("unknown oracle method '{other}'"))),
        }
    }
}

/// Cluster cost `F_i`, separable over coordinates.
struct ClusterCost<'a> {
    problem: &'a Problem,
    cluster: usize,
}

impl ClusterCost<'_> {
    fn agents(&self) -> &[crate::problem::AgentProblem] {
        let start = self.problem.network.cluster_offset(self.cluster);
        &self.problem.agents[start..start + self.problem.network.cluster_size(self.cluster)]
    }

    fn value(&self, k: usize, x: f64) -> f64 {
        self.agents().iter().map(|a| a.f.value_coord(k, x)).sum()
    }

    fn derivative(&self, k: usize, x: f64) -> f64 {
        self.agents().iter().map(|a| a.f.derivative_coord(k, x)).sum()
    }

    fn bounds(&self, k: usize) -> Result<(f64, f64)> {
        let (lo, hi) = self.problem.cluster_bounds(self.cluster, k);
        if lo > hi {
            return Err(Error::Infeasible(format!(
                "cluster {} coordinate {k}: empty box [{lo}, {hi}]",
                self.cluster + 1
            )));
        }
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Validation(format!(
                "cluster {} coordinate {k}: oracle needs a bounded box",
                self.cluster + 1
            )));
        }
        Ok((lo, hi))
    }
}

fn clusters(problem: &Problem) -> Vec<ClusterCost<'_>> {
    (0..problem.network.num_clusters())
        .map(|cluster| ClusterCost { problem, cluster })
        .collect()
}

fn single_row(problem: &Problem, name: &str) -> Result<()> {
    if problem.rows() != 1 {
        return Err(Error::Validation(format!(
            "{name} oracle needs a single coupling row, found {}",
            problem.rows()
        )));
    }
    Ok(())
}

/// Root of a nondecreasing `g` on `[lo, hi]`, clipped to the interval.
fn bisect_root(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    if g(lo) >= 0.0 {
        return lo;
    }
    if g(hi) <= 0.0 {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Outer search for the multiplier of a single coupling row, given a
/// decreasing resource map `lambda -> A x(lambda) - b`.
fn search_lambda(excess: impl Fn(f64) -> Result<f64>, sense: Sense) -> Result<f64> {
    let at_zero = excess(0.0)?;
    if sense == Sense::LessEqual && at_zero <= 0.0 {
        return Ok(0.0);
    }
    if at_zero == 0.0 {
        return Ok(0.0);
    }
    let dir = if at_zero > 0.0 { 1.0 } else { -1.0 };
    let mut near = 0.0;
    let mut far = dir;
    let mut tries = 0;
    while excess(far)? * dir > 0.0 {
        near = far;
        far *= 2.0;
        tries += 1;
        if tries > 80 {
            return Err(Error::Infeasible(
                "coupling constraint cannot be met inside the primal boxes".into(),
            ));
        }
    }
    let (mut lo, mut hi) = if dir > 0.0 { (near, far) } else { (far, near) };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if excess(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Lagrangian water-filling: bisection on the multiplier with a 1-D
/// derivative bisection per coordinate.
pub fn waterfilling(problem: &Problem) -> Result<OracleSolution> {
    single_row(problem, "water-filling")?;
    let costs = clusters(problem);
    let dim = problem.dim;
    let a = &problem.coupling.a;
    let response = |lambda: f64| -> Result<Vec<Vec<f64>>> {
        costs
            .iter()
            .map(|c| {
                (0..dim)
                    .map(|k| {
                        let (lo, hi) = c.bounds(k)?;
                        let coef = a[(0, c.cluster * dim + k)];
                        Ok(bisect_root(|x| c.derivative(k, x) + lambda * coef, lo, hi))
                    })
                    .collect()
            })
            .collect()
    };
    let excess = |lambda: f64| -> Result<f64> {
        let x = response(lambda)?;
        Ok(problem.coupling_residual(&x)[0])
    };
    let lambda = search_lambda(excess, problem.coupling.sense)?;
    let x = response(lambda)?;
    Ok(OracleSolution::finish(problem, x, vec![lambda]))
}

/// Projected gradient with Armijo backtracking on `sum_i F_i(x_i) + lambda^T A x`.
fn armijo_pg(problem: &Problem, lambda: &[f64], start: Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>> {
    let costs = clusters(problem);
    let dim = problem.dim;
    let a = &problem.coupling.a;
    let bounds: Vec<Vec<(f64, f64)>> = costs
        .iter()
        .map(|c| (0..dim).map(|k| c.bounds(k)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let price = |i: usize, k: usize| -> f64 {
        lambda.iter().enumerate().map(|(r, l)| l * a[(r, i * dim + k)]).sum()
    };
    let prices: Vec<Vec<f64>> = (0..costs.len()).map(|i| (0..dim).map(|k| price(i, k)).collect()).collect();
    let grad = |x: &[Vec<f64>]| -> Vec<Vec<f64>> {
        costs
            .iter()
            .enumerate()
            .map(|(i, c)| (0..dim).map(|k| c.derivative(k, x[i][k]) + prices[i][k]).collect())
            .collect()
    };
    let project = |x: &mut [Vec<f64>]| {
        for (xi, bi) in x.iter_mut().zip(&bounds) {
            for (v, &(lo, hi)) in xi.iter_mut().zip(bi) {
                *v = v.clamp(lo, hi);
            }
        }
    };
    let tol = 1e-13 * (1.0 + prices.iter().flatten().fold(0.0f64, |m, p| m.max(p.abs())));
    let mut x = start;
    project(&mut x);
    let mut step = 1.0;
    let mut g = grad(&x);
    for _ in 0..100_000 {
        let mut stationarity: f64 = 0.0;
        for ((xi, gi), bi) in x.iter().zip(&g).zip(&bounds) {
            for ((v, d), &(lo, hi)) in xi.iter().zip(gi).zip(bi) {
                stationarity = stationarity.max((v - (v - d).clamp(lo, hi)).abs());
            }
        }
        if stationarity < tol {
            break;
        }
        // backtrack until the step is below the inverse local Lipschitz estimate
        loop {
            let mut trial: Vec<Vec<f64>> = x
                .iter()
                .zip(&g)
                .map(|(xi, gi)| xi.iter().zip(gi).map(|(v, d)| v - step * d).collect())
                .collect();
            project(&mut trial);
            let gt = grad(&trial);
            let mut dx = 0.0;
            let mut dg = 0.0;
            for (((ti, xi), gti), gi) in trial.iter().zip(&x).zip(&gt).zip(&g) {
                for (((t, v), a), b) in ti.iter().zip(xi).zip(gti).zip(gi) {
                    dx += (t - v) * (t - v);
                    dg += (a - b) * (a - b);
                }
            }
            if dx == 0.0 {
                return Ok(x);
            }
            if step * step * dg <= dx {
                x = trial;
                g = gt;
                step *= 2.0;
                break;
            }
            step *= 0.5;
            if step < 1e-30 {
                return Err(Error::Numerical("projected gradient step collapsed".into()));
            }
        }
    }
    Ok(x)
}

/// Projected-gradient oracle: multiplier bisection for one coupling row,
/// projected dual ascent otherwise.
pub fn projected_gradient(problem: &Problem) -> Result<OracleSolution> {
    let nc = problem.network.num_clusters();
    let dim = problem.dim;
    let start = vec![vec![0.0; dim]; nc];
    if problem.rows() == 1 {
        let excess = |lambda: f64| -> Result<f64> {
            let x = armijo_pg(problem, &[lambda], start.clone())?;
            Ok(problem.coupling_residual(&x)[0])
        };
        let lambda = search_lambda(excess, problem.coupling.sense)?;
        let x = armijo_pg(problem, &[lambda], start.clone())?;
        return Ok(OracleSolution::finish(problem, x, vec![lambda]));
    }
    let sigma = problem
        .agents
        .iter()
        .map(|a| a.f.sigma())
        .fold(f64::INFINITY, f64::min);
    let norm = crate::operators::spectral_norm(&problem.coupling.a);
    let rate = sigma / (norm * norm).max(1e-300);
    let mut lambda = vec![0.0; problem.rows()];
    let mut x = start;
    for _ in 0..200_000 {
        x = armijo_pg(problem, &lambda, x)?;
        let r = problem.coupling_residual(&x);
        let mut moved: f64 = 0.0;
        for (l, ri) in lambda.iter_mut().zip(&r) {
            let mut next = *l + rate * ri;
            if problem.coupling.sense == Sense::LessEqual {
                next = next.max(0.0);
            }
            moved = moved.max((next - *l).abs());
            *l = next;
        }
        if moved < 1e-13 {
            break;
        }
    }
    Ok(OracleSolution::finish(problem, x, lambda))
}

/// Exhaustive grid search for up to three clusters with `M = B = 1`.
pub fn brute_force_grid(problem: &Problem, resolution: f64) -> Result<OracleSolution> {
    let nc = problem.network.num_clusters();
    if problem.dim != 1 || problem.rows() != 1 || !(1..=3).contains(&nc) {
        return Err(Error::Validation(
            "grid oracle needs M = 1, B = 1 and at most three clusters".into(),
        ));
    }
    if !(resolution > 0.0) {
        return Err(Error::Validation("grid resolution must be positive".into()));
    }
    let costs = clusters(problem);
    let coef: Vec<f64> = (0..nc).map(|i| problem.coupling.a[(0, i)]).collect();
    let b = problem.coupling.b[0];
    let sense = problem.coupling.sense;
    let mut grids = Vec::with_capacity(nc);
    for c in &costs {
        let (lo, hi) = c.bounds(0)?;
        let steps = ((hi - lo) / resolution).floor() as usize;
        let mut pts: Vec<f64> = (0..=steps).map(|s| lo + s as f64 * resolution).collect();
        if pts.last().is_some_and(|&p| p < hi) {
            pts.push(hi);
        }
        let vals: Vec<f64> = pts.iter().map(|&p| c.value(0, p)).collect();
        grids.push((pts, vals));
    }
    let last = nc - 1;
    let (lp, lv) = &grids[last];
    // best last-cluster value among grid points with a_last x <= budget
    let feasible_prefix: Vec<(f64, usize)> = {
        let mut order: Vec<usize> = (0..lp.len()).collect();
        order.sort_by(|&p, &q| (coef[last] * lp[p]).total_cmp(&(coef[last] * lp[q])));
        let mut best = (f64::INFINITY, usize::MAX);
        order
            .into_iter()
            .map(|idx| {
                if lv[idx] < best.0 {
                    best = (lv[idx], idx);
                }
                (coef[last] * lp[idx], best.1)
            })
            .collect()
    };
    let (lo_last, hi_last) = (lp[0], lp[lp.len() - 1]);
    let mut best_val = f64::INFINITY;
    let mut best_x: Option<Vec<f64>> = None;
    let mut idx = vec![0usize; last];
    loop {
        let mut partial = 0.0;
        let mut used = 0.0;
        for (i, &k) in idx.iter().enumerate() {
            partial += grids[i].1[k];
            used += coef[i] * grids[i].0[k];
        }
        let budget = b - used;
        let candidate = match sense {
            Sense::LessEqual => {
                let pos = feasible_prefix.partition_point(|p| p.0 <= budget + 1e-12);
                (pos > 0).then(|| {
                    let k = feasible_prefix[pos - 1].1;
                    (lv[k], lp[k])
                })
            }
            Sense::Equal => {
                if coef[last] == 0.0 {
                    None
                } else {
                    let xl = budget / coef[last];
                    (xl >= lo_last - 1e-12 && xl <= hi_last + 1e-12).then(|| {
                        let xl = xl.clamp(lo_last, hi_last);
                        (costs[last].value(0, xl), xl)
                    })
                }
            }
        };
        if let Some((v, xl)) = candidate {
            if partial + v < best_val {
                best_val = partial + v;
                let mut x: Vec<f64> = idx.iter().enumerate().map(|(i, &k)| grids[i].0[k]).collect();
                x.push(xl);
                best_x = Some(x);
            }
        }
        let mut pos = 0;
        loop {
            if pos == last {
                let x = best_x.ok_or_else(|| Error::Infeasible("no feasible grid point".into()))?;
                let blocks = x.into_iter().map(|v| vec![v]).collect();
                return Ok(OracleSolution::finish(problem, blocks, Vec::new()));
            }
            idx[pos] += 1;
            if idx[pos] < grids[pos].0.len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

pub fn solve(problem: &Problem, method: OracleMethod) -> Result<OracleSolution> {
    match method {
        OracleMethod::Waterfilling => waterfilling(problem),
        OracleMethod::ProjectedGradient => projected_gradient(problem),
        OracleMethod::Grid => brute_force_grid(problem, 1e-3),
    }
}
