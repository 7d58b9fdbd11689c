//! Dual objective, consensus violation and trajectory certificates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::SystemOperators;
use crate::problem::Problem;

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub t: usize,
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "H_erg")]
    pub h_erg: f64,
    #[serde(rename = "Znorm")]
    pub znorm: f64,
    #[serde(rename = "Znorm_erg")]
    pub znorm_erg: f64,
    pub eps: f64,
}

/// `H(alpha) = sum_ij s_ij + r_ij`; `+inf` when some `gamma` leaves `Y_i`,
/// some `theta` leaves `J`, or `g°` is infinite.
pub fn dual_objective(ops: &SystemOperators, problem: &Problem, alpha: &[f64]) -> Result<f64> {
    let lay = &ops.layout;
    let mut total = 0.0;
    for k in 0..ops.num_agents() {
        let block = lay.alpha_block(alpha, k);
        if !problem.boxes.in_y(lay.gamma(block)) || !problem.boxes.in_j(lay.theta(block)) {
            return Ok(f64::INFINITY);
        }
        total += ops.agents[k].s_value(&problem.agents[k].f, block)?;
        total += problem.agents[k].g.conjugate_value(lay.mu(block));
    }
    Ok(total)
}

/// `|H - H*| / |H*|`, or the absolute error when `|H*| <= 1e-12`.
pub fn relative_error(h: f64, h_star: f64) -> f64 {
    if h_star.abs() > 1e-12 {
        ((h - h_star) / h_star).abs()
    } else {
        (h - h_star).abs()
    }
}

pub fn consensus_violation(ops: &SystemOperators, alpha: &[f64]) -> f64 {
    ops.consensus_violation(alpha)
}

/// Replaces every `gamma_ij` by its cluster mean and every `theta_ij` by the network mean.
pub fn consensus_average(ops: &SystemOperators, alpha: &[f64]) -> Vec<f64> {
    let lay = &ops.layout;
    let n = lay.num_agents();
    let mut theta = vec![0.0; lay.rows];
    for k in 0..n {
        for (t, v) in theta.iter_mut().zip(lay.theta(lay.alpha_block(alpha, k))) {
            *t += v / n as f64;
        }
    }
    let clusters = lay.agents.iter().map(|a| a.cluster).max().map_or(0, |c| c + 1);
    let mut gamma: Vec<Vec<f64>> = vec![Vec::new(); clusters];
    for a in &lay.agents {
        let g = lay.gamma(lay.alpha_block(alpha, a.global));
        let acc = &mut gamma[a.cluster];
        if acc.is_empty() {
            acc.resize(g.len(), 0.0);
        }
        for (s, v) in acc.iter_mut().zip(g) {
            *s += v / a.cluster_size as f64;
        }
    }
    let mut out = alpha.to_vec();
    for a in &lay.agents {
        let start = a.offset;
        let len = lay.agent_len(a.global);
        let block = &mut out[start..start + len];
        let glen = gamma[a.cluster].len();
        block[lay.dim..lay.dim + glen].copy_from_slice(&gamma[a.cluster]);
        block[len - lay.rows..].copy_from_slice(&theta);
    }
    out
}

/// Signed slacks (`rhs - lhs`) of the three delayed-trajectory inequalities,
/// with `alpha = 0` in the first and `omega = 0` in the third.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct Lemma2Report {
    pub t_final: usize,
    pub applicable: bool,
    pub c1_lhs: f64,
    pub c1_rhs: f64,
    pub c1_min_slack: f64,
    pub c2_lhs: f64,
    pub c2_rhs: f64,
    pub c2_min_slack: f64,
    pub omega_bound_lhs: f64,
    pub omega_bound_rhs: f64,
    pub omega_bound_min_slack: f64,
}

impl Lemma2Report {
    pub fn holds(&self, tol: f64) -> bool {
        self.applicable
            && self.c1_min_slack >= -tol
            && self.c2_min_slack >= -tol
            && self.omega_bound_min_slack >= -tol
    }
}

/// Online accumulation of the Lemma-2 sums over a running trajectory.
#[derive(Debug, Clone)]
pub struct Lemma2Tracker {
    s: Vec<f64>,
    s_inv: Vec<f64>,
    factor: f64,
    d: usize,
    gamma_const: f64,
    omega0_q: f64,
    c1: f64,
    c1_rhs: f64,
    c2_lhs: f64,
    c2_rhs: f64,
    omega_bound: f64,
    mins: [f64; 3],
    last_t: Option<usize>,
}

fn sq_s(v: &[f64], w: &[f64]) -> f64 {
    v.iter().zip(w).fold(0.0, |s, (a, b)| s + a * a * b)
}

fn sq_diff_s(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    a.iter().zip(b).zip(w).map(|((x, y), s)| (x - y) * (x - y) * s).sum()
}

impl Lemma2Tracker {
    pub fn new(ops: &SystemOperators, omega0: &[f64]) -> Self {
        let q = ops.q_diag();
        Self {
            s: ops.s.clone(),
            s_inv: ops.s.iter().map(|v| 1.0 / v).collect(),
            factor: (1.0 + ops.d as f64).powi(2),
            d: ops.d,
            gamma_const: ops.gamma_const,
            omega0_q: sq_s(omega0, &q),
            c1: 0.0,
            c1_rhs: 0.0,
            c2_lhs: 0.0,
            c2_rhs: 0.0,
            omega_bound: 0.0,
            mins: [f64::INFINITY; 3],
            last_t: None,
        }
    }

    /// Adds step `t`: `z_* = Z alpha` at `t+1`, `t` and `(t-d)^+`; `omega` at `t+1` and `(t-d)^+`.
    pub fn update(&mut self, t: usize, z_next: &[f64], z_cur: &[f64], z_lag: &[f64], omega_next: &[f64], omega_lag: &[f64]) {
        let next_sq = sq_s(z_next, &self.s);
        self.c1 += next_sq - sq_s(z_lag, &self.s);
        self.c1_rhs = next_sq + self.gamma_const;
        self.c2_lhs += sq_diff_s(z_next, z_lag, &self.s);
        self.c2_rhs += self.factor * sq_diff_s(z_next, z_cur, &self.s);
        self.omega_bound += sq_s(omega_lag, &self.s_inv) - sq_s(omega_next, &self.s_inv);
        if t >= 2 * self.d + 1 {
            let slacks = [
                self.c1_rhs - self.c1,
                self.c2_rhs - self.c2_lhs,
                self.omega0_q - self.omega_bound,
            ];
            for (m, s) in self.mins.iter_mut().zip(slacks) {
                *m = m.min(s);
            }
        }
        self.last_t = Some(t);
    }

    pub fn report(&self, _ops: &SystemOperators) -> Lemma2Report {
        let applicable = self.last_t.is_some_and(|t| t >= 2 * self.d + 1);
        let slack = |m: f64| if applicable { m } else { f64::NAN };
        Lemma2Report {
            t_final: self.last_t.unwrap_or(0),
            applicable,
            c1_lhs: self.c1,
            c1_rhs: self.c1_rhs,
            c1_min_slack: slack(self.mins[0]),
            c2_lhs: self.c2_lhs,
            c2_rhs: self.c2_rhs,
            c2_min_slack: slack(self.mins[1]),
            omega_bound_lhs: self.omega_bound,
            omega_bound_rhs: self.omega0_q,
            omega_bound_min_slack: slack(self.mins[2]),
        }
    }
}

/// Evaluates Lemma 2 on a recorded trajectory `alphas[0..=T+1]`, `omegas[0..=T+1]`.
pub fn check_lemma2(ops: &SystemOperators, alphas: &[Vec<f64>], omegas: &[Vec<f64>]) -> Result<Lemma2Report> {
    if alphas.len() != omegas.len() || alphas.len() < 2 {
        return Err(Error::Validation("trajectory needs matching alpha/omega states".into()));
    }
    let t_final = alphas.len() - 2;
    if t_final < 2 * ops.d + 1 {
        return Err(Error::Validation(format!(
            "trajectory length T = {t_final} is below 2d + 1 = {}",
            2 * ops.d + 1
        )));
    }
    let z: Vec<Vec<f64>> = alphas.iter().map(|a| ops.z_apply(a)).collect();
    let mut tracker = Lemma2Tracker::new(ops, &omegas[0]);
    for t in 0..=t_final {
        let lag = t.saturating_sub(ops.d);
        tracker.update(t, &z[t + 1], &z[t], &z[lag], &omegas[t + 1], &omegas[lag]);
    }
    Ok(tracker.report(ops))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Theorem1Report {
    pub xi: f64,
    pub gamma: f64,
    pub h_star: f64,
    pub omega_star_norm: f64,
    /// Largest `LHS / Xi` over the checked points.
    pub worst_ratio: f64,
    pub checked_points: usize,
    pub tolerance: f64,
    pub holds: bool,
}

/// Ergodic bound `(T+1)(H(ᾱ) - H(α*) + 2|ω*||Zᾱ|) <= Ξ` at every logged `T >= 2d+1`.
#[allow(clippy::too_many_arguments)]
pub fn check_theorem1(
    ops: &SystemOperators,
    problem: &Problem,
    rows: &[SummaryRow],
    steps: &[f64],
    alpha0: &[f64],
    omega0: &[f64],
    alpha_star: &[f64],
    omega_star: &[f64],
) -> Result<Theorem1Report> {
    const TOL: f64 = 0.05;
    let q = ops.q_diag();
    let c_inv_half: Vec<f64> = ops.expand(steps).iter().map(|c| 0.5 / c).collect();
    let diff: Vec<f64> = alpha_star.iter().zip(alpha0).map(|(a, b)| a - b).collect();
    let xi = 4.0 * sq_s(omega_star, &q) + sq_s(omega0, &q) + sq_s(&diff, &c_inv_half) + ops.gamma_const / 2.0;
    let h_star = dual_objective(ops, problem, alpha_star)?;
    let w_norm = omega_star.iter().fold(0.0, |s, v| s + v * v).sqrt();
    let mut worst = f64::NEG_INFINITY;
    let mut count = 0;
    for r in rows.iter().filter(|r| r.t >= 2 * ops.d + 2) {
        let lhs = r.t as f64 * (r.h_erg - h_star + 2.0 * w_norm * r.znorm_erg);
        worst = worst.max(lhs / xi);
        count += 1;
    }
    Ok(Theorem1Report {
        xi,
        gamma: ops.gamma_const,
        h_star,
        omega_star_norm: w_norm,
        worst_ratio: worst,
        checked_points: count,
        tolerance: TOL,
        holds: count > 0 && worst <= 1.0 + TOL,
    })
}

/// Least-squares slope of `log v` against `log t` over the final decade of `points`.
/// `None` when fewer than two usable points remain or any value is non-positive.
pub fn fit_rate(points: &[(f64, f64)]) -> Option<f64> {
    let t_max = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if !(t_max > 0.0) {
        return None;
    }
    let decade: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.0 >= t_max / 10.0 && p.0 > 0.0)
        .copied()
        .collect();
    if decade.len() < 2 || decade.iter().any(|p| !(p.1 > 0.0) || !p.1.is_finite()) {
        return None;
    }
    let xs: Vec<f64> = decade.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = decade.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

/// `late <= factor * early`; an identically zero series passes.
pub fn ratio_test(early: f64, late: f64, factor: f64) -> bool {
    late <= factor * early
}

/// Block maxima over logarithmically spaced windows never increase.
pub fn envelope_nonincreasing(points: &[(f64, f64)], windows: usize) -> bool {
    let pts: Vec<&(f64, f64)> = points.iter().filter(|p| p.0 >= 1.0).collect();
    if pts.len() < 2 || windows == 0 {
        return true;
    }
    let lo = pts[0].0.ln();
    let hi = pts[pts.len() - 1].0.ln();
    if hi <= lo {
        return true;
    }
    let width = (hi - lo) / windows as f64;
    let mut maxima = vec![f64::NEG_INFINITY; windows];
    for p in pts {
        let idx = (((p.0.ln() - lo) / width) as usize).min(windows - 1);
        maxima[idx] = maxima[idx].max(p.1);
    }
    let filled: Vec<f64> = maxima.into_iter().filter(|m| m.is_finite()).collect();
    filled.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-15)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RateReport {
    pub gap_slope: Option<f64>,
    pub z_slope: Option<f64>,
    pub gap_early: Option<f64>,
    pub gap_late: Option<f64>,
    pub z_early: Option<f64>,
    pub z_late: Option<f64>,
    pub gap_ratio_ok: bool,
    pub z_ratio_ok: bool,
    pub z_envelope_nonincreasing: bool,
}

/// Ergodic gap `|H(ᾱ^T) - H*|` and `‖Zᾱ^T‖` rate diagnostics; ratios compare `t_late` against `t_early`.
pub fn rate_report(rows: &[SummaryRow], h_star: f64, t_early: usize, t_late: usize) -> RateReport {
    let gap: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.t > 0)
        .map(|r| (r.t as f64, (r.h_erg - h_star).abs()))
        .collect();
    let z: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.t > 0)
        .map(|r| (r.t as f64, r.znorm_erg))
        .collect();
    let at = |series: &[(f64, f64)], t: usize| series.iter().find(|p| p.0 as usize == t).map(|p| p.1);
    let (ge, gl) = (at(&gap, t_early), at(&gap, t_late));
    let (ze, zl) = (at(&z, t_early), at(&z, t_late));
    let ok = |e: Option<f64>, l: Option<f64>| match (e, l) {
        (Some(e), Some(l)) => ratio_test(e, l, 0.7),
        _ => false,
    };
    RateReport {
        gap_slope: fit_rate(&gap),
        z_slope: fit_rate(&z),
        gap_early: ge,
        gap_late: gl,
        z_early: ze,
        z_late: zl,
        gap_ratio_ok: ok(ge, gl),
        z_ratio_ok: ok(ze, zl),
        z_envelope_nonincreasing: envelope_nonincreasing(&z, 10),
    }
}
