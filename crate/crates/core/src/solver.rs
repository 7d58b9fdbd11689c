//! Asynchronous dual proximal gradient iteration over a delayed network.
//!
//! One global step `t -> t+1` is iteration-synchronous: every agent reads
//! stamped snapshots (its own state at `t`, everything else at `(t-d)^+`),
//! produces `alpha_ij^{t+1}`, and then refreshes its edge multipliers once the
//! fresh states of its higher-indexed neighbors have arrived.

use std::sync::Arc;

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::delay::{stamp_for_read, Channel, DelaySchedule, Link, StampedBuffer};
use crate::diagnostics::{dual_objective, relative_error, Lemma2Report, Lemma2Tracker, SummaryRow};
use crate::error::{Error, Result};
use crate::layout::{Layout, Slot};
use crate::operators::{assemble, certify_step_sizes, Certificate, SystemOperators};
use crate::problem::Problem;

pub const DIVERGENCE_NORM: f64 = 1e9;

/// Stamped values visible to one agent while computing step `t`.
pub trait DelayedReads {
    /// `alpha_uv^{(t-d)^+}` of `agent` (the reader itself included).
    fn lagged_alpha(&self, agent: usize) -> Result<&[f64]>;
    /// Lagged value of one `xi` / `zeta` slot.
    fn lagged_slot(&self, slot: &Slot) -> Result<&[f64]>;
}

/// Fresh `alpha^{t+1}` values needed by the edge-multiplier update.
pub trait FreshReads {
    fn fresh_alpha(&self, agent: usize) -> Result<&[f64]>;
}

/// Reads served from fully stacked vectors; used by tests and the matrix-form checks.
pub struct Snapshot<'a> {
    pub layout: &'a Layout,
    pub alpha_lag: &'a [f64],
    pub omega_lag: &'a [f64],
    pub alpha_next: &'a [f64],
}

impl DelayedReads for Snapshot<'_> {
    fn lagged_alpha(&self, agent: usize) -> Result<&[f64]> {
        Ok(self.layout.alpha_block(self.alpha_lag, agent))
    }

    fn lagged_slot(&self, slot: &Slot) -> Result<&[f64]> {
        Ok(self.layout.slot(self.omega_lag, slot))
    }
}

impl FreshReads for Snapshot<'_> {
    fn fresh_alpha(&self, agent: usize) -> Result<&[f64]> {
        Ok(self.layout.alpha_block(self.alpha_next, agent))
    }
}

/// `(m_mu, m_gamma, m_theta)` of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientParts {
    pub m_mu: Vec<f64>,
    pub m_gamma: Vec<f64>,
    pub m_theta: Vec<f64>,
}

pub fn gradient_oracle(ops: &SystemOperators, problem: &Problem, agent: usize, alpha_ij: &[f64]) -> Result<GradientParts> {
    let g = ops.agents[agent].gradient(&problem.agents[agent].f, alpha_ij)?;
    let lay = &ops.layout;
    Ok(GradientParts {
        m_mu: lay.mu(&g).to_vec(),
        m_gamma: lay.gamma(&g).to_vec(),
        m_theta: lay.theta(&g).to_vec(),
    })
}

/// `alpha_ij^{t+1}` from the agent's own `alpha_ij^t` and the stamped reads.
pub fn update_alpha<R: DelayedReads + ?Sized>(
    ops: &SystemOperators,
    problem: &Problem,
    agent: usize,
    alpha_ij: &[f64],
    step: f64,
    reads: &R,
) -> Result<Vec<f64>> {
    let lay = &ops.layout;
    let info = &lay.agents[agent];
    let g = ops.agents[agent].gradient(&problem.agents[agent].f, alpha_ij)?;
    let pi = &ops.pi;
    let own_lag = reads.lagged_alpha(agent)?;

    let mut out = Vec::with_capacity(alpha_ij.len());

    let s: Vec<f64> = lay
        .mu(alpha_ij)
        .iter()
        .zip(lay.mu(&g))
        .map(|(m, d)| m - step * d)
        .collect();
    out.extend(problem.agents[agent].g.prox_conjugate(&s, step));

    let mut dir = lay.gamma(&g).to_vec();
    let own_gamma = lay.gamma(own_lag);
    for &k in &info.xi_out {
        let slot = &lay.xi[k];
        let xi = reads.lagged_slot(slot)?;
        let other = lay.gamma(reads.lagged_alpha(slot.other)?);
        for i in 0..dir.len() {
            dir[i] += xi[i] + pi[agent] * (own_gamma[i] - other[i]);
        }
    }
    for &k in &info.xi_in {
        let slot = &lay.xi[k];
        let xi = reads.lagged_slot(slot)?;
        let other = lay.gamma(reads.lagged_alpha(slot.owner)?);
        for i in 0..dir.len() {
            dir[i] += -xi[i] + pi[slot.owner] * (own_gamma[i] - other[i]);
        }
    }
    let mut gamma: Vec<f64> = lay
        .gamma(alpha_ij)
        .iter()
        .zip(&dir)
        .map(|(v, d)| v - step * d)
        .collect();
    problem.boxes.project_y(&mut gamma);
    out.extend(gamma);

    let mut dir = lay.theta(&g).to_vec();
    let own_theta = lay.theta(own_lag);
    for &k in &info.zeta_out {
        let slot = &lay.zeta[k];
        let zeta = reads.lagged_slot(slot)?;
        let other = lay.theta(reads.lagged_alpha(slot.other)?);
        for i in 0..dir.len() {
            dir[i] += zeta[i] + pi[agent] * (own_theta[i] - other[i]);
        }
    }
    for &k in &info.zeta_in {
        let slot = &lay.zeta[k];
        let zeta = reads.lagged_slot(slot)?;
        let other = lay.theta(reads.lagged_alpha(slot.owner)?);
        for i in 0..dir.len() {
            dir[i] += -zeta[i] + pi[slot.owner] * (own_theta[i] - other[i]);
        }
    }
    let mut theta: Vec<f64> = lay
        .theta(alpha_ij)
        .iter()
        .zip(&dir)
        .map(|(v, d)| v - step * d)
        .collect();
    problem.boxes.project_j(&mut theta);
    out.extend(theta);
    Ok(out)
}

/// The agent's owned `omega^{t+1}` segment: lagged slot plus `pi_ij` times the fresh disagreement.
pub fn update_omega<R: DelayedReads + FreshReads + ?Sized>(ops: &SystemOperators, agent: usize, reads: &R) -> Result<Vec<f64>> {
    let lay = &ops.layout;
    let info = &lay.agents[agent];
    let pi = ops.pi[agent];
    let mine = reads.fresh_alpha(agent)?;
    let mut out = Vec::with_capacity(lay.omega_owned_len[agent]);
    for &k in &info.xi_out {
        let slot = &lay.xi[k];
        let lag = reads.lagged_slot(slot)?;
        let other = lay.gamma(reads.fresh_alpha(slot.other)?);
        out.extend(lay.gamma(mine).iter().zip(other).zip(lag).map(|((a, b), l)| l + pi * (a - b)));
    }
    for &k in &info.zeta_out {
        let slot = &lay.zeta[k];
        let lag = reads.lagged_slot(slot)?;
        let other = lay.theta(reads.fresh_alpha(slot.other)?);
        out.extend(lay.theta(mine).iter().zip(other).zip(lag).map(|((a, b), l)| l + pi * (a - b)));
    }
    Ok(out)
}

/// Blockwise `prox^C_{H_r}`: conjugate prox on `mu`, projections on `gamma` and `theta`.
pub fn prox_hr(ops: &SystemOperators, problem: &Problem, v: &[f64], steps: &[f64]) -> Vec<f64> {
    let lay = &ops.layout;
    let mut out = Vec::with_capacity(v.len());
    for (k, a) in lay.agents.iter().enumerate() {
        let block = lay.alpha_block(v, a.global);
        out.extend(problem.agents[k].g.prox_conjugate(lay.mu(block), steps[k]));
        let mut gamma = lay.gamma(block).to_vec();
        problem.boxes.project_y(&mut gamma);
        out.extend(gamma);
        let mut theta = lay.theta(block).to_vec();
        problem.boxes.project_j(&mut theta);
        out.extend(theta);
    }
    out
}

/// Stacked gradient `∇H_s(alpha)`.
pub fn grad_hs(ops: &SystemOperators, problem: &Problem, alpha: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(alpha.len());
    for k in 0..ops.num_agents() {
        let block = ops.layout.alpha_block(alpha, k);
        out.extend(ops.agents[k].gradient(&problem.agents[k].f, block)?);
    }
    Ok(out)
}

/// Matrix form of one step:
/// `alpha' = prox^C_{H_r}[alpha - C(∇H_s(alpha) + Z^T omega_lag + Z^T S Z alpha_lag)]`,
/// `omega' = omega_lag + S Z alpha'`.
pub fn matrix_step(
    ops: &SystemOperators,
    problem: &Problem,
    steps: &[f64],
    alpha: &[f64],
    alpha_lag: &[f64],
    omega_lag: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let grad = grad_hs(ops, problem, alpha)?;
    let zt_omega = ops.zt_apply(omega_lag);
    let sz_lag: Vec<f64> = ops
        .z_apply(alpha_lag)
        .iter()
        .zip(&ops.s)
        .map(|(v, s)| v * s)
        .collect();
    let ztsz_lag = ops.zt_apply(&sz_lag);
    let c = ops.expand(steps);
    let v: Vec<f64> = (0..alpha.len())
        .map(|k| alpha[k] - c[k] * (grad[k] + zt_omega[k] + ztsz_lag[k]))
        .collect();
    let next = prox_hr(ops, problem, &v, steps);
    let omega: Vec<f64> = ops
        .z_apply(&next)
        .iter()
        .zip(&ops.s)
        .zip(omega_lag)
        .map(|((z, s), w)| w + s * z)
        .collect();
    Ok((next, omega))
}

/// Per-agent updates stacked in relabeled order, served from full snapshots.
pub fn stacked_step(
    ops: &SystemOperators,
    problem: &Problem,
    steps: &[f64],
    alpha: &[f64],
    alpha_lag: &[f64],
    omega_lag: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let lay = &ops.layout;
    let reads = Snapshot {
        layout: lay,
        alpha_lag,
        omega_lag,
        alpha_next: &[],
    };
    let mut next = Vec::with_capacity(alpha.len());
    for k in 0..ops.num_agents() {
        next.extend(update_alpha(ops, problem, k, lay.alpha_block(alpha, k), steps[k], &reads)?);
    }
    let reads = Snapshot {
        alpha_next: &next,
        ..reads
    };
    let mut omega = vec![0.0; lay.omega_len];
    for k in 0..ops.num_agents() {
        let seg = update_omega(ops, k, &reads)?;
        lay.scatter_omega(&mut omega, k, &seg);
    }
    Ok((next, omega))
}

/// Recovered primal estimate.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct PrimalEstimate {
    /// Per agent, relabeled order.
    pub y: Vec<Vec<f64>>,
    /// Per cluster: mean of its agents' `y`.
    pub x: Vec<Vec<f64>>,
}

pub fn recover_primal(ops: &SystemOperators, problem: &Problem, alpha: &[f64]) -> Result<PrimalEstimate> {
    let lay = &ops.layout;
    let mut y = Vec::with_capacity(ops.num_agents());
    for k in 0..ops.num_agents() {
        y.push(ops.agents[k].primal(&problem.agents[k].f, lay.alpha_block(alpha, k))?);
    }
    let net = &problem.network;
    let x = (0..net.num_clusters())
        .map(|i| {
            let start = net.cluster_offset(i);
            let n = net.cluster_size(i);
            (0..problem.dim)
                .map(|m| y[start..start + n].iter().map(|v| v[m]).sum::<f64>() / n as f64)
                .collect()
        })
        .collect();
    Ok(PrimalEstimate { y, x })
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone)]
pub struct ErgodicAccumulator {
    sum: Vec<f64>,
    comp: Vec<f64>,
    count: usize,
}

impl ErgodicAccumulator {
    pub fn new(len: usize) -> Self {
        Self {
            sum: vec![0.0; len],
            comp: vec![0.0; len],
            count: 0,
        }
    }

    pub fn add(&mut self, v: &[f64]) {
        for ((s, c), &x) in self.sum.iter_mut().zip(&mut self.comp).zip(v) {
            let t = *s + x;
            if s.abs() >= x.abs() {
                *c += (*s - t) + x;
            } else {
                *c += (x - t) + *s;
            }
            *s = t;
        }
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> Option<Vec<f64>> {
        if self.count == 0 {
            return None;
        }
        let n = self.count as f64;
        Some(self.sum.iter().zip(&self.comp).map(|(s, c)| (s + c) / n).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReadMode {
    /// Exactly stamp `(t-d)^+`.
    Exact,
    /// Newest arrived stamp; exploration only.
    Freshest,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepRule {
    /// Every agent uses the certified `c_max`.
    Auto,
    /// Agent `ij` uses `1 / (h_ij + 2 τ_max(Z^T B Z))`.
    AutoPerAgent,
    /// Same step for every agent.
    Uniform(f64),
    PerAgent(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub tol: f64,
    /// Consecutive small steps before stopping; 0 disables early stopping.
    pub patience: usize,
    pub pi: Vec<f64>,
    pub step: StepRule,
    pub allow_uncertified: bool,
    pub threads: usize,
    pub log_stride: usize,
    pub record_state: bool,
    pub read_mode: ReadMode,
    pub alpha0: Option<Vec<f64>>,
    pub omega0: Option<Vec<f64>>,
    /// `H(alpha*)` used for the relative error column.
    pub reference_h: Option<f64>,
}

impl SolverConfig {
    pub fn new(agents: usize) -> Self {
        Self {
            max_iters: 20_000,
            tol: 1e-9,
            patience: 50,
            pi: vec![1.0; agents],
            step: StepRule::Auto,
            allow_uncertified: false,
            threads: 1,
            log_stride: 1,
            record_state: false,
            read_mode: ReadMode::Exact,
            alpha0: None,
            omega0: None,
            reference_h: None,
        }
    }
}

/// One logged full state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateRow {
    pub t: usize,
    pub alpha: Vec<f64>,
    pub omega: Vec<f64>,
}

/// Channel bookkeeping collected during a run.
#[derive(Debug, Clone, Default, Serialize, PartialEq, Eq)]
pub struct ChannelAudit {
    pub reads_checked: u64,
    pub messages: u64,
    pub fifo_repairs: u64,
    pub max_alpha_lag: usize,
    pub max_omega_lag: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub iterations: usize,
    pub stopped_early: bool,
    pub d: usize,
    pub steps: Vec<f64>,
    pub certificate: Certificate,
    pub last: PrimalEstimate,
    pub ergodic: PrimalEstimate,
    pub h_last: f64,
    pub h_ergodic: f64,
    pub znorm_last: f64,
    pub znorm_ergodic: f64,
    pub lemma2: Lemma2Report,
    pub audit: ChannelAudit,
    #[serde(skip)]
    pub alpha: Vec<f64>,
    #[serde(skip)]
    pub omega: Vec<f64>,
    #[serde(skip)]
    pub alpha0: Vec<f64>,
    #[serde(skip)]
    pub omega0: Vec<f64>,
    #[serde(skip)]
    pub alpha_ergodic: Vec<f64>,
    #[serde(skip)]
    pub summary: Vec<SummaryRow>,
    #[serde(skip)]
    pub states: Vec<StateRow>,
}

type Shared = Arc<Vec<f64>>;

/// Per-agent buffers and links of the delayed network.
struct Channels {
    own_alpha: Vec<StampedBuffer<Shared>>,
    own_omega: Vec<StampedBuffer<Shared>>,
    /// Incoming alpha links per receiver: `(sender, link)`, sorted by sender.
    alpha_in: Vec<Vec<(usize, Link<Shared>)>>,
    /// Incoming omega links per receiver (from lower neighbors).
    omega_in: Vec<Vec<(usize, Link<Shared>)>>,
}

impl Channels {
    fn new(layout: &Layout, alpha0: &[f64], omega0: &[f64], retain: usize) -> Self {
        let n = layout.num_agents();
        let blocks: Vec<Shared> = (0..n)
            .map(|k| Arc::new(layout.alpha_block(alpha0, k).to_vec()))
            .collect();
        let segments: Vec<Shared> = (0..n)
            .map(|k| Arc::new(layout.omega_segment(omega0, k)))
            .collect();
        let own_alpha = blocks.iter().map(|b| StampedBuffer::new(b.clone(), retain)).collect();
        let own_omega = segments.iter().map(|b| StampedBuffer::new(b.clone(), retain)).collect();
        let alpha_in = (0..n)
            .map(|r| {
                layout
                    .alpha_neighbors(r)
                    .into_iter()
                    .map(|s| (s, Link::new(Channel::Alpha, s, r, blocks[s].clone(), retain)))
                    .collect()
            })
            .collect();
        let omega_in = (0..n)
            .map(|r| {
                layout
                    .lower_neighbors(r)
                    .into_iter()
                    .map(|s| (s, Link::new(Channel::Omega, s, r, segments[s].clone(), retain)))
                    .collect()
            })
            .collect();
        Self {
            own_alpha,
            own_omega,
            alpha_in,
            omega_in,
        }
    }

    fn link<'a>(links: &'a [(usize, Link<Shared>)], sender: usize) -> Result<&'a Link<Shared>> {
        links
            .binary_search_by_key(&sender, |(s, _)| *s)
            .map(|i| &links[i].1)
            .map_err(|_| Error::Availability(format!("no link from agent {sender}")))
    }
}

/// What one agent sees at time `now` while computing step `t`.
struct AgentView<'a> {
    channels: &'a Channels,
    reader: usize,
    stamp: usize,
    now: usize,
    mode: ReadMode,
    /// Stamp of the fresh states for the omega update.
    fresh: usize,
}

impl<'a> AgentView<'a> {
    fn new(channels: &'a Channels, reader: usize, stamp: usize, t: usize, mode: ReadMode) -> Self {
        Self {
            channels,
            reader,
            stamp,
            now: t,
            mode,
            fresh: t + 1,
        }
    }

    fn read<'b>(&self, buffer: &'b StampedBuffer<Shared>) -> Result<&'b [f64]> {
        match self.mode {
            ReadMode::Exact => buffer.read_at(self.stamp, self.now).map(|v| v.as_slice()),
            ReadMode::Freshest => buffer.read_freshest(self.now).map(|(_, v)| v.as_slice()),
        }
    }
}

impl DelayedReads for AgentView<'_> {
    fn lagged_alpha(&self, agent: usize) -> Result<&[f64]> {
        if agent == self.reader {
            self.read(&self.channels.own_alpha[agent])
        } else {
            let link = Channels::link(&self.channels.alpha_in[self.reader], agent)?;
            self.read(&link.buffer)
        }
    }

    fn lagged_slot(&self, slot: &Slot) -> Result<&[f64]> {
        let seg = if slot.owner == self.reader {
            self.read(&self.channels.own_omega[slot.owner])?
        } else {
            let link = Channels::link(&self.channels.omega_in[self.reader], slot.owner)?;
            self.read(&link.buffer)?
        };
        Ok(&seg[slot.local..slot.local + slot.len])
    }
}

impl FreshReads for AgentView<'_> {
    fn fresh_alpha(&self, agent: usize) -> Result<&[f64]> {
        let buf = if agent == self.reader {
            &self.channels.own_alpha[agent]
        } else {
            &Channels::link(&self.channels.alpha_in[self.reader], agent)?.buffer
        };
        buf.read_at(self.fresh, usize::MAX).map(|v| v.as_slice())
    }
}

/// Certified solver bound to one problem and delay schedule.
pub struct Solver<'p> {
    pub problem: &'p Problem,
    pub ops: SystemOperators,
    pub schedule: DelaySchedule,
    pub config: SolverConfig,
    pub certificate: Certificate,
    pub steps: Vec<f64>,
}

impl<'p> Solver<'p> {
    pub fn new(problem: &'p Problem, schedule: DelaySchedule, config: SolverConfig) -> Result<Self> {
        let n = problem.network.num_agents();
        let ops = assemble(problem, schedule.d(), &config.pi)?;
        let requested = match &config.step {
            StepRule::Auto => None,
            StepRule::AutoPerAgent => Some(certify_step_sizes(&ops, None)?.per_agent_steps),
            StepRule::Uniform(c) => Some(vec![*c; n]),
            StepRule::PerAgent(c) => Some(c.clone()),
        };
        let certificate = certify_step_sizes(&ops, requested.as_deref())?;
        if !certificate.certified && !config.allow_uncertified {
            return Err(Error::Uncertified(format!(
                "min-eig(C^-1 - H - Z^T B Z) = {:.3e}, min-eig(C^-1 - Z^T S Z) = {:.3e}; c_max = {:.6e}",
                certificate.min_eig_descent, certificate.min_eig_metric, certificate.c_max
            )));
        }
        if config.log_stride == 0 {
            return Err(Error::Validation("log stride must be positive".into()));
        }
        let steps = certificate.steps.clone();
        Ok(Self {
            problem,
            ops,
            schedule,
            config,
            certificate,
            steps,
        })
    }

    fn initial_state(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let lay = &self.ops.layout;
        let alpha0 = match &self.config.alpha0 {
            Some(a) if a.len() != lay.alpha_len => {
                return Err(Error::Validation(format!(
                    "alpha0 has length {}, expected {}",
                    a.len(),
                    lay.alpha_len
                )))
            }
            Some(a) => a.clone(),
            None => vec![0.0; lay.alpha_len],
        };
        let omega0 = match &self.config.omega0 {
            Some(w) if w.len() != lay.omega_len => {
                return Err(Error::Validation(format!(
                    "omega0 has length {}, expected {}",
                    w.len(),
                    lay.omega_len
                )))
            }
            Some(w) => w.clone(),
            None => vec![0.0; lay.omega_len],
        };
        Ok((alpha0, omega0))
    }

    fn summary_row(&self, t: usize, alpha: &[f64], ergodic: &[f64]) -> Result<SummaryRow> {
        let h = dual_objective(&self.ops, self.problem, alpha)?;
        let h_erg = dual_objective(&self.ops, self.problem, ergodic)?;
        Ok(SummaryRow {
            t,
            h,
            h_erg,
            znorm: self.ops.consensus_violation(alpha),
            znorm_erg: self.ops.consensus_violation(ergodic),
            eps: self
                .config
                .reference_h
                .map(|r| relative_error(h, r))
                .unwrap_or(f64::NAN),
        })
    }

    pub fn run(&self) -> Result<RunReport> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.threads.max(1))
            .build()
            .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
        pool.install(|| self.run_inner())
    }

    fn run_inner(&self) -> Result<RunReport> {
        let ops = &self.ops;
        let lay = &ops.layout;
        let n = ops.num_agents();
        let d = self.schedule.d();
        let retain = d + 2;
        let (alpha0, omega0) = self.initial_state()?;
        let mut channels = Channels::new(lay, &alpha0, &omega0, retain);
        let mut audit = ChannelAudit::default();
        let higher: Vec<Vec<usize>> = (0..n).map(|k| lay.higher_neighbors(k)).collect();

        // Global histories of the stacked vectors, used for diagnostics only.
        let mut zhist: std::collections::VecDeque<Vec<f64>> = std::collections::VecDeque::with_capacity(retain);
        let mut whist: std::collections::VecDeque<Vec<f64>> = std::collections::VecDeque::with_capacity(retain);
        zhist.push_back(ops.z_apply(&alpha0));
        whist.push_back(omega0.clone());
        let mut lemma2 = Lemma2Tracker::new(ops, &omega0);

        let mut alpha = alpha0.clone();
        let mut omega = omega0.clone();
        let mut ergodic = ErgodicAccumulator::new(lay.alpha_len);
        let mut summary = Vec::new();
        let mut states = Vec::new();
        summary.push(self.summary_row(0, &alpha, &alpha)?);
        if self.config.record_state {
            states.push(StateRow {
                t: 0,
                alpha: alpha.clone(),
                omega: omega.clone(),
            });
        }

        let parallel = self.config.threads > 1;
        let mut calm = 0usize;
        let mut stopped_early = false;
        let mut t = 0usize;
        while t < self.config.max_iters {
            let stamp = stamp_for_read(t, d);
            let mode = self.config.read_mode;
            let compute = |k: usize| -> Result<Vec<f64>> {
                let v = AgentView::new(&channels, k, stamp, t, mode);
                let own = v.read_own_current(t)?;
                update_alpha(ops, self.problem, k, own, self.steps[k], &v)
            };
            let blocks: Vec<Vec<f64>> = if parallel {
                (0..n).into_par_iter().map(compute).collect::<Result<_>>()?
            } else {
                (0..n).map(compute).collect::<Result<_>>()?
            };
            audit.reads_checked += (0..n)
                .map(|k| reads_per_step(lay, k) as u64)
                .sum::<u64>();

            // broadcast alpha^{t+1}
            let shared: Vec<Shared> = blocks.into_iter().map(Arc::new).collect();
            for k in 0..n {
                channels.own_alpha[k].push(t + 1, t + 1, shared[k].clone())?;
                for (s, link) in channels.alpha_in[k].iter_mut() {
                    let arrival = link.deliver(&self.schedule, t + 1, t + 1, shared[*s].clone())?;
                    audit.max_alpha_lag = audit.max_alpha_lag.max(arrival - (t + 1));
                    audit.messages += 1;
                }
            }

            // omega^{t+1} once the higher neighbors' alpha^{t+1} has arrived
            let omega_compute = |k: usize| -> Result<Vec<f64>> {
                let v = AgentView::new(&channels, k, stamp, t, mode);
                update_omega(ops, k, &v)
            };
            let segments: Vec<Vec<f64>> = if parallel {
                (0..n).into_par_iter().map(omega_compute).collect::<Result<_>>()?
            } else {
                (0..n).map(omega_compute).collect::<Result<_>>()?
            };
            let ready: Vec<usize> = (0..n)
                .map(|k| {
                    higher[k]
                        .iter()
                        .map(|&h| {
                            Channels::link(&channels.alpha_in[k], h)
                                .map(|l| l.buffer.last_arrival())
                                .unwrap_or(t + 1)
                        })
                        .fold(t + 1, usize::max)
                })
                .collect();
            let shared_w: Vec<Shared> = segments.into_iter().map(Arc::new).collect();
            for k in 0..n {
                channels.own_omega[k].push(t + 1, ready[k], shared_w[k].clone())?;
                for (s, link) in channels.omega_in[k].iter_mut() {
                    let arrival = link.deliver(&self.schedule, t + 1, ready[*s], shared_w[*s].clone())?;
                    audit.max_omega_lag = audit.max_omega_lag.max(arrival - (t + 1));
                    audit.messages += 1;
                }
            }

            let mut next = Vec::with_capacity(lay.alpha_len);
            for b in &shared {
                next.extend_from_slice(b);
            }
            let mut next_omega = vec![0.0; lay.omega_len];
            for (k, seg) in shared_w.iter().enumerate() {
                lay.scatter_omega(&mut next_omega, k, seg);
            }

            let norm = next.iter().chain(&next_omega).fold(0.0f64, |m, v| m.max(v.abs()));
            if !norm.is_finite() || norm > DIVERGENCE_NORM {
                return Err(Error::Divergence {
                    iteration: t + 1,
                    norm,
                });
            }

            // diagnostics on the stacked trajectory
            let lag_index = zhist.len() - 1 - (t - stamp);
            let z_next = ops.z_apply(&next);
            lemma2.update(
                t,
                &z_next,
                zhist.back().expect("history"),
                &zhist[lag_index],
                &next_omega,
                &whist[lag_index],
            );
            zhist.push_back(z_next);
            whist.push_back(next_omega.clone());
            while zhist.len() > retain {
                zhist.pop_front();
                whist.pop_front();
            }

            let delta = next
                .iter()
                .zip(&alpha)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            alpha = next;
            omega = next_omega;
            ergodic.add(&alpha);
            t += 1;

            if t % self.config.log_stride == 0 {
                let erg = ergodic.mean().expect("non-empty");
                summary.push(self.summary_row(t, &alpha, &erg)?);
                if self.config.record_state {
                    states.push(StateRow {
                        t,
                        alpha: alpha.clone(),
                        omega: omega.clone(),
                    });
                }
            }
            if t % 1000 == 0 {
                debug!("t = {t}, |Δα|∞ = {delta:.3e}");
            }

            if self.config.patience > 0 && delta < self.config.tol {
                calm += 1;
                if calm >= self.config.patience {
                    stopped_early = true;
                    break;
                }
            } else {
                calm = 0;
            }
        }

        let erg = ergodic.mean().unwrap_or_else(|| alpha.clone());
        if summary.last().map(|r| r.t) != Some(t) {
            summary.push(self.summary_row(t, &alpha, &erg)?);
            if self.config.record_state {
                states.push(StateRow {
                    t,
                    alpha: alpha.clone(),
                    omega: omega.clone(),
                });
            }
        }
        audit.fifo_repairs = channels
            .alpha_in
            .iter()
            .chain(&channels.omega_in)
            .flatten()
            .map(|(_, l)| l.fifo_repairs as u64)
            .sum();
        info!(
            "finished after {t} iterations (early stop: {stopped_early}), |Zα| = {:.3e}",
            ops.consensus_violation(&alpha)
        );

        let last_row = summary.last().expect("summary").clone();
        Ok(RunReport {
            iterations: t,
            stopped_early,
            d,
            steps: self.steps.clone(),
            certificate: self.certificate.clone(),
            last: recover_primal(ops, self.problem, &alpha)?,
            ergodic: recover_primal(ops, self.problem, &erg)?,
            h_last: last_row.h,
            h_ergodic: last_row.h_erg,
            znorm_last: last_row.znorm,
            znorm_ergodic: last_row.znorm_erg,
            lemma2: lemma2.report(ops),
            audit,
            alpha,
            omega,
            alpha0,
            omega0,
            alpha_ergodic: erg,
            summary,
            states,
        })
    }
}

impl AgentView<'_> {
    /// The agent's own current state `alpha_ij^t` (no delay).
    fn read_own_current(&self, t: usize) -> Result<&[f64]> {
        self.channels.own_alpha[self.reader]
            .read_at(t, t)
            .map(|v| v.as_slice())
    }
}

fn reads_per_step(layout: &Layout, agent: usize) -> usize {
    let a = &layout.agents[agent];
    1 + 2 * (a.xi_out.len() + a.xi_in.len() + a.zeta_out.len() + a.zeta_in.len())
}
