//! Block operators of the dual problem and step-size certification.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::layout::Layout;
use crate::network::{build_matrices, GraphMatrices};
use crate::problem::{Problem, SmoothCost};

/// Largest singular value; zero for empty matrices.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Extreme eigenvalues of a symmetric matrix; `(0, 0)` when empty.
pub fn eigen_range(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 0 {
        return (0.0, 0.0);
    }
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration with a Rayleigh quotient.
pub fn power_iteration(m: &DMatrix<f64>, rel_tol: f64, max_iter: usize) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = DVector::from_fn(n, |k, _| 1.0 + 0.5 * ((k + 1) as f64).sin());
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let w = m * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - lambda).abs() <= rel_tol * next.abs() {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// Per-agent blocks `W_ij`, `D_ij`, `L^i_j`, `A_ij` and the Lipschitz constant `h_ij`.
#[derive(Debug, Clone)]
pub struct AgentOperators {
    pub w: DMatrix<f64>,
    pub d: Vec<f64>,
    /// `j`-th column block of `L^i ⊗ I_M` (n_i M x M).
    pub lap_col: DMatrix<f64>,
    /// `A_i / n_i` (B x M).
    pub a_ij: DMatrix<f64>,
    pub b_ij: Vec<f64>,
    pub sigma: f64,
    pub h: f64,
}

impl AgentOperators {
    pub fn len(&self) -> usize {
        self.w.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.w.ncols() == 0
    }

    pub fn w_alpha(&self, alpha_ij: &[f64]) -> Vec<f64> {
        let v = &self.w * DVector::from_column_slice(alpha_ij);
        v.as_slice().to_vec()
    }

    /// Dual recovery point `y* = argmin f(n) - (W alpha)^T n`.
    pub fn primal(&self, f: &SmoothCost, alpha_ij: &[f64]) -> Result<Vec<f64>> {
        f.conjugate_argmin(&self.w_alpha(alpha_ij))
    }

    /// `∇s_ij = W^T y* + D^T`, i.e. the stacked `(m_mu, m_gamma, m_theta)`.
    pub fn gradient(&self, f: &SmoothCost, alpha_ij: &[f64]) -> Result<Vec<f64>> {
        let y = self.primal(f, alpha_ij)?;
        let mut g = self.w.transpose() * DVector::from_vec(y);
        for (gk, dk) in g.iter_mut().zip(&self.d) {
            *gk += dk;
        }
        Ok(g.as_slice().to_vec())
    }

    /// `s_ij(alpha) = f°(W alpha) + D alpha`.
    pub fn s_value(&self, f: &SmoothCost, alpha_ij: &[f64]) -> Result<f64> {
        let lin: f64 = self.d.iter().zip(alpha_ij).map(|(a, b)| a * b).sum();
        Ok(f.conjugate_value(&self.w_alpha(alpha_ij))? + lin)
    }
}

/// Stacked operators and constants for the whole network.
#[derive(Debug, Clone)]
pub struct SystemOperators {
    pub layout: Layout,
    pub graph: GraphMatrices,
    pub agents: Vec<AgentOperators>,
    /// Consensus operator, rows in `omega` order.
    pub z: DMatrix<f64>,
    /// Diagonal of `S` (one entry per row of `Z`).
    pub s: Vec<f64>,
    pub pi: Vec<f64>,
    pub d: usize,
    pub iota: f64,
    /// `sum_ij 4 pi_ij d iota^2`.
    pub gamma_const: f64,
}

fn selector(layout: &Layout, rows: usize, pick: impl Fn(usize) -> (usize, usize)) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, layout.alpha_len);
    let mut r = 0;
    for a in &layout.agents {
        let (start, len) = pick(a.global);
        for k in 0..len {
            m[(r + k, a.offset + start + k)] = 1.0;
        }
        r += len;
    }
    m
}

/// `Z = [𝖦 M; 𝖦̂ N]` assembled from the Kronecker lifts.
pub fn z_from_lifts(layout: &Layout, graph: &GraphMatrices) -> DMatrix<f64> {
    let dim = layout.dim;
    let gamma_rows: usize = layout.agents.iter().map(|a| a.cluster_size * dim).sum();
    let m_sel = selector(layout, gamma_rows, |g| {
        (dim, layout.agents[g].cluster_size * dim)
    });
    let n_sel = selector(layout, layout.num_agents() * layout.rows, |g| {
        (layout.agent_len(g) - layout.rows, layout.rows)
    });
    let top = &graph.lifted_intra * m_sel;
    let bottom = &graph.lifted_global * n_sel;
    let mut z = DMatrix::zeros(top.nrows() + bottom.nrows(), layout.alpha_len);
    z.rows_mut(0, top.nrows()).copy_from(&top);
    z.rows_mut(top.nrows(), bottom.nrows()).copy_from(&bottom);
    z
}

/// `Z` assembled slot by slot: `+I` on the smaller endpoint, `-I` on the larger.
pub fn z_from_slots(layout: &Layout) -> DMatrix<f64> {
    let mut z = DMatrix::zeros(layout.omega_len, layout.alpha_len);
    let dim = layout.dim;
    for s in &layout.xi {
        let lo = layout.agents[s.owner].offset + dim;
        let hi = layout.agents[s.other].offset + dim;
        for k in 0..s.len {
            z[(s.offset + k, lo + k)] = 1.0;
            z[(s.offset + k, hi + k)] = -1.0;
        }
    }
    for s in &layout.zeta {
        let lo = layout.agents[s.owner].offset + layout.agent_len(s.owner) - layout.rows;
        let hi = layout.agents[s.other].offset + layout.agent_len(s.other) - layout.rows;
        for k in 0..s.len {
            z[(s.offset + k, lo + k)] = 1.0;
            z[(s.offset + k, hi + k)] = -1.0;
        }
    }
    z
}

/// Assembles all operators for delay bound `d` and per-agent weights `pi`.
pub fn assemble(problem: &Problem, d: usize, pi: &[f64]) -> Result<SystemOperators> {
    let net = &problem.network;
    let dim = problem.dim;
    let rows = problem.rows();
    let n = net.num_agents();
    if pi.len() != n {
        return Err(Error::Validation(format!("{} weights for {n} agents", pi.len())));
    }
    if let Some(p) = pi.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
        return Err(Error::Validation(format!("weight pi = {p} must be positive")));
    }
    let layout = Layout::new(net, dim, rows);
    let graph = build_matrices(net, dim, rows)?;

    let mut agents = Vec::with_capacity(n);
    for a in &layout.agents {
        let ni = a.cluster_size;
        let lap = &graph.laplacians[a.cluster];
        let mut lap_col = DMatrix::zeros(ni * dim, dim);
        for k in 0..ni {
            for m in 0..dim {
                lap_col[(k * dim + m, m)] = lap[(k, a.local)] as f64;
            }
        }
        let a_ij = problem.coupling.block(a.cluster, dim) / ni as f64;
        let len = dim + ni * dim + rows;
        let mut w = DMatrix::zeros(dim, len);
        for m in 0..dim {
            w[(m, m)] = -1.0;
        }
        w.view_mut((0, dim), (dim, ni * dim))
            .copy_from(&(-lap_col.transpose()));
        w.view_mut((0, dim + ni * dim), (dim, rows))
            .copy_from(&(-a_ij.transpose()));
        let b_ij = problem.coupling.split[a.global].clone();
        let mut dvec = vec![0.0; len];
        dvec[dim + ni * dim..].copy_from_slice(&b_ij);
        let sigma = problem.agents[a.global].f.sigma();
        if !(sigma > 0.0) {
            return Err(Error::Validation(format!(
                "agent {} has non-positive modulus {sigma}",
                a.global
            )));
        }
        let wn = spectral_norm(&w);
        agents.push(AgentOperators {
            w,
            d: dvec,
            lap_col,
            a_ij,
            b_ij,
            sigma,
            h: wn * wn / sigma,
        });
    }

    let z = z_from_slots(&layout);
    let mut s = vec![0.0; layout.omega_len];
    for slot in layout.xi.iter().chain(&layout.zeta) {
        for v in &mut s[slot.offset..slot.offset + slot.len] {
            *v = pi[slot.owner];
        }
    }

    let iota_y = problem.boxes.iota_y(net, dim);
    let iota_j = problem.boxes.iota_j(rows);
    let nv = n as f64;
    let iota = (0..n)
        .map(|k| {
            let gi = spectral_norm(&graph.intra_blocks[k]);
            let gg = spectral_norm(&graph.global_blocks[k]);
            (nv * gi * gi * iota_y * iota_y + nv * gg * gg * iota_j * iota_j).sqrt()
        })
        .fold(0.0, f64::max);
    let gamma_const = pi.iter().map(|p| 4.0 * p * d as f64 * iota * iota).sum();

    Ok(SystemOperators {
        layout,
        graph,
        agents,
        z,
        s,
        pi: pi.to_vec(),
        d,
        iota,
        gamma_const,
    })
}

impl SystemOperators {
    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    /// `Z^T diag(weights) Z`.
    pub fn weighted_gram(&self, weights: &[f64]) -> DMatrix<f64> {
        let mut sz = self.z.clone();
        for (mut row, w) in sz.row_iter_mut().zip(weights) {
            row *= *w;
        }
        self.z.transpose() * sz
    }

    pub fn zts_z(&self) -> DMatrix<f64> {
        self.weighted_gram(&self.s)
    }

    /// Diagonal of `B = (1 + d)^2 S`.
    pub fn b_diag(&self) -> Vec<f64> {
        let f = (1.0 + self.d as f64).powi(2);
        self.s.iter().map(|v| f * v).collect()
    }

    /// Diagonal of `Q = (1 + d) S^{-1}`.
    pub fn q_diag(&self) -> Vec<f64> {
        let f = 1.0 + self.d as f64;
        self.s.iter().map(|v| f / v).collect()
    }

    /// Per-coordinate expansion of a per-agent quantity onto `alpha`.
    pub fn expand(&self, per_agent: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.layout.alpha_len);
        for (k, v) in per_agent.iter().enumerate() {
            out.extend(std::iter::repeat_n(*v, self.layout.agent_len(k)));
        }
        out
    }

    pub fn h(&self) -> Vec<f64> {
        self.agents.iter().map(|a| a.h).collect()
    }

    pub fn z_apply(&self, alpha: &[f64]) -> Vec<f64> {
        (&self.z * DVector::from_column_slice(alpha)).as_slice().to_vec()
    }

    pub fn zt_apply(&self, omega: &[f64]) -> Vec<f64> {
        (self.z.transpose() * DVector::from_column_slice(omega))
            .as_slice()
            .to_vec()
    }

    /// `‖Z alpha‖`.
    pub fn consensus_violation(&self, alpha: &[f64]) -> f64 {
        self.z_apply(alpha).iter().fold(0.0, |s, v| s + v * v).sqrt()
    }

    /// `‖v‖^2_{diag(w)}`.
    pub fn weighted_sq(v: &[f64], w: &[f64]) -> f64 {
        v.iter().zip(w).map(|(a, b)| a * a * b).sum()
    }
}

/// Step-size certificate.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Certificate {
    pub c_max: f64,
    pub h_max: f64,
    pub tau_max_ztbz: f64,
    pub tau_max_ztbz_power: f64,
    /// min-eig of `C^{-1} - H - Z^T B Z` at the certified steps.
    pub min_eig_descent: f64,
    /// min-eig of `C^{-1} - Z^T S Z` at the certified steps.
    pub min_eig_metric: f64,
    pub steps: Vec<f64>,
    /// `1 / (h_ij + 2 τ_max(Z^T B Z))` per agent.
    pub per_agent_steps: Vec<f64>,
    pub certified: bool,
}

pub const PSD_TOL: f64 = -1e-8;
pub const PD_TOL: f64 = 1e-12;

/// Computes `c_max = 1 / (h + 2 τ_max(Z^T B Z))` and checks the two PSD conditions
/// at `steps` (defaults to `c_max` for every agent).
pub fn certify_step_sizes(ops: &SystemOperators, steps: Option<&[f64]>) -> Result<Certificate> {
    let n = ops.num_agents();
    let h = ops.h();
    let h_max = h.iter().cloned().fold(0.0, f64::max);
    let ztbz = ops.weighted_gram(&ops.b_diag());
    let (_, tau) = eigen_range(&ztbz);
    let tau = tau.max(0.0);
    let tau_power = power_iteration(&ztbz, 1e-13, 200_000);
    let c_max = 1.0 / (h_max + 2.0 * tau);
    let per_agent_steps: Vec<f64> = h.iter().map(|hi| 1.0 / (hi + 2.0 * tau)).collect();
    let steps = match steps {
        Some(c) => {
            if c.len() != n {
                return Err(Error::Validation(format!("{} step sizes for {n} agents", c.len())));
            }
            if let Some(v) = c.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                return Err(Error::Validation(format!("step size {v} must be positive")));
            }
            c.to_vec()
        }
        None => vec![c_max; n],
    };
    let c_inv: Vec<f64> = ops.expand(&steps).iter().map(|c| 1.0 / c).collect();
    let hx = ops.expand(&h);
    let mut m1 = -ztbz;
    let mut m2 = -ops.zts_z();
    for k in 0..c_inv.len() {
        m1[(k, k)] += c_inv[k] - hx[k];
        m2[(k, k)] += c_inv[k];
    }
    let (min1, _) = eigen_range(&m1);
    let (min2, _) = eigen_range(&m2);
    Ok(Certificate {
        c_max,
        h_max,
        tau_max_ztbz: tau,
        tau_max_ztbz_power: tau_power,
        min_eig_descent: min1,
        min_eig_metric: min2,
        certified: min1 >= PSD_TOL && min2 > PD_TOL,
        steps,
        per_agent_steps,
    })
}
