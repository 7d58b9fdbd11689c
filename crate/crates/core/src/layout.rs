//! Flat storage layout of the stacked dual vectors.
//!
//! `alpha` is the concatenation of `alpha_ij = (mu_ij, gamma_ij, theta_ij)` in
//! relabeled agent order. `omega` holds every `xi_ijl` slot (by owner, then
//! `l` ascending) followed by every `zeta` slot (same ordering), which is
//! exactly the row order of `Z`.

use crate::network::{neighbor_sets, ClusterNetwork, NeighborSets};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentLayout {
    pub cluster: usize,
    pub local: usize,
    pub global: usize,
    pub cluster_size: usize,
    /// Start of `alpha_ij` inside the stacked `alpha`.
    pub offset: usize,
    /// Outgoing `xi` slots (this agent is the smaller endpoint), `Omega` order.
    pub xi_out: Vec<usize>,
    /// Incoming `xi` slots (this agent is the larger endpoint), ascending lower neighbor.
    pub xi_in: Vec<usize>,
    pub zeta_out: Vec<usize>,
    pub zeta_in: Vec<usize>,
}

/// One consensus edge: `owner` is the smaller endpoint, `other` the larger (global indices).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub owner: usize,
    pub other: usize,
    pub offset: usize,
    /// Start within the owner's own `omega` segment (its `xi` slots, then its `zeta` slots).
    pub local: usize,
    pub len: usize,
}

#[derive(Debug, Clone)]
pub struct Layout {
    pub dim: usize,
    pub rows: usize,
    pub agents: Vec<AgentLayout>,
    pub xi: Vec<Slot>,
    pub zeta: Vec<Slot>,
    pub alpha_len: usize,
    pub omega_len: usize,
    /// Length of each agent's owned `omega` segment.
    pub omega_owned_len: Vec<usize>,
    pub sets: NeighborSets,
}

impl Layout {
    pub fn new(network: &ClusterNetwork, dim: usize, rows: usize) -> Self {
        let sets = neighbor_sets(network);
        let n = network.num_agents();
        let mut agents = Vec::with_capacity(n);
        let mut offset = 0;
        for g in 0..n {
            let (cluster, local) = network.locate(g);
            let cluster_size = network.cluster_size(cluster);
            agents.push(AgentLayout {
                cluster,
                local,
                global: g,
                cluster_size,
                offset,
                xi_out: Vec::new(),
                xi_in: Vec::new(),
                zeta_out: Vec::new(),
                zeta_in: Vec::new(),
            });
            offset += dim + cluster_size * dim + rows;
        }
        let alpha_len = offset;

        let mut xi = Vec::new();
        let mut owned = vec![0usize; n];
        let mut pos = 0;
        for g in 0..n {
            let (cluster, _) = network.locate(g);
            let len = network.cluster_size(cluster) * dim;
            for &l in &sets.omega[g] {
                let other = network.global_index(cluster, l);
                agents[g].xi_out.push(xi.len());
                agents[other].xi_in.push(xi.len());
                xi.push(Slot {
                    owner: g,
                    other,
                    offset: pos,
                    local: owned[g],
                    len,
                });
                owned[g] += len;
                pos += len;
            }
        }
        let mut zeta = Vec::new();
        for g in 0..n {
            for &k in &sets.omega_hat[g] {
                agents[g].zeta_out.push(zeta.len());
                agents[k].zeta_in.push(zeta.len());
                zeta.push(Slot {
                    owner: g,
                    other: k,
                    offset: pos,
                    local: owned[g],
                    len: rows,
                });
                owned[g] += rows;
                pos += rows;
            }
        }
        Self {
            dim,
            rows,
            agents,
            xi,
            zeta,
            alpha_len,
            omega_len: pos,
            omega_owned_len: owned,
            sets,
        }
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn agent_len(&self, agent: usize) -> usize {
        self.dim + self.agents[agent].cluster_size * self.dim + self.rows
    }

    pub fn alpha_block<'a>(&self, alpha: &'a [f64], agent: usize) -> &'a [f64] {
        let start = self.agents[agent].offset;
        &alpha[start..start + self.agent_len(agent)]
    }

    pub fn mu<'a>(&self, alpha_ij: &'a [f64]) -> &'a [f64] {
        &alpha_ij[..self.dim]
    }

    pub fn gamma<'a>(&self, alpha_ij: &'a [f64]) -> &'a [f64] {
        &alpha_ij[self.dim..alpha_ij.len() - self.rows]
    }

    pub fn theta<'a>(&self, alpha_ij: &'a [f64]) -> &'a [f64] {
        &alpha_ij[alpha_ij.len() - self.rows..]
    }

    pub fn slot<'a>(&self, omega: &'a [f64], slot: &Slot) -> &'a [f64] {
        &omega[slot.offset..slot.offset + slot.len]
    }

    /// Agents exchanging `alpha` with `agent` (all four neighbor families), ascending and unique.
    pub fn alpha_neighbors(&self, agent: usize) -> Vec<usize> {
        let a = &self.agents[agent];
        let mut out: Vec<usize> = a
            .xi_out
            .iter()
            .map(|&s| self.xi[s].other)
            .chain(a.xi_in.iter().map(|&s| self.xi[s].owner))
            .chain(a.zeta_out.iter().map(|&s| self.zeta[s].other))
            .chain(a.zeta_in.iter().map(|&s| self.zeta[s].owner))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Higher-indexed neighbors whose fresh `alpha` is needed for this agent's `omega` update.
    pub fn higher_neighbors(&self, agent: usize) -> Vec<usize> {
        let a = &self.agents[agent];
        let mut out: Vec<usize> = a
            .xi_out
            .iter()
            .map(|&s| self.xi[s].other)
            .chain(a.zeta_out.iter().map(|&s| self.zeta[s].other))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Lower-indexed neighbors whose `omega` slots this agent reads.
    pub fn lower_neighbors(&self, agent: usize) -> Vec<usize> {
        let a = &self.agents[agent];
        let mut out: Vec<usize> = a
            .xi_in
            .iter()
            .map(|&s| self.xi[s].owner)
            .chain(a.zeta_in.iter().map(|&s| self.zeta[s].owner))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Slots owned by `agent`, in the order of its `omega` segment.
    pub fn omega_owned(&self, agent: usize) -> Vec<&Slot> {
        let a = &self.agents[agent];
        a.xi_out
            .iter()
            .map(|&s| &self.xi[s])
            .chain(a.zeta_out.iter().map(|&s| &self.zeta[s]))
            .collect()
    }

    /// Gathers `agent`'s owned segment out of a stacked `omega`.
    pub fn omega_segment(&self, omega: &[f64], agent: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.omega_owned_len[agent]);
        for s in self.omega_owned(agent) {
            out.extend_from_slice(self.slot(omega, s));
        }
        out
    }

    /// Writes an owned segment back into a stacked `omega`.
    pub fn scatter_omega(&self, omega: &mut [f64], agent: usize, segment: &[f64]) {
        for s in self.omega_owned(agent) {
            omega[s.offset..s.offset + s.len].copy_from_slice(&segment[s.local..s.local + s.len]);
        }
    }
}
