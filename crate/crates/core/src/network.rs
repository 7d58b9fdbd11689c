//! Two-level communication graph: clusters `G_i` embedded in the global graph `G`.
//!
//! Agents are addressed either by `(cluster, local)` pairs or by their relabeled
//! global index, where cluster `i`'s agents follow all agents of clusters `0..i`.
//! Internally every index is 0-based; [`relabel`] and
//! [`ClusterNetwork::from_one_based`] accept the 1-based labels used in the
//! literature so published examples can be checked verbatim.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Undirected edge stored as `(smaller, larger)` endpoint.
pub type Edge = (usize, usize);

/// 1-based relabeling `n_ij = sum_{l < i} n_l + j`.
pub fn relabel(cluster_sizes: &[usize], cluster: usize, local: usize) -> Result<usize> {
    if cluster == 0 || cluster > cluster_sizes.len() {
        return Err(Error::Index(format!(
            "cluster {cluster} not in 1..={}",
            cluster_sizes.len()
        )));
    }
    let size = cluster_sizes[cluster - 1];
    if local == 0 || local > size {
        return Err(Error::Index(format!(
            "agent {local} not in 1..={size} of cluster {cluster}"
        )));
    }
    Ok(cluster_sizes[..cluster - 1].iter().sum::<usize>() + local)
}

/// Canonical edge indexing: orient every edge as `(min, max)` and sort by the
/// smaller endpoint, then by the larger one.
pub fn order_edges(edges: &[(usize, usize)]) -> Result<Vec<Edge>> {
    let mut out: Vec<Edge> = Vec::with_capacity(edges.len());
    for &(u, v) in edges {
        if u == v {
            return Err(Error::Validation(format!("self-loop on vertex {u}")));
        }
        out.push((u.min(v), u.max(v)));
    }
    out.sort_unstable();
    if let Some(w) = out.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Validation(format!(
            "duplicate edge ({}, {})",
            w[0].0, w[0].1
        )));
    }
    Ok(out)
}

fn is_connected(n: usize, edges: &[Edge]) -> bool {
    if n <= 1 {
        return true;
    }
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut components = n;
    for &(u, v) in edges {
        let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
        if ru != rv {
            parent[ru] = rv;
            components -= 1;
        }
    }
    components == 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterNetwork {
    cluster_sizes: Vec<usize>,
    intra_edges: Vec<Vec<Edge>>,
    global_edges: Vec<Edge>,
    offsets: Vec<usize>,
}

impl ClusterNetwork {
    /// Builds and validates a network from 0-based edge lists.
    pub fn new(
        cluster_sizes: Vec<usize>,
        intra_edges: Vec<Vec<(usize, usize)>>,
        global_edges: Vec<(usize, usize)>,
    ) -> Result<Self> {
        if cluster_sizes.is_empty() {
            return Err(Error::Validation("network has no clusters".into()));
        }
        if let Some(i) = cluster_sizes.iter().position(|&n| n == 0) {
            return Err(Error::Validation(format!("cluster {i} is empty")));
        }
        if intra_edges.len() != cluster_sizes.len() {
            return Err(Error::Validation(format!(
                "{} intra-cluster edge lists for {} clusters",
                intra_edges.len(),
                cluster_sizes.len()
            )));
        }
        let mut offsets = Vec::with_capacity(cluster_sizes.len());
        let mut total = 0;
        for &n in &cluster_sizes {
            offsets.push(total);
            total += n;
        }

        let mut ordered_intra = Vec::with_capacity(intra_edges.len());
        for (i, edges) in intra_edges.iter().enumerate() {
            let n = cluster_sizes[i];
            if let Some(&(u, v)) = edges.iter().find(|&&(u, v)| u >= n || v >= n) {
                return Err(Error::Validation(format!(
                    "cluster {i}: edge ({u}, {v}) outside 0..{n}"
                )));
            }
            let ordered = order_edges(edges)
                .map_err(|e| Error::Validation(format!("cluster {i}: {e}")))?;
            if !is_connected(n, &ordered) {
                return Err(Error::Validation(format!("cluster {i} is not connected")));
            }
            ordered_intra.push(ordered);
        }

        if let Some(&(u, v)) = global_edges.iter().find(|&&(u, v)| u >= total || v >= total) {
            return Err(Error::Validation(format!(
                "global edge ({u}, {v}) outside 0..{total}"
            )));
        }
        let global = order_edges(&global_edges)
            .map_err(|e| Error::Validation(format!("global graph: {e}")))?;
        if !is_connected(total, &global) {
            return Err(Error::Validation("global graph is not connected".into()));
        }

        Ok(Self {
            cluster_sizes,
            intra_edges: ordered_intra,
            global_edges: global,
            offsets,
        })
    }

    /// Same as [`ClusterNetwork::new`] but with 1-based vertex labels.
    pub fn from_one_based(
        cluster_sizes: Vec<usize>,
        intra_edges: Vec<Vec<(usize, usize)>>,
        global_edges: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let shift = |edges: &[(usize, usize)]| -> Result<Vec<(usize, usize)>> {
            edges
                .iter()
                .map(|&(u, v)| {
                    if u == 0 || v == 0 {
                        Err(Error::Validation(format!(
                            "edge ({u}, {v}) uses label 0 in 1-based input"
                        )))
                    } else {
                        Ok((u - 1, v - 1))
                    }
                })
                .collect()
        };
        let intra = intra_edges
            .iter()
            .map(|e| shift(e))
            .collect::<Result<Vec<_>>>()?;
        let global = shift(&global_edges)?;
        Self::new(cluster_sizes, intra, global)
    }

    pub fn num_clusters(&self) -> usize {
        self.cluster_sizes.len()
    }

    pub fn num_agents(&self) -> usize {
        self.cluster_sizes.iter().sum()
    }

    pub fn cluster_sizes(&self) -> &[usize] {
        &self.cluster_sizes
    }

    pub fn cluster_size(&self, cluster: usize) -> usize {
        self.cluster_sizes[cluster]
    }

    /// Edges of cluster `i` in canonical order (0-based local labels).
    pub fn intra_edges(&self, cluster: usize) -> &[Edge] {
        &self.intra_edges[cluster]
    }

    /// Global edges in canonical order (0-based relabeled indices).
    pub fn global_edges(&self) -> &[Edge] {
        &self.global_edges
    }

    /// 0-based global index of `(cluster, local)`.
    pub fn global_index(&self, cluster: usize, local: usize) -> usize {
        debug_assert!(local < self.cluster_sizes[cluster]);
        self.offsets[cluster] + local
    }

    /// Inverse of [`ClusterNetwork::global_index`].
    pub fn locate(&self, global: usize) -> (usize, usize) {
        let cluster = match self.offsets.binary_search(&global) {
            Ok(i) => {
                // skip over nothing: offsets are strictly increasing since clusters are non-empty
                i
            }
            Err(i) => i - 1,
        };
        (cluster, global - self.offsets[cluster])
    }

    pub fn cluster_offset(&self, cluster: usize) -> usize {
        self.offsets[cluster]
    }
}

/// Per-agent neighbor sets, indexed by global agent.
///
/// `omega`/`omega_sharp` hold cluster-local labels of higher/lower
/// intra-cluster neighbors; `omega_hat`/`omega_hat_sharp` hold global labels
/// of higher/lower neighbors in `G`. All lists are ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborSets {
    pub omega: Vec<Vec<usize>>,
    pub omega_sharp: Vec<Vec<usize>>,
    pub omega_hat: Vec<Vec<usize>>,
    pub omega_hat_sharp: Vec<Vec<usize>>,
}

pub fn neighbor_sets(network: &ClusterNetwork) -> NeighborSets {
    let n = network.num_agents();
    let mut sets = NeighborSets {
        omega: vec![Vec::new(); n],
        omega_sharp: vec![Vec::new(); n],
        omega_hat: vec![Vec::new(); n],
        omega_hat_sharp: vec![Vec::new(); n],
    };
    for i in 0..network.num_clusters() {
        for &(j, l) in network.intra_edges(i) {
            sets.omega[network.global_index(i, j)].push(l);
            sets.omega_sharp[network.global_index(i, l)].push(j);
        }
    }
    for &(k, l) in network.global_edges() {
        sets.omega_hat[k].push(l);
        sets.omega_hat_sharp[l].push(k);
    }
    // canonical edge order already yields ascending `omega`/`omega_hat`;
    // the sharp sets are filled in order of the smaller endpoint, also ascending.
    sets
}

/// Incidence and Laplacian matrices together with their Kronecker lifts.
#[derive(Debug, Clone)]
pub struct GraphMatrices {
    pub dim: usize,
    pub rows: usize,
    pub laplacians: Vec<DMatrix<i64>>,
    pub incidences: Vec<DMatrix<i64>>,
    pub global_incidence: DMatrix<i64>,
    /// Block diagonal of `G_i^T ⊗ I_{n_i M}` over all clusters.
    pub lifted_intra: DMatrix<f64>,
    /// `Ĝ^T ⊗ I_B`.
    pub lifted_global: DMatrix<f64>,
    /// Row blocks of `lifted_intra` owned by each global agent (edges where it is the smaller endpoint).
    pub intra_blocks: Vec<DMatrix<f64>>,
    /// Row blocks of `lifted_global` owned by each global agent.
    pub global_blocks: Vec<DMatrix<f64>>,
}

/// Vertex-by-edge incidence with `+1` at the smaller endpoint and `-1` at the larger.
pub fn incidence_matrix(vertices: usize, edges: &[Edge]) -> DMatrix<i64> {
    let mut g = DMatrix::<i64>::zeros(vertices, edges.len());
    for (k, &(u, v)) in edges.iter().enumerate() {
        g[(u, k)] = 1;
        g[(v, k)] = -1;
    }
    g
}

pub fn laplacian_matrix(vertices: usize, edges: &[Edge]) -> DMatrix<i64> {
    let mut l = DMatrix::<i64>::zeros(vertices, vertices);
    for &(u, v) in edges {
        l[(u, u)] += 1;
        l[(v, v)] += 1;
        l[(u, v)] -= 1;
        l[(v, u)] -= 1;
    }
    l
}

fn lift(m: &DMatrix<i64>, block: usize) -> DMatrix<f64> {
    let eye = DMatrix::<f64>::identity(block, block);
    m.map(|v| v as f64).kronecker(&eye)
}

/// Assembles `L^i`, `G_i`, `Ĝ` and the lifted consensus blocks for primal
/// dimension `dim` (M) and `rows` coupling rows (B).
pub fn build_matrices(network: &ClusterNetwork, dim: usize, rows: usize) -> Result<GraphMatrices> {
    if dim == 0 || rows == 0 {
        return Err(Error::Validation(format!(
            "primal dimension {dim} and coupling rows {rows} must be positive"
        )));
    }
    let n_clusters = network.num_clusters();
    let n_agents = network.num_agents();
    let mut laplacians = Vec::with_capacity(n_clusters);
    let mut incidences = Vec::with_capacity(n_clusters);
    let mut lifted = Vec::with_capacity(n_clusters);
    for i in 0..n_clusters {
        let n = network.cluster_size(i);
        let edges = network.intra_edges(i);
        if !is_connected(n, edges) {
            return Err(Error::Validation(format!("cluster {i} is not connected")));
        }
        let g = incidence_matrix(n, edges);
        lifted.push(lift(&g.transpose(), n * dim));
        laplacians.push(laplacian_matrix(n, edges));
        incidences.push(g);
    }
    if !is_connected(n_agents, network.global_edges()) {
        return Err(Error::Validation("global graph is not connected".into()));
    }

    let total_rows: usize = lifted.iter().map(|m| m.nrows()).sum();
    let total_cols: usize = lifted.iter().map(|m| m.ncols()).sum();
    let mut lifted_intra = DMatrix::<f64>::zeros(total_rows, total_cols);
    let (mut r0, mut c0) = (0, 0);
    for m in &lifted {
        lifted_intra
            .view_mut((r0, c0), (m.nrows(), m.ncols()))
            .copy_from(m);
        r0 += m.nrows();
        c0 += m.ncols();
    }

    let global_incidence = incidence_matrix(n_agents, network.global_edges());
    let lifted_global = lift(&global_incidence.transpose(), rows);

    let mut intra_blocks = Vec::with_capacity(n_agents);
    let mut row = 0;
    for i in 0..n_clusters {
        let n = network.cluster_size(i);
        let block = n * dim;
        for j in 0..n {
            let count = network.intra_edges(i).iter().filter(|e| e.0 == j).count();
            intra_blocks.push(lifted_intra.rows(row, count * block).into_owned());
            row += count * block;
        }
    }
    let mut global_blocks = Vec::with_capacity(n_agents);
    let mut row = 0;
    for k in 0..n_agents {
        let count = network.global_edges().iter().filter(|e| e.0 == k).count();
        global_blocks.push(lifted_global.rows(row, count * rows).into_owned());
        row += count * rows;
    }

    Ok(GraphMatrices {
        dim,
        rows,
        laplacians,
        incidences,
        global_incidence,
        lifted_intra,
        lifted_global,
        intra_blocks,
        global_blocks,
    })
}
