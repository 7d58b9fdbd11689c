//! Scenario files: JSON schema, validation and the bundled scenarios.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::delay::{DelayMode, DelaySchedule};
use crate::error::{Error, Result};
use crate::network::ClusterNetwork;
use crate::problem::{
    split_b, AgentProblem, CouplingConstraint, DualBoxes, NonsmoothCost, Problem, Sense, SmoothCost,
};
use crate::solver::{ReadMode, SolverConfig, StepRule};

pub const SIM_A: &str = include_str!("../scenarios/simA.json");
pub const SIM_B: &str = include_str!("../scenarios/simB.json");
pub const MICRO: &str = include_str!("../scenarios/micro.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    #[default]
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothKindSpec {
    Quadratic,
    QuadraticPlusExp,
}

/// Per-coordinate coefficients of `a x^2 + b x + p exp(r x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coeffs {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothSpec {
    pub kind: SmoothKindSpec,
    pub coeffs: Coeffs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NonsmoothKindSpec {
    Box,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonsmoothSpec {
    pub kind: NonsmoothKindSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Bounds>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub f: SmoothSpec,
    pub g: NonsmoothSpec,
}

/// Emission-dispatch cluster (`M = 1`): a generation company plus SOx and NOx regulators.
///
/// Cluster cost `chi C + (1 - chi) delta (E^S + E^N)` with
/// `C = a1 x^2 + a2 x + a3`, `E^S = b1 x^2 + b2 x + b3`,
/// `E^N = r1 exp(r2 x) + r3 x + r4` and `delta = C(ub) / (E^S(ub) + E^N(ub))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmissionSpec {
    pub alpha: [f64; 3],
    pub beta: [f64; 3],
    pub rho: [f64; 4],
    pub chi: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub lower: f64,
    pub upper: f64,
}

fn default_epsilon() -> f64 {
    1e-3
}

impl EmissionSpec {
    pub fn fuel(&self, x: f64) -> f64 {
        self.alpha[0] * x * x + self.alpha[1] * x + self.alpha[2]
    }

    pub fn sox(&self, x: f64) -> f64 {
        self.beta[0] * x * x + self.beta[1] * x + self.beta[2]
    }

    pub fn nox(&self, x: f64) -> f64 {
        self.rho[0] * (self.rho[1] * x).exp() + self.rho[2] * x + self.rho[3]
    }

    pub fn delta(&self) -> f64 {
        self.fuel(self.upper) / (self.sox(self.upper) + self.nox(self.upper))
    }

    /// Three agent costs whose sum equals the cluster cost up to constants.
    pub fn agents(&self) -> Result<Vec<AgentProblem>> {
        if !(self.chi > 0.0 && self.chi < 1.0) {
            return Err(Error::schema("emission.chi", format!("must lie in (0, 1), got {}", self.chi)));
        }
        let delta = self.delta();
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Validation(format!("emission penalty price delta = {delta} is not positive")));
        }
        let w = (1.0 - self.chi) * delta;
        let g = NonsmoothCost::interval(self.lower, self.upper)?;
        Ok(vec![
            AgentProblem {
                f: SmoothCost::quadratic(vec![self.chi * self.alpha[0] - self.epsilon], vec![self.chi * self.alpha[1]])?,
                g: g.clone(),
            },
            AgentProblem {
                f: SmoothCost::quadratic(vec![w * self.beta[0]], vec![w * self.beta[1]])?,
                g: g.clone(),
            },
            AgentProblem {
                f: SmoothCost::quadratic_plus_exp(
                    vec![self.epsilon],
                    vec![w * self.rho[2]],
                    vec![w * self.rho[0]],
                    vec![self.rho[1]],
                )?,
                g,
            },
        ])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    pub size: usize,
    /// 1-based local labels.
    #[serde(default)]
    pub intra_edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agents: Option<Vec<AgentSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emission: Option<EmissionSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SenseSpec {
    #[serde(rename = "le")]
    LessEqual,
    #[serde(rename = "eq")]
    Equal,
}

impl From<SenseSpec> for Sense {
    fn from(s: SenseSpec) -> Self {
        match s {
            SenseSpec::LessEqual => Sense::LessEqual,
            SenseSpec::Equal => Sense::Equal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSpec {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub sense: SenseSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualBoxSpec {
    #[serde(rename = "rho_Y", default = "default_radius")]
    pub rho_y: f64,
    #[serde(rename = "rho_J", default = "default_radius")]
    pub rho_j: f64,
}

fn default_radius() -> f64 {
    DualBoxes::DEFAULT_RADIUS
}

impl Default for DualBoxSpec {
    fn default() -> Self {
        Self {
            rho_y: DualBoxes::DEFAULT_RADIUS,
            rho_j: DualBoxes::DEFAULT_RADIUS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DelayModeSpec {
    #[default]
    Uniform,
    Constant,
    Table,
}

impl std::str::FromStr for DelayModeSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "constant" => Ok(Self::Constant),
            "table" => Ok(Self::Table),
            other => Err(Error::Validation(format!("unknown delay mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelaySpec {
    #[serde(default)]
    pub qmax: usize,
    #[serde(default)]
    pub mode: DelayModeSpec,
    /// `[sender, receiver, delay]` with 1-based relabeled agents.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<[usize; 3]>>,
}

impl Default for DelaySpec {
    fn default() -> Self {
        Self {
            qmax: 0,
            mode: DelayModeSpec::Uniform,
            table: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerAgent {
    Uniform(f64),
    List(Vec<f64>),
}

impl PerAgent {
    fn expand(&self, n: usize, key: &str) -> Result<Vec<f64>> {
        match self {
            PerAgent::Uniform(v) => Ok(vec![*v; n]),
            PerAgent::List(v) if v.len() == n => Ok(v.clone()),
            PerAgent::List(v) => Err(Error::schema(key, format!("expected {n} entries, found {}", v.len()))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepSpec {
    Keyword(String),
    Fixed(PerAgent),
}

impl Default for StepSpec {
    fn default() -> Self {
        StepSpec::Keyword("auto".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub patience: usize,
    #[serde(default = "default_pi")]
    pub pi: PerAgent,
    #[serde(default)]
    pub step: StepSpec,
    #[serde(default = "default_threads")]
    pub threads: usize,
    #[serde(default = "default_read_mode")]
    pub read_mode: ReadMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega0: Option<Vec<f64>>,
}

fn default_max_iters() -> usize {
    20_000
}

fn default_tol() -> f64 {
    1e-9
}

fn default_pi() -> PerAgent {
    PerAgent::Uniform(1.0)
}

fn default_threads() -> usize {
    1
}

fn default_read_mode() -> ReadMode {
    ReadMode::Exact
}

fn default_stride() -> usize {
    1
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            max_iters: default_max_iters(),
            tol: default_tol(),
            patience: 0,
            pi: default_pi(),
            step: StepSpec::default(),
            threads: 1,
            read_mode: ReadMode::Exact,
            alpha0: None,
            omega0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub dim: usize,
    #[serde(default)]
    pub objective: Objective,
    pub clusters: Vec<ClusterSpec>,
    /// 1-based relabeled agent indices.
    #[serde(default)]
    pub global_edges: Vec<[usize; 2]>,
    pub coupling: CouplingSpec,
    #[serde(default)]
    pub dual_boxes: DualBoxSpec,
    #[serde(default)]
    pub delay: DelaySpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default = "default_stride")]
    pub log_stride: usize,
    #[serde(default)]
    pub seed: u64,
}

fn json_error(e: serde_path_to_error::Error<serde_json::Error>) -> Error {
    let path = e.path().to_string();
    let inner = e.into_inner();
    let msg = inner.to_string();
    let missing = msg
        .strip_prefix("missing field `")
        .and_then(|rest| rest.split('`').next())
        .map(str::to_owned);
    let key = match (missing, path.as_str()) {
        (Some(field), "." | "") => field,
        (Some(field), p) => format!("{p}.{field}"),
        (None, p) => p.to_owned(),
    };
    Error::schema(key, msg)
}

fn check_len(key: &str, v: &[f64], dim: usize) -> Result<()> {
    if v.len() != dim {
        return Err(Error::schema(key, format!("expected {dim} entries, found {}", v.len())));
    }
    Ok(())
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(json_error)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Bundled scenario by name (`simA`, `simB`, `micro`).
    pub fn bundled(name: &str) -> Option<Result<Self>> {
        match name.trim_end_matches(".json") {
            "simA" => Some(Self::from_json(SIM_A)),
            "simB" => Some(Self::from_json(SIM_B)),
            "micro" => Some(Self::from_json(MICRO)),
            _ => None,
        }
    }

    /// Loads a file, falling back to a bundled scenario of the same stem.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if path.exists() {
            return Self::from_json(&std::fs::read_to_string(path)?);
        }
        let stem = path.file_name().and_then(|s| s.to_str()).unwrap_or_default();
        Self::bundled(stem).unwrap_or_else(|| {
            Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("scenario file {} not found", path.display()),
            )))
        })
    }

    pub fn num_agents(&self) -> usize {
        self.clusters.iter().map(|c| c.size).sum()
    }

    /// Full validation: builds the problem and delay schedule once.
    pub fn validate(&self) -> Result<()> {
        self.problem()?;
        self.schedule(None, None, None)?;
        self.solver_config(None)?;
        Ok(())
    }

    pub fn network(&self) -> Result<ClusterNetwork> {
        let sizes = self.clusters.iter().map(|c| c.size).collect();
        let intra = self
            .clusters
            .iter()
            .map(|c| c.intra_edges.iter().map(|e| (e[0], e[1])).collect())
            .collect();
        let global = self.global_edges.iter().map(|e| (e[0], e[1])).collect();
        ClusterNetwork::from_one_based(sizes, intra, global)
    }

    fn agent_problem(&self, key: &str, spec: &AgentSpec) -> Result<AgentProblem> {
        let dim = self.dim;
        let c = &spec.f.coeffs;
        check_len(&format!("{key}.f.coeffs.a"), &c.a, dim)?;
        check_len(&format!("{key}.f.coeffs.b"), &c.b, dim)?;
        let sign = match self.objective {
            Objective::Minimize => 1.0,
            Objective::Maximize => -1.0,
        };
        let flip = |v: &[f64]| v.iter().map(|x| sign * x).collect::<Vec<f64>>();
        let f = match spec.f.kind {
            SmoothKindSpec::Quadratic => {
                if c.p.is_some() || c.r.is_some() {
                    return Err(Error::schema(format!("{key}.f.coeffs"), "quadratic takes only a and b"));
                }
                SmoothCost::quadratic(flip(&c.a), flip(&c.b))
            }
            SmoothKindSpec::QuadraticPlusExp => {
                let p = c.p.as_ref().ok_or_else(|| Error::schema(format!("{key}.f.coeffs.p"), "missing"))?;
                let r = c.r.as_ref().ok_or_else(|| Error::schema(format!("{key}.f.coeffs.r"), "missing"))?;
                check_len(&format!("{key}.f.coeffs.p"), p, dim)?;
                check_len(&format!("{key}.f.coeffs.r"), r, dim)?;
                SmoothCost::quadratic_plus_exp(flip(&c.a), flip(&c.b), flip(p), r.clone())
            }
        }
        .map_err(|e| Error::schema(format!("{key}.f"), e.to_string()))?;
        let g = match (spec.g.kind, &spec.g.bounds) {
            (NonsmoothKindSpec::Zero, None) => NonsmoothCost::Zero,
            (NonsmoothKindSpec::Zero, Some(_)) => {
                return Err(Error::schema(format!("{key}.g.bounds"), "zero cost takes no bounds"))
            }
            (NonsmoothKindSpec::Box, None) => return Err(Error::schema(format!("{key}.g.bounds"), "missing")),
            (NonsmoothKindSpec::Box, Some(b)) => {
                check_len(&format!("{key}.g.bounds.lower"), &b.lower, dim)?;
                check_len(&format!("{key}.g.bounds.upper"), &b.upper, dim)?;
                NonsmoothCost::boxed(b.lower.clone(), b.upper.clone())?
            }
        };
        Ok(AgentProblem { f, g })
    }

    pub fn problem(&self) -> Result<Problem> {
        if self.dim == 0 {
            return Err(Error::schema("dim", "must be positive"));
        }
        if self.clusters.is_empty() {
            return Err(Error::schema("clusters", "at least one cluster is required"));
        }
        let network = self.network()?;
        let mut agents = Vec::with_capacity(self.num_agents());
        for (i, c) in self.clusters.iter().enumerate() {
            let key = format!("clusters[{i}]");
            let generated = match (&c.agents, &c.emission) {
                (Some(list), None) => list
                    .iter()
                    .enumerate()
                    .map(|(j, a)| self.agent_problem(&format!("{key}.agents[{j}]"), a))
                    .collect::<Result<Vec<_>>>()?,
                (None, Some(em)) => {
                    if self.dim != 1 {
                        return Err(Error::schema(format!("{key}.emission"), "requires dim = 1"));
                    }
                    if self.objective != Objective::Minimize {
                        return Err(Error::schema(format!("{key}.emission"), "requires objective = minimize"));
                    }
                    em.agents()?
                }
                _ => {
                    return Err(Error::schema(
                        key,
                        "exactly one of `agents` and `emission` must be given",
                    ))
                }
            };
            if generated.len() != c.size {
                return Err(Error::schema(
                    format!("{key}.size"),
                    format!("size {} but {} agents defined", c.size, generated.len()),
                ));
            }
            agents.extend(generated);
        }
        let rows = self.coupling.b.len();
        if rows == 0 {
            return Err(Error::schema("coupling.b", "must be non-empty"));
        }
        if self.coupling.a.len() != rows {
            return Err(Error::schema(
                "coupling.A",
                format!("{} rows but b has {rows}", self.coupling.a.len()),
            ));
        }
        let cols = self.clusters.len() * self.dim;
        for (r, row) in self.coupling.a.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::schema(
                    format!("coupling.A[{r}]"),
                    format!("expected {cols} columns, found {}", row.len()),
                ));
            }
        }
        let a = nalgebra::DMatrix::from_fn(rows, cols, |r, c| self.coupling.a[r][c]);
        let split = split_b(&self.coupling.b, &network, self.coupling.split.as_deref())
            .map_err(|e| Error::schema("coupling.split", e.to_string()))?;
        let sense: Sense = self.coupling.sense.into();
        let coupling = CouplingConstraint {
            a,
            b: self.coupling.b.clone(),
            sense,
            split,
        };
        let boxes = DualBoxes::new(self.dual_boxes.rho_y, self.dual_boxes.rho_j, sense)?;
        let problem = Problem::new(network, self.dim, agents, coupling, boxes)?;
        for i in 0..problem.network.num_clusters() {
            for k in 0..self.dim {
                let (lo, hi) = problem.cluster_bounds(i, k);
                if lo > hi {
                    return Err(Error::Validation(format!(
                        "cluster {} coordinate {k}: agent boxes do not intersect ([{lo}, {hi}])",
                        i + 1
                    )));
                }
            }
        }
        Ok(problem)
    }

    /// Delay schedule with optional command-line overrides.
    pub fn schedule(&self, seed: Option<u64>, qmax: Option<usize>, mode: Option<DelayModeSpec>) -> Result<DelaySchedule> {
        let q = qmax.unwrap_or(self.delay.qmax);
        let mode = match mode.unwrap_or(self.delay.mode) {
            DelayModeSpec::Uniform => DelayMode::Uniform,
            DelayModeSpec::Constant => DelayMode::Constant,
            DelayModeSpec::Table => {
                let entries = self
                    .delay
                    .table
                    .as_ref()
                    .ok_or_else(|| Error::schema("delay.table", "missing for table mode"))?;
                let n = self.num_agents();
                let mut table = HashMap::new();
                for (idx, &[u, v, delay]) in entries.iter().enumerate() {
                    if u == 0 || v == 0 || u > n || v > n {
                        return Err(Error::schema(
                            format!("delay.table[{idx}]"),
                            format!("agents must lie in 1..={n}"),
                        ));
                    }
                    table.insert((u - 1, v - 1), delay);
                }
                DelayMode::Table(table)
            }
        };
        DelaySchedule::new(q, mode, seed.unwrap_or(self.seed), self.num_agents())
    }

    pub fn solver_config(&self, max_iters: Option<usize>) -> Result<SolverConfig> {
        let n = self.num_agents();
        let s = &self.solver;
        let mut cfg = SolverConfig::new(n);
        cfg.max_iters = max_iters.unwrap_or(s.max_iters);
        cfg.tol = s.tol;
        cfg.patience = s.patience;
        cfg.pi = s.pi.expand(n, "solver.pi")?;
        if cfg.pi.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(Error::schema("solver.pi", "weights must be positive"));
        }
        cfg.step = match &s.step {
            StepSpec::Keyword(k) if k == "auto" => StepRule::Auto,
            StepSpec::Keyword(k) if k == "auto_per_agent" => StepRule::AutoPerAgent,
            StepSpec::Keyword(k) => return Err(Error::schema("solver.step", format!("unknown keyword '{k}'"))),
            StepSpec::Fixed(PerAgent::Uniform(c)) => StepRule::Uniform(*c),
            StepSpec::Fixed(p) => StepRule::PerAgent(p.expand(n, "solver.step")?),
        };
        if s.threads == 0 {
            return Err(Error::schema("solver.threads", "must be positive"));
        }
        cfg.threads = s.threads;
        cfg.read_mode = s.read_mode;
        cfg.alpha0 = s.alpha0.clone();
        cfg.omega0 = s.omega0.clone();
        if self.log_stride == 0 {
            return Err(Error::schema("log_stride", "must be positive"));
        }
        cfg.log_stride = self.log_stride;
        Ok(cfg)
    }
}
