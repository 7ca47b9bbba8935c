//! Scenario configuration: JSON schema, validation with named errors,
//! default materialization (everything echoed back, no hidden defaults),
//! seeded world construction, and the audited run entry point.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

use crate::dynamics::{
    formation_offsets_circle, leader_reference, AdversaryMode, AdversaryStrategy, AgentState,
    Role, SinusoidSignal, World,
};
use crate::engine::{AssertionKind, Mode, RunConfig, RunOutcome};
use crate::error::{Result, SimError};
use crate::graph::{
    build_layered_rdag, min_in_degree, validate_f_local, validate_in_degree, validate_rdag,
    AdversaryPlacement, Digraph, GraphFile, InDegreeRule, RdagPartition, ValidationReport,
};
use crate::resilience::ControlParams;

pub const LEADER_COLOCATION_TOL: f64 = 1e-9;

/// Derives an independent RNG for a named purpose from the master seed, so
/// adding a stream never perturbs existing ones.
pub fn stream_rng(master_seed: u64, name: &str) -> ChaCha12Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    ChaCha12Rng::seed_from_u64(splitmix64(master_seed ^ h))
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Where the run's graph comes from.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum GraphSource {
    /// Path to a graph JSON file, relative to the scenario file.
    File(String),
    /// Embedded graph file.
    Inline(GraphFile),
    /// Constructed layered graph.
    Layered { level_sizes: Vec<usize>, rule: LayeredRule },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum LayeredRule {
    FullPreviousLevel,
    /// Sample `k` in-neighbors from the union of preceding levels; the seed
    /// comes from the scenario's graph-sampling stream.
    SampleK(usize),
}

/// Adversary strategy as written in a scenario. Per-edge phases are drawn
/// from the strategy-phases stream when the strategy is materialized.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StrategySpec {
    ConstantDrift { velocity: Vec<f64> },
    Sinusoid { amplitude: Vec<f64>, frequency: Vec<f64>, phase: Vec<f64> },
    StealthyShadow { gain: f64 },
    PerEdgeByzantine { amplitude: Vec<f64>, frequency: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StrategyGroup {
    pub ids: Vec<usize>,
    pub strategy: StrategySpec,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AdversarySection {
    pub mode: AdversaryMode,
    /// Adversary ids; may be omitted when the graph file already carries them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ids: Option<Vec<usize>>,
    #[serde(default)]
    pub strategies: Vec<StrategyGroup>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum FormationSpec {
    /// Zero offsets: formation coincides with rendezvous in tau.
    None,
    Circle { radius: f64, center: [f64; 2] },
    Explicit { offsets: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FollowerInit {
    /// Independent uniform samples per axis, drawn from the init stream in
    /// agent-id order.
    UniformBox { low: Vec<f64>, high: Vec<f64> },
    Fixed { tau: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GenerateAgents {
    pub formation: FormationSpec,
    /// Common initial tau of every level-0 agent (adversarial ones included).
    pub leader_tau: Vec<f64>,
    pub follower_tau: FollowerInit,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExplicitAgent {
    pub id: usize,
    pub level: usize,
    pub role: Role,
    pub p0: Vec<f64>,
    pub xi: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<StrategySpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum AgentsSection {
    Generate(GenerateAgents),
    Explicit(Vec<ExplicitAgent>),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub enum StopRule {
    #[serde(rename = "t_final")]
    TFinal(f64),
    #[serde(rename = "max_steps")]
    MaxSteps(u64),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceRule {
    /// Error threshold for convergence detection.
    pub delta: f64,
    /// Trailing window length in steps.
    pub window: u64,
    /// Stop early once every normal agent holds the window.
    pub stop_on_convergence: bool,
}

impl Default for ConvergenceRule {
    fn default() -> Self {
        Self { delta: 1e-3, window: 50, stop_on_convergence: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum AssertionSelection {
    Keyword(String),
    List(Vec<String>),
}

impl Default for AssertionSelection {
    fn default() -> Self {
        AssertionSelection::Keyword("all".into())
    }
}

impl AssertionSelection {
    pub fn resolve(&self) -> Result<Vec<AssertionKind>> {
        match self {
            AssertionSelection::Keyword(word) => match word.as_str() {
                "all" => Ok(AssertionKind::ALL.to_vec()),
                "none" => Ok(Vec::new()),
                other => Err(SimError::Config(format!(
                    "assertions must be \"all\", \"none\", or a list of names (got \"{other}\")"
                ))),
            },
            AssertionSelection::List(names) => {
                names.iter().map(|n| AssertionKind::parse(n)).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Default output directory; `SIM_OUT_DIR` or a CLI flag overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// Keep every n-th trace row when writing CSV.
    #[serde(default = "default_thin")]
    pub thin: u64,
}

fn default_thin() -> u64 {
    1
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: None, thin: 1 }
    }
}

/// A fully validated scenario with all defaults materialized; serializing it
/// echoes the effective configuration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub mode: Mode,
    pub seed: u64,
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub graph: GraphSource,
    pub adversaries: AdversarySection,
    pub agents: AgentsSection,
    pub params: ScenarioParams,
    pub stop: StopRule,
    #[serde(default)]
    pub convergence: ConvergenceRule,
    #[serde(default)]
    pub assertions: AssertionSelection,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_dim() -> usize {
    2
}

/// Control parameters as written in a scenario; tolerances are optional and
/// materialize to their declared defaults.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioParams {
    pub alpha: f64,
    pub u_m: f64,
    pub f: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_eps_omega")]
    pub eps_omega: f64,
    #[serde(default = "default_eps_sing")]
    pub eps_sing: f64,
}

fn default_eps_omega() -> f64 {
    ControlParams::DEFAULT_EPS_OMEGA
}

fn default_eps_sing() -> f64 {
    ControlParams::DEFAULT_EPS_SING
}

impl ScenarioParams {
    pub fn to_control_params(&self) -> ControlParams {
        ControlParams {
            alpha: self.alpha,
            u_m: self.u_m,
            f: self.f,
            eps_d: self.eps_d,
            dt: self.dt,
            eps_omega: self.eps_omega,
            eps_sing: self.eps_sing,
        }
    }
}

/// Everything needed to execute a run.
pub struct BuiltScenario {
    pub graph: Digraph,
    pub partition: RdagPartition,
    pub placement: AdversaryPlacement,
    pub world: World,
    pub config: RunConfig,
    pub thin: u64,
}

/// Outcome of the three precondition audits.
#[derive(Debug, Clone, Serialize)]
pub struct AuditOutcome {
    pub rdag: ValidationReport,
    pub f_local: ValidationReport,
    pub in_degree: ValidationReport,
    pub min_follower_in_degree: Option<usize>,
}

impl AuditOutcome {
    pub fn all_ok(&self) -> bool {
        self.rdag.ok && self.f_local.ok && self.in_degree.ok
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let scenario: Scenario = serde_json::from_str(text)
            .map_err(|e| SimError::Parse(format!("scenario: {e}")))?;
        Ok(scenario)
    }

    /// Loads, validates, and materializes a scenario file. Relative graph
    /// file references are resolved against the scenario's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut scenario = Self::from_json(&text)?;
        let base = path.parent().map(|p| p.to_path_buf()).unwrap_or_default();
        if let GraphSource::File(rel) = &scenario.graph {
            // Inline the referenced graph so the echoed config is self-contained.
            let graph_text = std::fs::read_to_string(base.join(rel))?;
            scenario.graph = GraphSource::Inline(GraphFile::from_json(&graph_text)?);
        }
        scenario.validate()?;
        Ok(scenario)
    }

    /// Effective configuration echo; loading it back reproduces the run.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialization cannot fail")
    }

    /// Structural and semantic validation with errors naming the field.
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(SimError::Config("dim: must be at least 1".into()));
        }
        let continuous = self.mode == Mode::Continuous;
        self.params.to_control_params().validate(continuous)?;
        match (self.mode, self.stop) {
            (Mode::Continuous, StopRule::TFinal(t)) => {
                if !(t > 0.0) {
                    return Err(SimError::Config("stop.t_final: must be positive".into()));
                }
            }
            (Mode::Discrete, StopRule::MaxSteps(steps)) => {
                if steps == 0 {
                    return Err(SimError::Config("stop.max_steps: must be positive".into()));
                }
            }
            (Mode::Continuous, StopRule::MaxSteps(_)) => {
                return Err(SimError::Config(
                    "stop: continuous mode takes t_final, not max_steps".into(),
                ));
            }
            (Mode::Discrete, StopRule::TFinal(_)) => {
                return Err(SimError::Config(
                    "stop: discrete mode takes max_steps, not t_final".into(),
                ));
            }
        }
        if !(self.convergence.delta > 0.0) {
            return Err(SimError::Config("convergence.delta: must be positive".into()));
        }
        if self.output.thin == 0 {
            return Err(SimError::Config("output.thin: must be at least 1".into()));
        }
        self.assertions.resolve()?;
        // Building exercises every remaining check (graph structure, roles,
        // strategies, initial conditions).
        self.build()?;
        Ok(())
    }

    fn build_graph(&self) -> Result<(Digraph, RdagPartition, Vec<usize>)> {
        match &self.graph {
            GraphSource::File(path) => Err(SimError::Config(format!(
                "graph.file: unresolved reference {path}; load scenarios via Scenario::load"
            ))),
            GraphSource::Inline(file) => {
                if file.f != self.params.f {
                    return Err(SimError::Config(format!(
                        "params.f = {} disagrees with graph file F = {}",
                        self.params.f, file.f
                    )));
                }
                let (graph, partition, placement) = file.clone().into_parts()?;
                let mut ids = placement.adversaries().to_vec();
                if let Some(listed) = &self.adversaries.ids {
                    let mut listed = listed.clone();
                    listed.sort_unstable();
                    listed.dedup();
                    if !ids.is_empty() && listed != ids {
                        return Err(SimError::Config(
                            "adversaries.ids disagrees with the graph file's adversary list"
                                .into(),
                        ));
                    }
                    ids = listed;
                }
                Ok((graph, partition, ids))
            }
            GraphSource::Layered { level_sizes, rule } => {
                let rule = match rule {
                    LayeredRule::FullPreviousLevel => InDegreeRule::FullPreviousLevel,
                    LayeredRule::SampleK(k) => InDegreeRule::SampleFromPredecessors {
                        k: *k,
                        seed: stream_rng(self.seed, "graph").random(),
                    },
                };
                let (graph, partition) = build_layered_rdag(level_sizes, &rule)?;
                let ids = self.adversaries.ids.clone().unwrap_or_default();
                Ok((graph, partition, ids))
            }
        }
    }

    /// Maps each adversary id to its strategy spec, requiring exactly one per
    /// adversary.
    fn strategy_specs(
        &self,
        adversary_ids: &[usize],
        explicit: Option<&[ExplicitAgent]>,
    ) -> Result<BTreeMap<usize, StrategySpec>> {
        let mut map: BTreeMap<usize, StrategySpec> = BTreeMap::new();
        for group in &self.adversaries.strategies {
            for &id in &group.ids {
                if map.insert(id, group.strategy.clone()).is_some() {
                    return Err(SimError::Config(format!(
                        "adversaries.strategies: agent {id} is assigned more than one strategy"
                    )));
                }
            }
        }
        if let Some(agents) = explicit {
            for a in agents {
                if let Some(spec) = &a.strategy {
                    if map.insert(a.id, spec.clone()).is_some() {
                        return Err(SimError::Config(format!(
                            "agent {}: strategy given both inline and in adversaries.strategies",
                            a.id
                        )));
                    }
                }
            }
        }
        for &id in map.keys() {
            if adversary_ids.binary_search(&id).is_err() {
                return Err(SimError::Config(format!(
                    "strategy assigned to non-adversary agent {id}"
                )));
            }
        }
        for &id in adversary_ids {
            if !map.contains_key(&id) {
                return Err(SimError::Config(format!(
                    "adversary {id} has no strategy assigned"
                )));
            }
        }
        Ok(map)
    }

    fn materialize_strategy(
        &self,
        spec: &StrategySpec,
        adversary_id: usize,
        graph: &Digraph,
        phase_rng: &mut ChaCha12Rng,
    ) -> Result<AdversaryStrategy> {
        let strategy = match spec {
            StrategySpec::ConstantDrift { velocity } => {
                AdversaryStrategy::ConstantDrift { velocity: velocity.clone() }
            }
            StrategySpec::Sinusoid { amplitude, frequency, phase } => {
                AdversaryStrategy::Sinusoid(SinusoidSignal {
                    amplitude: amplitude.clone(),
                    frequency: frequency.clone(),
                    phase: phase.clone(),
                })
            }
            StrategySpec::StealthyShadow { gain } => {
                AdversaryStrategy::StealthyShadow { gain: *gain }
            }
            StrategySpec::PerEdgeByzantine { amplitude, frequency } => {
                if self.adversaries.mode == AdversaryMode::Physical {
                    return Err(SimError::Config(format!(
                        "adversary {adversary_id}: per_edge_byzantine requires communication \
                         mode (one body cannot present different positions)"
                    )));
                }
                let mut signals = BTreeMap::new();
                for receiver in graph.out_neighbors(adversary_id) {
                    let phase: Vec<f64> = (0..self.dim)
                        .map(|_| phase_rng.random_range(0.0..std::f64::consts::TAU))
                        .collect();
                    signals.insert(
                        receiver,
                        SinusoidSignal {
                            amplitude: amplitude.clone(),
                            frequency: frequency.clone(),
                            phase,
                        },
                    );
                }
                AdversaryStrategy::PerEdgeByzantine { signals }
            }
        };
        strategy.validate(self.dim)?;
        Ok(strategy)
    }

    /// Builds the world and run configuration. Deterministic given the seed.
    pub fn build(&self) -> Result<BuiltScenario> {
        let (graph, partition, adversary_ids) = self.build_graph()?;
        let n = graph.n();
        let placement = AdversaryPlacement::new(adversary_ids, self.params.f);
        for &id in placement.adversaries() {
            if id >= n {
                return Err(SimError::Config(format!(
                    "adversaries.ids: agent {id} out of range (n = {n})"
                )));
            }
        }
        let level_of = partition.level_of(n)?;

        let role_of = |id: usize| -> Role {
            if placement.is_adversary(id) {
                Role::Adversary
            } else if level_of[id] == 0 {
                Role::Leader
            } else {
                Role::Normal
            }
        };

        let explicit = match &self.agents {
            AgentsSection::Explicit(list) => Some(list.as_slice()),
            AgentsSection::Generate(_) => None,
        };
        let specs = self.strategy_specs(placement.adversaries(), explicit)?;
        let mut phase_rng = stream_rng(self.seed, "strategy");
        let mut strategies: BTreeMap<usize, AdversaryStrategy> = BTreeMap::new();
        for (&id, spec) in &specs {
            strategies.insert(id, self.materialize_strategy(spec, id, &graph, &mut phase_rng)?);
        }

        let agents = match &self.agents {
            AgentsSection::Generate(generate) => self.generate_agents(
                generate,
                n,
                &level_of,
                &role_of,
                &mut strategies,
            )?,
            AgentsSection::Explicit(list) => {
                self.explicit_agents(list, n, &level_of, &role_of, &mut strategies)?
            }
        };

        let tau_reference = if agents.iter().any(|a| a.role == Role::Leader) {
            leader_reference(&agents, LEADER_COLOCATION_TOL)?
        } else if n == 0 {
            DVector::zeros(self.dim)
        } else {
            return Err(SimError::Config(
                "no behaving leader: every level-0 agent is adversarial".into(),
            ));
        };

        let world = World {
            dim: self.dim,
            graph: graph.clone(),
            partition: partition.clone(),
            placement: placement.clone(),
            agents,
            adversary_mode: self.adversaries.mode,
            tau_reference,
        };

        let params = self.params.to_control_params();
        let max_steps = match self.stop {
            StopRule::TFinal(t_final) => {
                let dt = params.dt.ok_or_else(|| {
                    SimError::Config("params.dt: required in continuous mode".into())
                })?;
                (t_final / dt).round() as u64
            }
            StopRule::MaxSteps(steps) => steps,
        };
        let config = RunConfig {
            mode: self.mode,
            params,
            max_steps,
            delta_conv: self.convergence.delta,
            window: self.convergence.window,
            stop_on_convergence: self.convergence.stop_on_convergence,
            assertions: self.assertions.resolve()?,
        };

        Ok(BuiltScenario { graph, partition, placement, world, config, thin: self.output.thin })
    }

    fn generate_agents(
        &self,
        generate: &GenerateAgents,
        n: usize,
        level_of: &[usize],
        role_of: &dyn Fn(usize) -> Role,
        strategies: &mut BTreeMap<usize, AdversaryStrategy>,
    ) -> Result<Vec<AgentState>> {
        if generate.leader_tau.len() != self.dim {
            return Err(SimError::Config(format!(
                "agents.generate.leader_tau: expected {} components",
                self.dim
            )));
        }
        let offsets: Vec<DVector<f64>> = match &generate.formation {
            FormationSpec::None => vec![DVector::zeros(self.dim); n],
            FormationSpec::Circle { radius, center } => {
                if self.dim != 2 {
                    return Err(SimError::Config(
                        "agents.generate.formation.circle: requires dim = 2".into(),
                    ));
                }
                formation_offsets_circle(n, *radius, *center)?
            }
            FormationSpec::Explicit { offsets } => {
                if offsets.len() != n {
                    return Err(SimError::Config(format!(
                        "agents.generate.formation.explicit: expected {n} offsets, got {}",
                        offsets.len()
                    )));
                }
                offsets
                    .iter()
                    .map(|o| {
                        if o.len() != self.dim {
                            Err(SimError::Config(
                                "agents.generate.formation.explicit: offset dimension mismatch"
                                    .into(),
                            ))
                        } else {
                            Ok(DVector::from_column_slice(o))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };

        let mut init_rng = stream_rng(self.seed, "init");
        let leader_tau = DVector::from_column_slice(&generate.leader_tau);
        let mut agents = Vec::with_capacity(n);
        for id in 0..n {
            let tau = if level_of[id] == 0 {
                leader_tau.clone()
            } else {
                match &generate.follower_tau {
                    FollowerInit::Fixed { tau } => {
                        if tau.len() != self.dim {
                            return Err(SimError::Config(
                                "agents.generate.follower_tau.tau: dimension mismatch".into(),
                            ));
                        }
                        DVector::from_column_slice(tau)
                    }
                    FollowerInit::UniformBox { low, high } => {
                        if low.len() != self.dim || high.len() != self.dim {
                            return Err(SimError::Config(
                                "agents.generate.follower_tau: box dimension mismatch".into(),
                            ));
                        }
                        if low.iter().zip(high).any(|(lo, hi)| lo > hi) {
                            return Err(SimError::Config(
                                "agents.generate.follower_tau: low exceeds high".into(),
                            ));
                        }
                        DVector::from_iterator(
                            self.dim,
                            low.iter()
                                .zip(high)
                                .map(|(&lo, &hi)| init_rng.random_range(lo..=hi)),
                        )
                    }
                }
            };
            let role = role_of(id);
            agents.push(AgentState {
                id,
                level: level_of[id],
                role,
                initial_tau: tau.clone(),
                tau,
                xi: offsets[id].clone(),
                strategy: if role == Role::Adversary { strategies.remove(&id) } else { None },
            });
        }
        Ok(agents)
    }

    fn explicit_agents(
        &self,
        list: &[ExplicitAgent],
        n: usize,
        level_of: &[usize],
        role_of: &dyn Fn(usize) -> Role,
        strategies: &mut BTreeMap<usize, AdversaryStrategy>,
    ) -> Result<Vec<AgentState>> {
        if list.len() != n {
            return Err(SimError::Config(format!(
                "agents.explicit: expected {n} entries, got {}",
                list.len()
            )));
        }
        let mut by_id: BTreeMap<usize, &ExplicitAgent> = BTreeMap::new();
        for a in list {
            if a.id >= n {
                return Err(SimError::Config(format!(
                    "agents.explicit: id {} out of range (n = {n})",
                    a.id
                )));
            }
            if by_id.insert(a.id, a).is_some() {
                return Err(SimError::Config(format!("agents.explicit: duplicate id {}", a.id)));
            }
        }
        let mut agents = Vec::with_capacity(n);
        for id in 0..n {
            let entry = by_id[&id];
            if entry.level != level_of[id] {
                return Err(SimError::Config(format!(
                    "agents.explicit: agent {id} declares level {}, partition says {}",
                    entry.level, level_of[id]
                )));
            }
            let derived = role_of(id);
            if entry.role != derived {
                return Err(SimError::Config(format!(
                    "agents.explicit: agent {id} declares role {}, placement implies {}",
                    entry.role.as_str(),
                    derived.as_str()
                )));
            }
            if entry.p0.len() != self.dim || entry.xi.len() != self.dim {
                return Err(SimError::Config(format!(
                    "agents.explicit: agent {id} p0/xi must have {} components",
                    self.dim
                )));
            }
            let p0 = DVector::from_column_slice(&entry.p0);
            let xi = DVector::from_column_slice(&entry.xi);
            let tau = &p0 - &xi;
            agents.push(AgentState {
                id,
                level: level_of[id],
                role: derived,
                initial_tau: tau.clone(),
                tau,
                xi,
                strategy: if derived == Role::Adversary { strategies.remove(&id) } else { None },
            });
        }
        Ok(agents)
    }

    /// The three precondition audits: RDAG clauses, F-locality, and the
    /// in-degree hypothesis `|V_i| >= 3F+1` over non-leader vertices.
    pub fn audit(&self, built: &BuiltScenario) -> Result<AuditOutcome> {
        audit_parts(&built.graph, &built.partition, &built.placement)
    }
}

/// Runs the three precondition audits on bare graph parts (the in-degree
/// requirement is `3F+1` with `F` taken from the placement).
pub fn audit_parts(
    graph: &Digraph,
    partition: &RdagPartition,
    placement: &AdversaryPlacement,
) -> Result<AuditOutcome> {
    let rdag = validate_rdag(graph, partition)?;
    let f_local = validate_f_local(graph, placement)?;
    let followers: Vec<usize> =
        partition.levels().iter().skip(1).flatten().copied().collect();
    let required = 3 * placement.f() + 1;
    let in_degree = if followers.is_empty() {
        ValidationReport { ok: true, violations: vec![] }
    } else {
        validate_in_degree(graph, &followers, required)?
    };
    let min_follower_in_degree = if followers.is_empty() {
        None
    } else {
        Some(min_in_degree(graph, &followers)?)
    };
    Ok(AuditOutcome { rdag, f_local, in_degree, min_follower_in_degree })
}

/// Builds, audits, and runs a scenario. `force` skips the audits.
pub fn run_scenario(scenario: &Scenario, force: bool) -> Result<RunOutcome> {
    let built = scenario.build()?;
    if !force {
        let audit = scenario.audit(&built)?;
        if !audit.rdag.ok {
            return Err(SimError::Audit(format!(
                "rdag: {}",
                summarize_violations(&audit.rdag)
            )));
        }
        if !audit.f_local.ok {
            return Err(SimError::Audit(format!(
                "f-local: {}",
                summarize_violations(&audit.f_local)
            )));
        }
        if !audit.in_degree.ok {
            return Err(SimError::Audit(format!(
                "in-degree (3F+1): {}",
                summarize_violations(&audit.in_degree)
            )));
        }
    }
    crate::engine::run(built.world, &built.config)
}

fn summarize_violations(report: &ValidationReport) -> String {
    let shown: Vec<String> = report.violations.iter().take(3).map(|v| v.to_string()).collect();
    let suffix = if report.violations.len() > 3 {
        format!(" (+{} more)", report.violations.len() - 3)
    } else {
        String::new()
    };
    format!("{}{}", shown.join("; "), suffix)
}
