//! Deployment scenarios, endpoint profiles and failure configuration, plus
//! the JSON config document that ties them to a graph.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    builtin_socialnetwork_graph, parse_dependencies, svc, DependencyGraph, DependencyRecord, ServiceName,
    SOCIAL_NETWORK_ENTRY,
};

pub const DEFAULT_P_FAIL: f64 = 0.30;
pub const DEFAULT_SAMPLES: u64 = 4_500_000;
pub const DEFAULT_ROUNDS: u32 = 16;
pub const DEFAULT_SEED: u64 = 42;

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Services run with three replicas in the replicated Social Network deployment.
pub const REPLICATED_SERVICES: [&str; 5] = [
    "compose-post-service",
    "home-timeline-service",
    "user-timeline-service",
    "text-service",
    "media-service",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeploymentScenario {
    replicas: BTreeMap<ServiceName, u32>,
    entry: ServiceName,
    protected: BTreeSet<ServiceName>,
}

impl DeploymentScenario {
    /// Every graph node gets one replica unless `replicas` says otherwise.
    pub fn new(
        graph: &DependencyGraph,
        entry: ServiceName,
        replicas: &BTreeMap<ServiceName, u32>,
    ) -> Result<Self> {
        if !graph.contains(entry.as_str()) {
            return Err(Error::config("entry", format!("{entry} is not in the graph")));
        }
        let mut all: BTreeMap<ServiceName, u32> = graph.nodes().iter().map(|n| (n.clone(), 1)).collect();
        for (name, &n) in replicas {
            let field = format!("replicas.{name}");
            if n == 0 {
                return Err(Error::config(field, "replica count must be at least 1"));
            }
            match all.get_mut(name) {
                Some(slot) => *slot = n,
                None => return Err(Error::config(field, format!("{name} is not in the graph"))),
            }
        }
        Ok(DeploymentScenario {
            replicas: all,
            entry,
            protected: BTreeSet::new(),
        })
    }

    /// Removes `services` from the killable fleet (e.g. a gateway kept alive).
    pub fn with_protected(mut self, services: impl IntoIterator<Item = ServiceName>) -> Result<Self> {
        for s in services {
            if !self.replicas.contains_key(&s) {
                return Err(Error::config(
                    format!("exclude.{s}"),
                    format!("{s} is not in the graph"),
                ));
            }
            self.protected.insert(s);
        }
        Ok(self)
    }

    pub fn entry(&self) -> &ServiceName {
        &self.entry
    }

    pub fn replicas(&self) -> &BTreeMap<ServiceName, u32> {
        &self.replicas
    }

    pub fn replica_count(&self, service: &str) -> Option<u32> {
        self.replicas.get(service).copied()
    }

    pub fn protected(&self) -> &BTreeSet<ServiceName> {
        &self.protected
    }

    /// Containers that failure sampling may pick.
    pub fn killable_fleet(&self) -> Vec<ContainerInstance> {
        container_fleet(self)
            .into_iter()
            .filter(|c| !self.protected.contains(&c.service))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ContainerInstance {
    pub service: ServiceName,
    pub replica_index: u32,
}

/// All containers, services by ascending name, replicas ascending within.
pub fn container_fleet(scenario: &DeploymentScenario) -> Vec<ContainerInstance> {
    scenario
        .replicas
        .iter()
        .flat_map(|(s, &n)| {
            (0..n).map(move |replica_index| ContainerInstance {
                service: s.clone(),
                replica_index,
            })
        })
        .collect()
}

/// `round_half_even(p_fail * fleet_size)`, clamped to the fleet.
pub fn kill_count(fleet_size: usize, p_fail: f64) -> usize {
    let k = (p_fail * fleet_size as f64).round_ties_even();
    if k.is_nan() || k <= 0.0 {
        0
    } else {
        (k as usize).min(fleet_size)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalTarget {
    pub service: ServiceName,
    #[serde(rename = "p")]
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointProfile {
    pub name: String,
    pub base_targets: BTreeSet<ServiceName>,
    pub conditional_targets: Vec<ConditionalTarget>,
    pub weight: f64,
}

impl EndpointProfile {
    pub fn new(name: &str, targets: &[&str], weight: f64) -> Self {
        EndpointProfile {
            name: name.to_string(),
            base_targets: targets.iter().map(|t| svc(t)).collect(),
            conditional_targets: Vec::new(),
            weight,
        }
    }

    pub fn with_conditional(mut self, service: &str, probability: f64) -> Self {
        self.conditional_targets.push(ConditionalTarget {
            service: svc(service),
            probability,
        });
        self
    }
}

/// The three Social Network endpoints with their workload weights.
pub fn builtin_profiles() -> Vec<EndpointProfile> {
    vec![
        EndpointProfile::new(
            "home-timeline",
            &[
                "home-timeline-service",
                "post-storage-service",
                "social-graph-service",
            ],
            0.6,
        ),
        EndpointProfile::new(
            "user-timeline",
            &["user-timeline-service", "post-storage-service"],
            0.3,
        ),
        EndpointProfile::new(
            "compose-post",
            &[
                "compose-post-service",
                "user-service",
                "unique-id-service",
                "post-storage-service",
                "user-timeline-service",
                "home-timeline-service",
                "text-service",
                "social-graph-service",
            ],
            0.1,
        )
        .with_conditional("media-service", 4.0 / 5.0)
        .with_conditional("url-shorten-service", 5.0 / 6.0)
        .with_conditional("user-mention-service", 5.0 / 6.0),
    ]
}

pub fn validate_profiles(graph: &DependencyGraph, profiles: &[EndpointProfile]) -> Result<()> {
    if profiles.is_empty() {
        return Err(Error::config("endpoints", "at least one endpoint is required"));
    }
    let mut names = BTreeSet::new();
    let mut sum = 0.0;
    for (i, p) in profiles.iter().enumerate() {
        let at = |f: &str| format!("endpoints[{i}].{f}");
        if p.name.trim().is_empty() {
            return Err(Error::config(at("name"), "endpoint name must not be empty"));
        }
        if !names.insert(p.name.as_str()) {
            return Err(Error::config(
                at("name"),
                format!("duplicate endpoint {}", p.name),
            ));
        }
        if !(0.0..=1.0).contains(&p.weight) {
            return Err(Error::config(
                at("weight"),
                format!("{} is outside [0, 1]", p.weight),
            ));
        }
        sum += p.weight;
        for t in &p.base_targets {
            if !graph.contains(t.as_str()) {
                return Err(Error::config(at("targets"), format!("{t} is not in the graph")));
            }
        }
        for (j, c) in p.conditional_targets.iter().enumerate() {
            let field = at(&format!("conditional[{j}]"));
            if !graph.contains(c.service.as_str()) {
                return Err(Error::config(field, format!("{} is not in the graph", c.service)));
            }
            if !(0.0..=1.0).contains(&c.probability) {
                return Err(Error::config(
                    field,
                    format!("probability {} is outside [0, 1]", c.probability),
                ));
            }
        }
    }
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::config(
            "endpoints",
            format!("weights sum to {sum}, expected 1"),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FailureConfig {
    pub p_fail: f64,
    pub samples_per_round: u64,
    pub rounds: u32,
    pub master_seed: u64,
}

impl Default for FailureConfig {
    fn default() -> Self {
        FailureConfig {
            p_fail: DEFAULT_P_FAIL,
            samples_per_round: DEFAULT_SAMPLES,
            rounds: DEFAULT_ROUNDS,
            master_seed: DEFAULT_SEED,
        }
    }
}

impl FailureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_fail) {
            return Err(Error::config(
                "failure.p_fail",
                format!("{} is outside [0, 1]", self.p_fail),
            ));
        }
        if self.samples_per_round == 0 {
            return Err(Error::config("failure.samples", "must be at least 1"));
        }
        if self.rounds == 0 {
            return Err(Error::config("failure.rounds", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BuiltinScenario {
    /// Every service runs a single container.
    Norepl,
    /// Five stateless services run three containers each.
    Repl,
}

impl BuiltinScenario {
    pub fn replicas(self) -> BTreeMap<ServiceName, u32> {
        match self {
            BuiltinScenario::Norepl => BTreeMap::new(),
            BuiltinScenario::Repl => REPLICATED_SERVICES.iter().map(|s| (svc(s), 3)).collect(),
        }
    }
}

/// Where the graph comes from: `"builtin"`, a file path, or inline records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GraphSource {
    Named(String),
    Inline(Vec<DependencyRecord>),
}

impl Default for GraphSource {
    fn default() -> Self {
        GraphSource::Named("builtin".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub name: String,
    pub targets: Vec<ServiceName>,
    #[serde(default)]
    pub conditional: Vec<ConditionalTarget>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FailureSection {
    pub p_fail: f64,
    pub samples: u64,
    pub rounds: u32,
    pub seed: u64,
}

impl Default for FailureSection {
    fn default() -> Self {
        let d = FailureConfig::default();
        FailureSection {
            p_fail: d.p_fail,
            samples: d.samples_per_round,
            rounds: d.rounds,
            seed: d.master_seed,
        }
    }
}

/// The on-disk config document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub graph: GraphSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry: Option<ServiceName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<BuiltinScenario>,
    #[serde(default)]
    pub replicas: BTreeMap<ServiceName, u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exclude: Vec<ServiceName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoints: Option<Vec<EndpointConfig>>,
    #[serde(default)]
    pub failure: FailureSection,
}

impl ScenarioConfig {
    pub fn builtin(which: BuiltinScenario) -> Self {
        ScenarioConfig {
            graph: GraphSource::default(),
            entry: None,
            scenario: Some(which),
            replicas: BTreeMap::new(),
            exclude: Vec::new(),
            endpoints: None,
            failure: FailureSection::default(),
        }
    }

    pub fn from_json(document: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(document);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(
                if path == "." { "document".into() } else { path },
                e.inner().to_string(),
            )
        })
    }

    /// Validates the document and builds the model. Relative graph paths are
    /// resolved against `base_dir`.
    pub fn resolve(&self, base_dir: Option<&Path>) -> Result<LoadedScenario> {
        let graph = match &self.graph {
            GraphSource::Named(s) if s == "builtin" => builtin_socialnetwork_graph(),
            GraphSource::Named(path) => {
                let mut p = PathBuf::from(path);
                if p.is_relative() {
                    if let Some(base) = base_dir {
                        p = base.join(p);
                    }
                }
                let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                parse_dependencies(&text).map_err(|e| Error::config("graph", e.to_string()))?
            }
            GraphSource::Inline(records) => {
                let doc = serde_json::to_string(records)?;
                parse_dependencies(&doc).map_err(|e| Error::config("graph", e.to_string()))?
            }
        };
        let entry = match (&self.entry, &self.graph) {
            (Some(e), _) => e.clone(),
            (None, GraphSource::Named(s)) if s == "builtin" => svc(SOCIAL_NETWORK_ENTRY),
            (None, _) => return Err(Error::config("entry", "required for a non-builtin graph")),
        };
        let mut replicas = self.scenario.map(BuiltinScenario::replicas).unwrap_or_default();
        replicas.extend(self.replicas.iter().map(|(k, &v)| (k.clone(), v)));
        let scenario = DeploymentScenario::new(&graph, entry, &replicas)?
            .with_protected(self.exclude.iter().cloned())?;

        let profiles = match &self.endpoints {
            None => builtin_profiles(),
            Some(eps) => eps
                .iter()
                .map(|e| EndpointProfile {
                    name: e.name.clone(),
                    base_targets: e.targets.iter().cloned().collect(),
                    conditional_targets: e.conditional.clone(),
                    weight: e.weight,
                })
                .collect(),
        };
        validate_profiles(&graph, &profiles)?;

        let failure = FailureConfig {
            p_fail: self.failure.p_fail,
            samples_per_round: self.failure.samples,
            rounds: self.failure.rounds,
            master_seed: self.failure.seed,
        };
        failure.validate()?;

        Ok(LoadedScenario {
            graph,
            scenario,
            profiles,
            failure,
        })
    }
}

/// A validated (graph, scenario, profiles, failure) bundle.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub graph: DependencyGraph,
    pub scenario: DeploymentScenario,
    pub profiles: Vec<EndpointProfile>,
    pub failure: FailureConfig,
}

impl LoadedScenario {
    pub fn builtin(which: BuiltinScenario) -> Self {
        ScenarioConfig::builtin(which)
            .resolve(None)
            .expect("built-in scenario is valid")
    }

    /// A fully expanded config that reproduces this model without any
    /// external file.
    pub fn to_config(&self) -> ScenarioConfig {
        let builtin = builtin_socialnetwork_graph();
        let graph = if self.graph == builtin {
            GraphSource::default()
        } else {
            GraphSource::Inline(self.graph.to_records())
        };
        ScenarioConfig {
            graph,
            entry: Some(self.scenario.entry().clone()),
            scenario: None,
            replicas: self.scenario.replicas().clone(),
            exclude: self.scenario.protected().iter().cloned().collect(),
            endpoints: Some(
                self.profiles
                    .iter()
                    .map(|p| EndpointConfig {
                        name: p.name.clone(),
                        targets: p.base_targets.iter().cloned().collect(),
                        conditional: p.conditional_targets.clone(),
                        weight: p.weight,
                    })
                    .collect(),
            ),
            failure: FailureSection {
                p_fail: self.failure.p_fail,
                samples: self.failure.samples_per_round,
                rounds: self.failure.rounds,
                seed: self.failure.master_seed,
            },
        }
    }
}

/// Parses and validates a config document.
pub fn load_scenario(document: &str, base_dir: Option<&Path>) -> Result<LoadedScenario> {
    ScenarioConfig::from_json(document)?.resolve(base_dir)
}
