//! Monte-Carlo resilience estimation.
//!
//! Each sample kills exactly K containers drawn uniformly without replacement
//! from the killable fleet. A service is alive while at least one of its
//! replicas survives. An endpoint succeeds when the entry is alive and every
//! required target (base plus conditionally drawn ones) is reachable from the
//! entry through alive services. `R_model` is the weight-averaged endpoint
//! availability.

use std::collections::BTreeSet;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DependencyGraph, ServiceName};
use crate::rng::{round_key, stream_from_key};
use crate::scenario::{kill_count, ContainerInstance, DeploymentScenario, EndpointProfile, FailureConfig};

/// Samples per parallel work unit. Counts are integers, so the chunking
/// never influences results.
const CHUNK: u64 = 1 << 14;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FailureSample {
    pub failed_containers: BTreeSet<ContainerInstance>,
    pub failed_services: BTreeSet<ServiceName>,
}

/// Partial Fisher-Yates over `perm`: afterwards `perm[..k]` holds k distinct
/// indices chosen uniformly. `perm` must be a permutation of `0..perm.len()`.
#[inline]
pub(crate) fn choose_victims<R: Rng + ?Sized>(perm: &mut [u32], k: usize, rng: &mut R) {
    let n = perm.len();
    for j in 0..k {
        let r = rng.random_range(j..n);
        perm.swap(j, r);
    }
}

pub fn sample_failures<R: Rng + ?Sized>(
    fleet: &[ContainerInstance],
    k: usize,
    rng: &mut R,
) -> Result<FailureSample> {
    if k > fleet.len() {
        return Err(Error::Argument(format!(
            "cannot kill {k} of {} containers",
            fleet.len()
        )));
    }
    let mut perm: Vec<u32> = (0..fleet.len() as u32).collect();
    choose_victims(&mut perm, k, rng);
    let failed_containers: BTreeSet<ContainerInstance> =
        perm[..k].iter().map(|&i| fleet[i as usize].clone()).collect();
    let failed_services = fleet
        .iter()
        .map(|c| &c.service)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter(|s| {
            fleet
                .iter()
                .filter(|c| &c.service == *s)
                .all(|c| failed_containers.contains(c))
        })
        .cloned()
        .collect();
    Ok(FailureSample {
        failed_containers,
        failed_services,
    })
}

/// Base targets plus each conditional target whose uniform draw falls below
/// its inclusion probability. One draw per conditional, in declared order.
pub fn resolve_targets<R: Rng + ?Sized>(profile: &EndpointProfile, rng: &mut R) -> BTreeSet<ServiceName> {
    let mut targets = profile.base_targets.clone();
    for c in &profile.conditional_targets {
        if rng.random::<f64>() < c.probability {
            targets.insert(c.service.clone());
        }
    }
    targets
}

pub fn endpoint_success(
    graph: &DependencyGraph,
    alive: &BTreeSet<ServiceName>,
    entry: &str,
    targets: &BTreeSet<ServiceName>,
) -> bool {
    let Some(e) = graph.index_of(entry) else {
        return false;
    };
    let mask: Vec<bool> = graph.nodes().iter().map(|n| alive.contains(n)).collect();
    let mut seen = vec![false; graph.node_count()];
    graph.reach_within(e, &mask, &mut seen, &mut Vec::new());
    seen[e]
        && targets
            .iter()
            .all(|t| graph.index_of(t.as_str()).is_some_and(|i| seen[i]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointAvailability {
    pub endpoint: String,
    pub weight: f64,
    pub successes: u64,
    pub samples: u64,
    pub availability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResilienceReport {
    pub per_endpoint: Vec<EndpointAvailability>,
    pub r_model: f64,
    pub round_values: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub fleet_size: usize,
    pub kill_count: usize,
    pub samples_per_round: u64,
    pub rounds: u32,
    pub master_seed: u64,
}

/// Weighted sum of availabilities.
pub fn weighted_resilience<'a>(pairs: impl IntoIterator<Item = (f64, f64)> + 'a) -> f64 {
    pairs.into_iter().map(|(a, w)| a * w).sum()
}

/// Arithmetic mean and sample (n-1) standard deviation; SD is 0 for one value.
pub fn aggregate_rounds(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Argument("no round values to aggregate".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    Ok((mean, (ss / (n - 1.0)).sqrt()))
}

struct CompiledEndpoint {
    base: Vec<usize>,
    conditional: Vec<(usize, f64)>,
}

/// Index-based form of the model used in the sampling loop.
pub(crate) struct Compiled<'g> {
    pub graph: &'g DependencyGraph,
    pub entry: usize,
    /// Killable container -> node index.
    pub container_node: Vec<u32>,
    /// Node index -> total replica count.
    pub replicas: Vec<u32>,
    endpoints: Vec<CompiledEndpoint>,
}

pub(crate) struct Scratch {
    pub perm: Vec<u32>,
    pub dead: Vec<u32>,
    pub alive: Vec<bool>,
    pub seen: Vec<bool>,
    pub stack: Vec<usize>,
}

impl<'g> Compiled<'g> {
    pub fn new(
        graph: &'g DependencyGraph,
        scenario: &DeploymentScenario,
        profiles: &[EndpointProfile],
    ) -> Result<Self> {
        let idx = |s: &ServiceName| {
            graph
                .index_of(s.as_str())
                .ok_or_else(|| Error::config("graph", format!("{s} is not in the graph")))
        };
        let entry = idx(scenario.entry())?;
        let mut replicas = vec![1u32; graph.node_count()];
        for (s, &n) in scenario.replicas() {
            replicas[idx(s)?] = n;
        }
        let container_node = scenario
            .killable_fleet()
            .iter()
            .map(|c| idx(&c.service).map(|i| i as u32))
            .collect::<Result<_>>()?;
        let endpoints = profiles
            .iter()
            .map(|p| {
                Ok(CompiledEndpoint {
                    base: p.base_targets.iter().map(idx).collect::<Result<_>>()?,
                    conditional: p
                        .conditional_targets
                        .iter()
                        .map(|c| Ok((idx(&c.service)?, c.probability)))
                        .collect::<Result<_>>()?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Compiled {
            graph,
            entry,
            container_node,
            replicas,
            endpoints,
        })
    }

    pub fn fleet_size(&self) -> usize {
        self.container_node.len()
    }

    pub fn scratch(&self) -> Scratch {
        let n = self.graph.node_count();
        Scratch {
            perm: Vec::with_capacity(self.fleet_size()),
            dead: vec![0; n],
            alive: vec![true; n],
            seen: vec![false; n],
            stack: Vec::with_capacity(n),
        }
    }

    /// Marks alive nodes and entry-reachable nodes for the kill set held in
    /// `s.perm[..k]` (indices into the killable fleet).
    #[inline]
    pub fn apply_kills(&self, k: usize, s: &mut Scratch) {
        s.dead.iter_mut().for_each(|d| *d = 0);
        for &v in &s.perm[..k] {
            s.dead[self.container_node[v as usize] as usize] += 1;
        }
        for ((a, &d), &r) in s.alive.iter_mut().zip(&s.dead).zip(&self.replicas) {
            *a = d < r;
        }
        let Scratch {
            alive, seen, stack, ..
        } = s;
        self.graph.reach_within(self.entry, alive, seen, stack);
    }

    pub fn endpoint_base(&self, e: usize) -> &[usize] {
        &self.endpoints[e].base
    }

    pub fn endpoint_conditional(&self, e: usize) -> &[(usize, f64)] {
        &self.endpoints[e].conditional
    }

    pub fn endpoint_count(&self) -> usize {
        self.endpoints.len()
    }

    /// One full sample: kills, then per-endpoint conditional draws.
    #[inline]
    fn run_sample<R: Rng>(&self, k: usize, rng: &mut R, s: &mut Scratch, successes: &mut [u64]) {
        s.perm.clear();
        s.perm.extend(0..self.fleet_size() as u32);
        choose_victims(&mut s.perm, k, rng);
        self.apply_kills(k, s);
        let entry_ok = s.seen[self.entry];
        for (ep, count) in self.endpoints.iter().zip(successes.iter_mut()) {
            let mut ok = entry_ok && ep.base.iter().all(|&t| s.seen[t]);
            // conditionals are always drawn so stream positions stay fixed
            for &(t, p) in &ep.conditional {
                if rng.random::<f64>() < p && !s.seen[t] {
                    ok = false;
                }
            }
            if ok {
                *count += 1;
            }
        }
    }
}

/// Runs the Monte-Carlo estimator on the current rayon pool.
pub fn run_monte_carlo(
    graph: &DependencyGraph,
    scenario: &DeploymentScenario,
    profiles: &[EndpointProfile],
    failure: &FailureConfig,
) -> Result<ResilienceReport> {
    if !graph.contains(scenario.entry().as_str()) {
        return Err(Error::config(
            "entry",
            format!("{} is not in the graph", scenario.entry()),
        ));
    }
    if failure.samples_per_round == 0 || failure.rounds == 0 {
        return Err(Error::Argument("samples and rounds must be positive".into()));
    }
    let model = Compiled::new(graph, scenario, profiles)?;
    let k = kill_count(model.fleet_size(), failure.p_fail);
    let n = failure.samples_per_round;
    let endpoints = model.endpoint_count();

    let mut totals = vec![0u64; endpoints];
    let mut round_values = Vec::with_capacity(failure.rounds as usize);
    for round in 0..failure.rounds {
        let key = round_key(failure.master_seed, round);
        let chunks = n.div_ceil(CHUNK);
        let counts = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut s = model.scratch();
                let mut local = vec![0u64; endpoints];
                for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                    let mut rng = stream_from_key(key, i);
                    model.run_sample(k, &mut rng, &mut s, &mut local);
                }
                local
            })
            .reduce(
                || vec![0u64; endpoints],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            );
        round_values.push(weighted_resilience(
            counts
                .iter()
                .zip(profiles)
                .map(|(&c, p)| (c as f64 / n as f64, p.weight)),
        ));
        totals.iter_mut().zip(&counts).for_each(|(t, c)| *t += c);
    }

    let total_samples = n * failure.rounds as u64;
    let per_endpoint: Vec<EndpointAvailability> = profiles
        .iter()
        .zip(&totals)
        .map(|(p, &successes)| EndpointAvailability {
            endpoint: p.name.clone(),
            weight: p.weight,
            successes,
            samples: total_samples,
            availability: successes as f64 / total_samples as f64,
        })
        .collect();
    let r_model = weighted_resilience(per_endpoint.iter().map(|e| (e.availability, e.weight)));
    let (mean, sd) = aggregate_rounds(&round_values)?;
    Ok(ResilienceReport {
        per_endpoint,
        r_model,
        round_values,
        mean,
        sd,
        fleet_size: model.fleet_size(),
        kill_count: k,
        samples_per_round: n,
        rounds: failure.rounds,
        master_seed: failure.master_seed,
    })
}

/// Like [`run_monte_carlo`] but on a dedicated pool of `workers` threads.
pub fn run_monte_carlo_with_workers(
    graph: &DependencyGraph,
    scenario: &DeploymentScenario,
    profiles: &[EndpointProfile],
    failure: &FailureConfig,
    workers: usize,
) -> Result<ResilienceReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Argument(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| run_monte_carlo(graph, scenario, profiles, failure))
}
