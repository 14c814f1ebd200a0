//! Exact resilience by exhaustive enumeration.
//!
//! Every K-subset of the killable fleet is visited once (lexicographic order
//! over fleet indices). For each kill set and endpoint, every subset of the
//! endpoint's conditional targets is evaluated and weighted by its inclusion
//! probability. Success counts are kept as integers per (endpoint, subset),
//! so the result does not depend on how the kill sets are partitioned across
//! workers.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::DependencyGraph;
use crate::scenario::{kill_count, DeploymentScenario, EndpointProfile};
use crate::sim::{weighted_resilience, Compiled, ResilienceReport};

pub const DEFAULT_STATE_LIMIT: u128 = 100_000_000;

/// Kill sets per parallel work unit.
const CHUNK: u64 = 4096;

/// Deviations beyond this many binomial standard errors fail.
pub const SIGMA_BOUND: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactEndpoint {
    pub endpoint: String,
    pub weight: f64,
    pub availability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactResult {
    pub per_endpoint: Vec<ExactEndpoint>,
    pub r_model_exact: f64,
    pub enumerated_states: u128,
    pub kill_sets: u128,
    pub fleet_size: usize,
    pub kill_count: usize,
}

impl ExactResult {
    pub fn availability(&self, endpoint: &str) -> Option<f64> {
        self.per_endpoint
            .iter()
            .find(|e| e.endpoint == endpoint)
            .map(|e| e.availability)
    }
}

/// Binomial coefficient, saturating at `u128::MAX`.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) is exact at every step
        let Some(m) = acc.checked_mul((n - i) as u128) else {
            return u128::MAX;
        };
        acc = m / (i + 1) as u128;
    }
    acc
}

/// Enumeration size: kill sets times the conditional combinations of the
/// endpoint with the most conditional targets.
pub fn state_count(fleet_size: usize, k: usize, profiles: &[EndpointProfile]) -> u128 {
    let max_cond = profiles
        .iter()
        .map(|p| p.conditional_targets.len())
        .max()
        .unwrap_or(0);
    let combos = 1u128.checked_shl(max_cond as u32).unwrap_or(u128::MAX);
    binomial(fleet_size as u64, k as u64).saturating_mul(combos)
}

/// Writes the combination of lexicographic rank `rank` (k of n) into `out`.
fn unrank_combination(n: usize, k: usize, mut rank: u128, out: &mut [u32]) {
    let mut next = 0usize;
    for (slot, item) in out.iter_mut().enumerate().take(k) {
        let remaining = k - slot - 1;
        loop {
            let with_next = binomial((n - next - 1) as u64, remaining as u64);
            if rank < with_next {
                break;
            }
            rank -= with_next;
            next += 1;
        }
        *item = next as u32;
        next += 1;
    }
}

/// Advances `c` (sorted, values < n) to the next combination; false at the end.
fn next_combination(c: &mut [u32], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if (c[i] as usize) < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Exact availabilities with K derived from `p_fail`.
pub fn exact_resilience(
    graph: &DependencyGraph,
    scenario: &DeploymentScenario,
    profiles: &[EndpointProfile],
    p_fail: f64,
    state_limit: u128,
) -> Result<ExactResult> {
    if !(0.0..=1.0).contains(&p_fail) {
        return Err(Error::Argument(format!("p_fail {p_fail} is outside [0, 1]")));
    }
    let fleet = scenario.killable_fleet().len();
    exact_resilience_with_k(graph, scenario, profiles, kill_count(fleet, p_fail), state_limit)
}

/// Exact availabilities for an explicit kill count.
pub fn exact_resilience_with_k(
    graph: &DependencyGraph,
    scenario: &DeploymentScenario,
    profiles: &[EndpointProfile],
    k: usize,
    state_limit: u128,
) -> Result<ExactResult> {
    let model = Compiled::new(graph, scenario, profiles)?;
    let n = model.fleet_size();
    if k > n {
        return Err(Error::Argument(format!("cannot kill {k} of {n} containers")));
    }
    let bounded = state_count(n, k, profiles);
    if bounded > state_limit {
        return Err(Error::StateLimit {
            states: bounded,
            limit: state_limit,
        });
    }
    let kill_sets = binomial(n as u64, k as u64);
    // bounded by state_limit above, and u64 covers any sane limit
    let total = u64::try_from(kill_sets).map_err(|_| Error::StateLimit {
        states: kill_sets,
        limit: state_limit,
    })?;

    let combos: Vec<usize> = profiles
        .iter()
        .map(|p| 1usize << p.conditional_targets.len())
        .collect();
    let zero = || combos.iter().map(|&c| vec![0u64; c]).collect::<Vec<_>>();

    let hits = (0..total.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut s = model.scratch();
            let mut hits = zero();
            let start = chunk * CHUNK;
            let end = (start + CHUNK).min(total);
            let mut comb = vec![0u32; k];
            unrank_combination(n, k, start as u128, &mut comb);
            for rank in start..end {
                s.perm.clear();
                s.perm.extend_from_slice(&comb);
                model.apply_kills(k, &mut s);
                tally(&model, &s.seen, &mut hits);
                if rank + 1 < end {
                    next_combination(&mut comb, n);
                }
            }
            hits
        })
        .reduce(zero, |mut a, b| {
            for (x, y) in a.iter_mut().zip(b) {
                x.iter_mut().zip(y).for_each(|(p, q)| *p += q);
            }
            a
        });

    let per_endpoint: Vec<ExactEndpoint> = profiles
        .iter()
        .zip(&hits)
        .map(|(p, h)| {
            let weighted: f64 = h
                .iter()
                .enumerate()
                .map(|(mask, &count)| subset_probability(p, mask) * count as f64)
                .sum();
            ExactEndpoint {
                endpoint: p.name.clone(),
                weight: p.weight,
                availability: weighted / total as f64,
            }
        })
        .collect();
    Ok(ExactResult {
        r_model_exact: weighted_resilience(per_endpoint.iter().map(|e| (e.availability, e.weight))),
        per_endpoint,
        enumerated_states: state_count(n, k, profiles),
        kill_sets,
        fleet_size: n,
        kill_count: k,
    })
}

/// Counts, per endpoint and conditional subset, whether the kill set
/// reflected in `seen` lets the request succeed.
fn tally(model: &Compiled<'_>, seen: &[bool], hits: &mut [Vec<u64>]) {
    let entry_ok = seen[model.entry];
    for (e, h) in hits.iter_mut().enumerate() {
        if !entry_ok || !model.endpoint_base(e).iter().all(|&t| seen[t]) {
            continue;
        }
        let cond = model.endpoint_conditional(e);
        for (mask, slot) in h.iter_mut().enumerate() {
            let ok = cond
                .iter()
                .enumerate()
                .all(|(bit, &(t, _))| mask & (1 << bit) == 0 || seen[t]);
            if ok {
                *slot += 1;
            }
        }
    }
}

/// Probability that exactly the conditionals in `mask` are included.
fn subset_probability(profile: &EndpointProfile, mask: usize) -> f64 {
    profile
        .conditional_targets
        .iter()
        .enumerate()
        .map(|(bit, c)| {
            if mask & (1 << bit) != 0 {
                c.probability
            } else {
                1.0 - c.probability
            }
        })
        .product()
}

/// `|mc - exact| / sqrt(exact (1 - exact) / n)`. With zero variance the score
/// is 0 for an exact match and `None` (unbounded) otherwise.
pub fn binomial_z(exact: f64, mc: f64, n: u64) -> Option<f64> {
    let dev = (mc - exact).abs();
    let sigma = (exact * (1.0 - exact) / n as f64).sqrt();
    if sigma > 0.0 {
        Some(dev / sigma)
    } else if dev == 0.0 {
        Some(0.0)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EndpointDeviation {
    pub endpoint: String,
    pub exact: f64,
    pub monte_carlo: f64,
    pub abs_deviation: f64,
    pub samples: u64,
    pub z_score: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactComparison {
    pub endpoints: Vec<EndpointDeviation>,
    pub sigma_bound: f64,
    pub r_model_exact: f64,
    pub r_model_mc: f64,
    pub all_pass: bool,
}

pub fn exact_vs_mc_report(exact: &ExactResult, mc: &ResilienceReport) -> Result<ExactComparison> {
    let same = exact.per_endpoint.len() == mc.per_endpoint.len()
        && exact
            .per_endpoint
            .iter()
            .zip(&mc.per_endpoint)
            .all(|(a, b)| a.endpoint == b.endpoint);
    if !same {
        return Err(Error::Argument(
            "exact and Monte-Carlo results cover different endpoints".into(),
        ));
    }
    let endpoints: Vec<EndpointDeviation> = exact
        .per_endpoint
        .iter()
        .zip(&mc.per_endpoint)
        .map(|(x, m)| {
            let z = binomial_z(x.availability, m.availability, m.samples);
            EndpointDeviation {
                endpoint: x.endpoint.clone(),
                exact: x.availability,
                monte_carlo: m.availability,
                abs_deviation: (m.availability - x.availability).abs(),
                samples: m.samples,
                z_score: z,
                pass: z.is_some_and(|z| z <= SIGMA_BOUND),
            }
        })
        .collect();
    Ok(ExactComparison {
        all_pass: endpoints.iter().all(|e| e.pass),
        endpoints,
        sigma_bound: SIGMA_BOUND,
        r_model_exact: exact.r_model_exact,
        r_model_mc: mc.r_model,
    })
}
