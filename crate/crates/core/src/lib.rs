//! Resilience estimation for microservice systems from their service
//! dependency graph.
//!
//! The crate predicts the fraction of user requests that still succeed when
//! a fixed share of containers is killed at random:
//!
//! - [`graph`] ingests Jaeger-style dependency documents and ships the Social
//!   Network topology used in the built-in scenarios.
//! - [`scenario`] describes replica counts, endpoint profiles and failure
//!   parameters, and loads them from a JSON config.
//! - [`sim`] is the Monte-Carlo estimator, [`oracle`] its exact counterpart.
//! - [`live`] computes measured resilience from request logs and compares it
//!   with model predictions.

pub mod cli;
pub mod error;
pub mod fetch;
pub mod graph;
pub mod live;
pub mod manifest;
pub mod oracle;
pub mod rng;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};
pub use graph::{
    builtin_socialnetwork_graph, parse_dependencies, validate_graph, DependencyGraph, GraphDiagnostics,
    ServiceName,
};
pub use live::{analyze_request_log, compare, ComparisonRow, Denominator, LiveResilience, Verdict};
pub use oracle::{exact_resilience, exact_vs_mc_report, ExactResult};
pub use scenario::{
    builtin_profiles, container_fleet, kill_count, load_scenario, BuiltinScenario, DeploymentScenario,
    EndpointProfile, FailureConfig, LoadedScenario, ScenarioConfig,
};
pub use sim::{aggregate_rounds, run_monte_carlo, run_monte_carlo_with_workers, ResilienceReport};
