//! Service-dependency graphs: ingestion from the Jaeger dependencies shape,
//! the built-in Social Network topology, and structural diagnostics.
//!
//! Nodes are stored in ascending name order so every index-based structure
//! derived from a graph is a pure function of its contents.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Entry service of the built-in Social Network graph.
pub const SOCIAL_NETWORK_ENTRY: &str = "nginx-web-server";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ServiceName(String);

impl ServiceName {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(Error::Argument(format!(
                "service name must not be empty or whitespace: {name:?}"
            )));
        }
        Ok(ServiceName(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for ServiceName {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        ServiceName::new(value)
    }
}

impl From<ServiceName> for String {
    fn from(value: ServiceName) -> Self {
        value.0
    }
}

impl fmt::Display for ServiceName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::borrow::Borrow<str> for ServiceName {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// One record of a Jaeger-style dependencies document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DependencyRecord {
    pub parent: String,
    pub child: String,
    #[serde(default)]
    pub call_count: u64,
}

/// Directed call graph. Edges are unweighted for analysis; call counts are
/// carried along for round-tripping only.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DependencyGraph {
    nodes: Vec<ServiceName>,
    index: BTreeMap<ServiceName, usize>,
    succ: Vec<Vec<usize>>,
    call_counts: BTreeMap<(usize, usize), u64>,
}

impl DependencyGraph {
    /// Builds a graph from explicit nodes and edges. Edge endpoints are added
    /// to the node set if missing; duplicate edges collapse.
    pub fn from_edges<N, E>(nodes: N, edges: E) -> Result<Self>
    where
        N: IntoIterator<Item = ServiceName>,
        E: IntoIterator<Item = (ServiceName, ServiceName)>,
    {
        let mut b = Builder::default();
        for n in nodes {
            b.node(n);
        }
        for (caller, callee) in edges {
            b.edge(caller, callee, 0)?;
        }
        Ok(b.finish())
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.succ.iter().map(Vec::len).sum()
    }

    /// Nodes in ascending name order; a node's position is its index.
    pub fn nodes(&self) -> &[ServiceName] {
        &self.nodes
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn contains_edge(&self, caller: &str, callee: &str) -> bool {
        match (self.index_of(caller), self.index_of(callee)) {
            (Some(u), Some(v)) => self.succ[u].binary_search(&v).is_ok(),
            _ => false,
        }
    }

    /// Successor indices of node `u`, ascending.
    pub fn successors(&self, u: usize) -> &[usize] {
        &self.succ[u]
    }

    /// Edges as name pairs, ordered by (caller, callee).
    pub fn edges(&self) -> impl Iterator<Item = (&ServiceName, &ServiceName)> + '_ {
        self.succ
            .iter()
            .enumerate()
            .flat_map(move |(u, vs)| vs.iter().map(move |&v| (&self.nodes[u], &self.nodes[v])))
    }

    pub fn call_count(&self, caller: &str, callee: &str) -> Option<u64> {
        let key = (self.index_of(caller)?, self.index_of(callee)?);
        self.call_counts.get(&key).copied()
    }

    /// Serializes to the dependencies-document shape, sorted by edge.
    pub fn to_records(&self) -> Vec<DependencyRecord> {
        self.succ
            .iter()
            .enumerate()
            .flat_map(|(u, vs)| {
                vs.iter().map(move |&v| DependencyRecord {
                    parent: self.nodes[u].to_string(),
                    child: self.nodes[v].to_string(),
                    call_count: self.call_counts.get(&(u, v)).copied().unwrap_or(0),
                })
            })
            .collect()
    }

    /// Marks in `seen` every node reachable from `start` through nodes with
    /// `alive[i] == true`. `start` itself must be alive to be marked.
    pub fn reach_within(&self, start: usize, alive: &[bool], seen: &mut [bool], stack: &mut Vec<usize>) {
        seen.iter_mut().for_each(|s| *s = false);
        stack.clear();
        if !alive[start] {
            return;
        }
        seen[start] = true;
        stack.push(start);
        while let Some(u) = stack.pop() {
            for &v in &self.succ[u] {
                if alive[v] && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
    }

    pub fn has_cycle(&self) -> bool {
        // Kahn: a cycle exists iff some node never reaches in-degree zero.
        let n = self.nodes.len();
        let mut indeg = vec![0usize; n];
        for vs in &self.succ {
            for &v in vs {
                indeg[v] += 1;
            }
        }
        let mut queue: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut removed = 0;
        while let Some(u) = queue.pop() {
            removed += 1;
            for &v in &self.succ[u] {
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    queue.push(v);
                }
            }
        }
        removed != n
    }
}

#[derive(Default)]
struct Builder {
    nodes: BTreeSet<ServiceName>,
    edges: BTreeMap<(ServiceName, ServiceName), u64>,
}

impl Builder {
    fn node(&mut self, n: ServiceName) {
        self.nodes.insert(n);
    }

    fn edge(&mut self, caller: ServiceName, callee: ServiceName, count: u64) -> Result<()> {
        if caller == callee {
            return Err(Error::Argument(format!("self-loop on {caller}")));
        }
        self.nodes.insert(caller.clone());
        self.nodes.insert(callee.clone());
        let c = self.edges.entry((caller, callee)).or_insert(0);
        *c = c.saturating_add(count);
        Ok(())
    }

    fn finish(self) -> DependencyGraph {
        let nodes: Vec<ServiceName> = self.nodes.into_iter().collect();
        let index: BTreeMap<ServiceName, usize> =
            nodes.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        let mut succ = vec![Vec::new(); nodes.len()];
        let mut call_counts = BTreeMap::new();
        for ((caller, callee), count) in self.edges {
            let (u, v) = (index[&caller], index[&callee]);
            succ[u].push(v);
            call_counts.insert((u, v), count);
        }
        // BTreeMap iteration already yields callees in name order, which is index order.
        DependencyGraph {
            nodes,
            index,
            succ,
            call_counts,
        }
    }
}

/// Parses a dependencies document (JSON array of `{parent, child, callCount}`).
pub fn parse_dependencies(document: &str) -> Result<DependencyGraph> {
    let value: Value = serde_json::from_str(document).map_err(|e| Error::parse("document", e.to_string()))?;
    parse_dependencies_value(&value)
}

pub fn parse_dependencies_value(value: &Value) -> Result<DependencyGraph> {
    let records = value
        .as_array()
        .ok_or_else(|| Error::parse("document", "expected a JSON array of dependency records"))?;
    let mut b = Builder::default();
    for (i, rec) in records.iter().enumerate() {
        let loc = || format!("record {i}");
        let obj = rec
            .as_object()
            .ok_or_else(|| Error::parse(loc(), "record is not an object"))?;
        let name = |field: &str| -> Result<ServiceName> {
            let s = obj
                .get(field)
                .ok_or_else(|| Error::parse(loc(), format!("missing `{field}`")))?
                .as_str()
                .ok_or_else(|| Error::parse(loc(), format!("`{field}` is not a string")))?;
            ServiceName::new(s).map_err(|_| Error::parse(loc(), format!("`{field}` is empty")))
        };
        let parent = name("parent")?;
        let child = name("child")?;
        let count = match obj.get("callCount") {
            None | Some(Value::Null) => 0,
            Some(v) => v
                .as_u64()
                .ok_or_else(|| Error::parse(loc(), "`callCount` must be a non-negative integer"))?,
        };
        if parent == child {
            return Err(Error::parse(loc(), format!("self-loop on {parent}")));
        }
        b.edge(parent, child, count)?;
    }
    Ok(b.finish())
}

/// Serializes a graph back to a pretty-printed dependencies document.
pub fn serialize_dependencies(graph: &DependencyGraph) -> String {
    serde_json::to_string_pretty(&graph.to_records()).expect("records always serialize")
}

const SOCIAL_NETWORK_EDGES: &[(&str, &[&str])] = &[
    (
        "nginx-web-server",
        &[
            "compose-post-service",
            "home-timeline-service",
            "user-timeline-service",
            "user-service",
            "social-graph-service",
        ],
    ),
    (
        "compose-post-service",
        &[
            "user-service",
            "media-service",
            "text-service",
            "unique-id-service",
            "post-storage-service",
            "user-timeline-service",
            "home-timeline-service",
        ],
    ),
    ("text-service", &["url-shorten-service", "user-mention-service"]),
    (
        "home-timeline-service",
        &["post-storage-service", "social-graph-service"],
    ),
    ("user-timeline-service", &["post-storage-service"]),
];

/// The 12-service Social Network call graph, entered at `nginx-web-server`.
/// Databases are not nodes.
///
/// The edge list follows the gateway/compose/timeline call narrative. A
/// traced deployment may show extra edges (for instance compose-post calling
/// social-graph directly); these do not change any built-in endpoint's
/// outcome because each built-in target set is already connected to the
/// entry through its own members.
pub fn builtin_socialnetwork_graph() -> DependencyGraph {
    let mut b = Builder::default();
    for (caller, callees) in SOCIAL_NETWORK_EDGES {
        for callee in *callees {
            b.edge(svc(caller), svc(callee), 0)
                .expect("built-in edges are not self-loops");
        }
    }
    b.finish()
}

pub(crate) fn svc(name: &str) -> ServiceName {
    ServiceName::new(name).expect("non-empty literal")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GraphDiagnostics {
    pub unreachable_nodes: BTreeSet<ServiceName>,
    pub cycles_present: bool,
    pub missing_entry: bool,
}

impl GraphDiagnostics {
    /// Only a missing entry blocks simulation; the rest are warnings.
    pub fn is_fatal(&self) -> bool {
        self.missing_entry
    }
}

pub fn validate_graph(graph: &DependencyGraph, entry: &str) -> GraphDiagnostics {
    let cycles_present = graph.has_cycle();
    let Some(e) = graph.index_of(entry) else {
        return GraphDiagnostics {
            unreachable_nodes: graph.nodes().iter().cloned().collect(),
            cycles_present,
            missing_entry: true,
        };
    };
    let n = graph.node_count();
    let mut seen = vec![false; n];
    graph.reach_within(e, &vec![true; n], &mut seen, &mut Vec::new());
    GraphDiagnostics {
        unreachable_nodes: graph
            .nodes()
            .iter()
            .zip(&seen)
            .filter(|(_, &s)| !s)
            .map(|(n, _)| n.clone())
            .collect(),
        cycles_present,
        missing_entry: false,
    }
}
