#![allow(dead_code)]

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::thread::JoinHandle;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resilsim::graph::DependencyRecord;
use resilsim::scenario::{ConditionalTarget, EndpointConfig, FailureSection, GraphSource};
use resilsim::{LoadedScenario, ScenarioConfig, ServiceName};

pub fn name(s: &str) -> ServiceName {
    ServiceName::new(s).unwrap()
}

/// Random DAG scenario: at most 10 services and 15 containers, 1-3
/// endpoints with up to two conditional targets each.
pub fn random_scenario(seed: u64) -> LoadedScenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..=10usize);
    let svc = |i: usize| format!("s{i}");
    let mut records = Vec::new();
    for j in 1..n {
        let mut has_parent = false;
        for i in 0..j {
            if rng.random_bool(0.3) {
                records.push(DependencyRecord {
                    parent: svc(i),
                    child: svc(j),
                    call_count: 1,
                });
                has_parent = true;
            }
        }
        if !has_parent && rng.random_bool(0.85) {
            let i = rng.random_range(0..j);
            records.push(DependencyRecord {
                parent: svc(i),
                child: svc(j),
                call_count: 1,
            });
        }
    }
    // every node must appear in some record to exist in the graph
    for j in 1..n {
        if !records.iter().any(|r| r.parent == svc(j) || r.child == svc(j)) {
            records.push(DependencyRecord {
                parent: svc(0),
                child: svc(j),
                call_count: 1,
            });
        }
    }
    if !records.iter().any(|r| r.parent == svc(0)) {
        records.push(DependencyRecord {
            parent: svc(0),
            child: svc(1),
            call_count: 1,
        });
    }
    let cap = rng.random_range(n..=15);
    let mut replicas: BTreeMap<ServiceName, u32> = (0..n).map(|i| (name(&svc(i)), 1)).collect();
    let mut total = n;
    while total < cap {
        let i = rng.random_range(0..n);
        *replicas.get_mut(&svc(i)[..]).unwrap() += 1;
        total += 1;
    }
    let n_ep = rng.random_range(1..=3);
    let mut weights: Vec<f64> = (0..n_ep).map(|_| rng.random_range(0.1..1.0)).collect();
    let sum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= sum);
    let endpoints = (0..n_ep)
        .map(|e| {
            let k = rng.random_range(1..=3.min(n));
            let mut targets: Vec<ServiceName> = (0..k).map(|_| name(&svc(rng.random_range(0..n)))).collect();
            targets.sort();
            targets.dedup();
            let conditional = (0..rng.random_range(0..=2))
                .map(|_| ConditionalTarget {
                    service: name(&svc(rng.random_range(0..n))),
                    probability: rng.random_range(0.0..=1.0),
                })
                .collect();
            EndpointConfig {
                name: format!("ep{e}"),
                targets,
                conditional,
                weight: weights[e],
            }
        })
        .collect();
    let cfg = ScenarioConfig {
        graph: GraphSource::Inline(records),
        entry: Some(name("s0")),
        scenario: None,
        replicas,
        exclude: vec![],
        endpoints: Some(endpoints),
        failure: FailureSection {
            p_fail: rng.random_range(0.05..0.6),
            samples: 1_000_000,
            rounds: 1,
            seed: seed ^ 0x5eed,
        },
    };
    cfg.resolve(None).expect("generated scenario is valid")
}

/// Binomial coefficient via Pascal's triangle, independent of the crate.
pub fn pascal(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let mut row = vec![1u128];
    for _ in 0..n {
        let mut next = vec![1u128; row.len() + 1];
        for i in 1..row.len() {
            next[i] = row[i - 1] + row[i];
        }
        row = next;
    }
    row[k]
}

/// One-shot HTTP server answering every request with `status` and `body`.
/// Returns the base URL and a handle yielding the request lines seen.
pub fn mock_http(status: u16, body: &'static str, requests: usize) -> (String, JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let handle = std::thread::spawn(move || {
        let mut seen = Vec::new();
        for stream in listener.incoming().take(requests) {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            seen.push(line.trim().to_string());
            loop {
                let mut h = String::new();
                if reader.read_line(&mut h).unwrap() == 0 || h == "\r\n" {
                    break;
                }
            }
            let reason = if status == 200 { "OK" } else { "Error" };
            write!(
                stream,
                "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
        seen
    });
    (format!("http://{addr}"), handle)
}
