//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Model-side numbers are computed here; the reference
//! testbed measurements are fed in as data.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use resilsim::graph::DependencyGraph;
use resilsim::oracle::{exact_resilience, exact_resilience_with_k, DEFAULT_STATE_LIMIT};
use resilsim::scenario::{container_fleet, kill_count, DeploymentScenario, EndpointProfile};
use resilsim::sim::{run_monte_carlo_with_workers, sample_failures};

use common::{name, pascal, random_scenario};

const BIN: &str = env!("CARGO_BIN_EXE_resilsim");

/// Reference testbed values: Monte-Carlo means and live means per scenario.
const REFERENCE_MODEL_NOREPL: f64 = 0.16100;
const REFERENCE_LIVE_NOREPL: f64 = 0.18609;
const REFERENCE_MODEL_REPL: f64 = 0.30519;
const REFERENCE_LIVE_REPL: f64 = 0.30479;

const PROPERTY_CASES: u32 = 1000;

struct Suite {
    failures: Vec<String>,
}

impl Suite {
    fn check(&mut self, id: &str, what: &str, ok: bool, detail: String) {
        let tag = if ok { "PASS" } else { "FAIL" };
        println!("[{tag}] {id}: {what} -- {detail}");
        if !ok {
            self.failures.push(id.to_string());
        }
    }
}

fn run(args: &[&str]) -> (i32, String, Duration) {
    let start = Instant::now();
    let out = Command::new(BIN).args(args).output().expect("run resilsim");
    let elapsed = start.elapsed();
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).unwrap(),
        elapsed,
    )
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn endpoint(doc: &Value, section: &str, name: &str) -> f64 {
    doc[section]["per_endpoint"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["endpoint"] == name)
        .unwrap()["availability"]
        .as_f64()
        .unwrap()
}

fn exact_norepl(s: &mut Suite, dir: &Path) {
    let out = dir.join("exact-norepl.json");
    let (code, _, t) = run(&[
        "exact",
        "--config",
        "builtin-norepl",
        "--workers",
        "1",
        "--output",
        out.to_str().unwrap(),
    ]);
    let doc = json(&out);
    let r = doc["exact"]["r_model_exact"].as_f64().unwrap();
    let ht = endpoint(&doc, "exact", "home-timeline");
    let ut = endpoint(&doc, "exact", "user-timeline");
    let cp = endpoint(&doc, "exact", "compose-post");
    let ok = code == 0
        && (r - 0.1612).abs() <= 0.0005
        && (ht - 70.0 / 495.0).abs() < 1e-12
        && (ut - 126.0 / 495.0).abs() < 1e-12
        && cp == 0.0
        && doc["exact"]["kill_sets"] == 495
        && t < Duration::from_secs(1);
    s.check(
        "AC1",
        "exact norepl r_model = 0.1612 +/- 0.0005, endpoints 70/495, 126/495, 0, < 1 s",
        ok,
        format!("r={r:.6} ht={ht:.6} ut={ut:.6} cp={cp} t={t:?}"),
    );
}

fn exact_repl(s: &mut Suite, dir: &Path) {
    let out = dir.join("exact-repl.json");
    let (code, _, t) = run(&[
        "exact",
        "--config",
        "builtin-repl",
        "--workers",
        "1",
        "--output",
        out.to_str().unwrap(),
    ]);
    let doc = json(&out);
    let r = doc["exact"]["r_model_exact"].as_f64().unwrap();
    let ok = code == 0
        && (r - REFERENCE_MODEL_REPL).abs() <= 0.0012
        && doc["exact"]["kill_sets"] == 170_544
        && doc["exact"]["enumerated_states"] == 170_544 * 8
        && t < Duration::from_secs(30);
    s.check(
        "AC2",
        "exact repl r_model within 0.0012 of 0.30519, 170544 kill sets x 8 combos, < 30 s single-threaded",
        ok,
        format!("r={r:.6} |d|={:.6} t={t:?}", (r - REFERENCE_MODEL_REPL).abs()),
    );
}

fn mc_fidelity(s: &mut Suite, dir: &Path) {
    let started = Instant::now();
    let mut details = Vec::new();
    let mut ok = true;
    for scenario in ["norepl", "repl"] {
        let cfg = format!("builtin-{scenario}");
        let mc_out = dir.join(format!("mc-{scenario}.json"));
        let (code, _, _) = run(&[
            "simulate",
            "--config",
            &cfg,
            "--samples",
            "4500000",
            "--rounds",
            "16",
            "--seed",
            "2024",
            "--output",
            mc_out.to_str().unwrap(),
        ]);
        let exact = json(&dir.join(format!("exact-{scenario}.json")))["exact"]["r_model_exact"]
            .as_f64()
            .unwrap();
        let doc = json(&mc_out);
        let mean = doc["report"]["mean"].as_f64().unwrap();
        let sd = doc["report"]["sd"].as_f64().unwrap();
        let rounds = doc["report"]["round_values"].as_array().unwrap().len();
        ok &= code == 0 && (mean - exact).abs() <= 0.0005 && sd <= 0.001 && rounds == 16;
        details.push(format!("{scenario}: mean={mean:.6} exact={exact:.6} sd={sd:.6}"));
    }
    let t = started.elapsed();
    ok &= t < Duration::from_secs(600);
    s.check(
        "AC3",
        "MC N=4.5e6 x 16 rounds: |mean - exact| <= 0.0005, SD <= 0.001, <= 10 min",
        ok,
        format!("{} t={t:?}", details.join("; ")),
    );
}

fn oracle_agreement(s: &mut Suite) {
    let seeds = 20u64;
    let mut passing = 0;
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let m = random_scenario(1000 + seed);
        let exact = exact_resilience(
            &m.graph,
            &m.scenario,
            &m.profiles,
            m.failure.p_fail,
            DEFAULT_STATE_LIMIT,
        )
        .unwrap();
        let mc = run_monte_carlo_with_workers(&m.graph, &m.scenario, &m.profiles, &m.failure, 4).unwrap();
        assert!(m.scenario.killable_fleet().len() <= 15 && m.graph.node_count() <= 10);
        let n = mc.samples_per_round as f64;
        let all = exact.per_endpoint.iter().zip(&mc.per_endpoint).all(|(x, y)| {
            let bound = 4.0 * (x.availability * (1.0 - x.availability) / n).sqrt();
            let dev = (x.availability - y.availability).abs();
            if bound > 0.0 {
                worst = worst.max(dev / bound * 4.0);
            }
            dev <= bound
        });
        passing += u32::from(all);
    }
    s.check(
        "AC4",
        "20 random small scenarios, N=1e6: every endpoint within 4 sigma for >= 19 seeds",
        passing >= 19,
        format!("{passing}/{seeds} seeds pass, worst z={worst:.2}"),
    );
}

fn hypothesis_verdicts(s: &mut Suite, dir: &Path) {
    let write = |n: &str, v: f64| {
        let p = dir.join(n);
        std::fs::write(&p, format!("{v}\n")).unwrap();
        p
    };
    let m1 = write("model-norepl.txt", REFERENCE_MODEL_NOREPL);
    let l1 = write("live-norepl.txt", REFERENCE_LIVE_NOREPL);
    let m2 = write("model-repl.txt", REFERENCE_MODEL_REPL);
    let l2 = write("live-repl.txt", REFERENCE_LIVE_REPL);
    let out = dir.join("compare.json");
    let (code, _, _) = run(&[
        "compare",
        "--scenario",
        "norepl",
        "--model",
        m1.to_str().unwrap(),
        "--live",
        l1.to_str().unwrap(),
        "--scenario",
        "repl",
        "--model",
        m2.to_str().unwrap(),
        "--live",
        l2.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
    ]);
    let doc = json(&out);
    let rows = doc["rows"].as_array().unwrap();
    let d1 = rows[0]["delta"].as_f64().unwrap();
    let d2 = rows[1]["delta"].as_f64().unwrap();
    let ok = code == 0
        && rows.len() == 2
        && (d1 - 0.02509).abs() < 1e-9
        && (d2 + 0.00040).abs() < 1e-9
        && rows.iter().all(|r| r["verdict"] == "pass");
    s.check(
        "AC5",
        "compare on reference values: delta +0.02509 / -0.00040, both pass at 15 %",
        ok,
        format!(
            "delta=({d1:+.5}, {d2:+.5}) rel=({}, {}) verdicts=({}, {})",
            rows[0]["relative_error"], rows[1]["relative_error"], rows[0]["verdict"], rows[1]["verdict"]
        ),
    );
}

fn eq1(s: &mut Suite, dir: &Path) {
    let mut log = String::from("# synthetic\n");
    for i in 0..1000 {
        let outcome = match i {
            0..=99 => "503".to_string(),
            100..=119 => "socket_error".to_string(),
            120..=149 => "404".to_string(),
            _ => "200".to_string(),
        };
        log.push_str(&format!(
            "{}.{:03},{outcome},home-timeline\n",
            1_700_000_000 + i / 1000,
            i % 1000
        ));
    }
    let p = dir.join("requests.csv");
    std::fs::write(&p, log).unwrap();
    let out = dir.join("live.json");
    let (code, _, _) = run(&[
        "analyze-live",
        "--log",
        p.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
    ]);
    let doc = json(&out);
    let r = doc["pooled"]["r_live"].as_f64().unwrap();
    s.check(
        "AC6",
        "1000-request log (100 5xx, 20 socket errors, 30 4xx) gives r_live = 0.880",
        code == 0 && r == 0.88 && doc["pooled"]["failed"] == 120,
        format!("r_live={r} failed={}", doc["pooled"]["failed"]),
    );
}

fn determinism(s: &mut Suite, dir: &Path) {
    let mut bytes = Vec::new();
    for workers in ["1", "4"] {
        let sub = dir.join(format!("w{workers}"));
        std::fs::create_dir_all(&sub).unwrap();
        let out = sub.join("report.json");
        let (code, _, _) = run(&[
            "simulate",
            "--config",
            "builtin-repl",
            "--samples",
            "300000",
            "--rounds",
            "3",
            "--seed",
            "7",
            "--workers",
            workers,
            "--output",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        bytes.push(std::fs::read(out).unwrap());
    }
    s.check(
        "AC7",
        "simulate with --workers 1 and 4 writes byte-identical reports",
        bytes[0] == bytes[1],
        format!("{} bytes each", bytes[0].len()),
    );
}

fn small_graph(n: usize, edges: &[(usize, usize)]) -> DependencyGraph {
    DependencyGraph::from_edges(
        (0..n).map(|i| name(&format!("n{i}"))),
        edges
            .iter()
            .map(|&(a, b)| (name(&format!("n{a}")), name(&format!("n{b}")))),
    )
    .unwrap()
}

/// Random DAG on up to 7 nodes with random replica counts (fleet <= 12).
fn arb_instance() -> impl Strategy<Value = (DependencyGraph, DeploymentScenario, usize)> {
    (2usize..=7)
        .prop_flat_map(|n| {
            (
                Just(n),
                prop::collection::vec(any::<bool>(), n * (n - 1) / 2),
                prop::collection::vec(1u32..=2, n),
                0.0f64..=1.0,
            )
        })
        .prop_map(|(n, mask, reps, p)| {
            let mut edges = Vec::new();
            let mut it = mask.into_iter();
            for j in 1..n {
                for i in 0..j {
                    if it.next().unwrap() {
                        edges.push((i, j));
                    }
                }
            }
            let g = small_graph(n, &edges);
            let replicas = reps
                .iter()
                .enumerate()
                .map(|(i, &r)| (name(&format!("n{i}")), r))
                .collect();
            let sc = DeploymentScenario::new(&g, name("n0"), &replicas).unwrap();
            let k = kill_count(container_fleet(&sc).len(), p);
            (g, sc, k)
        })
}

fn targets(g: &DependencyGraph, picks: &[usize]) -> Vec<String> {
    let mut v: Vec<String> = picks
        .iter()
        .map(|&i| g.nodes()[i % g.node_count()].to_string())
        .collect();
    v.sort();
    v.dedup();
    v
}

fn refs(t: &[String]) -> Vec<&str> {
    t.iter().map(String::as_str).collect()
}

fn properties(s: &mut Suite) {
    let config = || Config {
        cases: PROPERTY_CASES,
        failure_persistence: None,
        ..Config::default()
    };

    // target-set monotonicity, checked on the oracle and on shared MC samples
    let mut runner = TestRunner::new(config());
    let res = runner.run(
        &(
            arb_instance(),
            prop::collection::vec(0usize..7, 1..4),
            prop::collection::vec(0usize..7, 0..3),
        ),
        |((g, sc, k), small, extra)| {
            let t1 = targets(&g, &small);
            let mut all = small.clone();
            all.extend(extra);
            let t2 = targets(&g, &all);
            let profiles = vec![
                EndpointProfile::new("t1", &refs(&t1), 0.5),
                EndpointProfile::new("t2", &refs(&t2), 0.5),
            ];
            let x = exact_resilience_with_k(&g, &sc, &profiles, k, DEFAULT_STATE_LIMIT).unwrap();
            prop_assert!(x.per_endpoint[0].availability >= x.per_endpoint[1].availability);
            let f = resilsim::FailureConfig {
                p_fail: k as f64 / container_fleet(&sc).len() as f64,
                samples_per_round: 64,
                rounds: 1,
                master_seed: 1,
            };
            let mc = resilsim::run_monte_carlo(&g, &sc, &profiles, &f).unwrap();
            prop_assert!(mc.per_endpoint[0].successes >= mc.per_endpoint[1].successes);
            Ok(())
        },
    );
    s.check(
        "AC8a",
        "target-set monotonicity (1000 cases)",
        res.is_ok(),
        format!("{res:?}"),
    );

    // lowering a conditional's probability never lowers availability
    let mut runner = TestRunner::new(config());
    let res = runner.run(
        &(
            arb_instance(),
            prop::collection::vec((0usize..7, 0.0f64..=1.0, 0.0f64..=1.0), 1..4),
        ),
        |((g, sc, k), conds)| {
            let entry = g.nodes()[0].to_string();
            let hi = conds
                .iter()
                .fold(EndpointProfile::new("e", &[&entry], 1.0), |p, &(i, a, _)| {
                    p.with_conditional(g.nodes()[i % g.node_count()].as_str(), a)
                });
            let lo = conds
                .iter()
                .fold(EndpointProfile::new("e", &[&entry], 1.0), |p, &(i, a, b)| {
                    p.with_conditional(g.nodes()[i % g.node_count()].as_str(), a * b)
                });
            let mut none = hi.clone();
            none.conditional_targets.clear();
            let a_hi = exact_resilience_with_k(&g, &sc, &[hi], k, DEFAULT_STATE_LIMIT)
                .unwrap()
                .r_model_exact;
            let a_lo = exact_resilience_with_k(&g, &sc, &[lo], k, DEFAULT_STATE_LIMIT)
                .unwrap()
                .r_model_exact;
            let a_none = exact_resilience_with_k(&g, &sc, &[none], k, DEFAULT_STATE_LIMIT)
                .unwrap()
                .r_model_exact;
            prop_assert!(a_lo >= a_hi - 1e-12, "lo {a_lo} < hi {a_hi}");
            prop_assert!(a_none >= a_lo - 1e-12, "none {a_none} < lo {a_lo}");
            Ok(())
        },
    );
    s.check(
        "AC8b",
        "conditional-probability monotonicity (1000 cases)",
        res.is_ok(),
        format!("{res:?}"),
    );

    // closed form C(n-m, K) / C(n, K) for a path-closed required set
    let mut runner = TestRunner::new(config());
    let res = runner.run(&(2usize..=14, 1usize..=14, 0usize..=14), |(n, m_raw, k_raw)| {
        let m = 1 + (m_raw - 1) % n; // required set size incl. entry, 1..=n
        let k = k_raw % (n + 1);
        let edges: Vec<(usize, usize)> = (1..n).map(|j| (0, j)).collect();
        let g = small_graph(n, &edges);
        let sc = DeploymentScenario::new(&g, name("n0"), &Default::default()).unwrap();
        let required: Vec<String> = (1..m).map(|i| format!("n{i}")).collect();
        let refs: Vec<&str> = required.iter().map(String::as_str).collect();
        let p = EndpointProfile::new("e", &refs, 1.0);
        let got = exact_resilience_with_k(&g, &sc, &[p], k, DEFAULT_STATE_LIMIT)
            .unwrap()
            .r_model_exact;
        let want = pascal(n - m, k) as f64 / pascal(n, k) as f64;
        prop_assert!((got - want).abs() < 1e-12, "n={n} m={m} k={k}: {got} vs {want}");
        Ok(())
    });
    s.check(
        "AC8c",
        "closed-form C(n-m,K)/C(n,K) cross-check (1000 cases)",
        res.is_ok(),
        format!("{res:?}"),
    );

    // every sample kills exactly K distinct containers
    let mut runner = TestRunner::new(config());
    let res = runner.run(&(arb_instance(), any::<u64>()), |((_, sc, _), seed)| {
        let fleet = container_fleet(&sc);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for k in 0..=fleet.len() {
            let sample = sample_failures(&fleet, k, &mut rng).unwrap();
            prop_assert_eq!(sample.failed_containers.len(), k);
            for (svc, &r) in sc.replicas() {
                let dead = sample
                    .failed_containers
                    .iter()
                    .filter(|c| &c.service == svc)
                    .count();
                prop_assert_eq!(sample.failed_services.contains(svc), dead == r as usize);
            }
        }
        prop_assert!(sample_failures(&fleet, fleet.len() + 1, &mut rng).is_err());
        Ok(())
    });
    s.check(
        "AC8d",
        "K-exactness of failure samples (1000 cases)",
        res.is_ok(),
        format!("{res:?}"),
    );
}

fn main() {
    // `cargo test -- --list` and friends pass flags; only run on a plain invocation.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let mut s = Suite { failures: Vec::new() };
    exact_norepl(&mut s, dir.path());
    exact_repl(&mut s, dir.path());
    mc_fidelity(&mut s, dir.path());
    oracle_agreement(&mut s);
    hypothesis_verdicts(&mut s, dir.path());
    eq1(&mut s, dir.path());
    determinism(&mut s, dir.path());
    properties(&mut s);
    if s.failures.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: FAILED {}", s.failures.join(", "));
        std::process::exit(1);
    }
}
