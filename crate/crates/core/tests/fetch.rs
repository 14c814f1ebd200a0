mod common;

use std::time::{Duration, UNIX_EPOCH};

use resilsim::fetch::fetch_dependencies;
use resilsim::graph::parse_dependencies_value;
use resilsim::Error;

use common::mock_http;

const RECORDS: &str = r#"{"data":[
  {"parent":"nginx-web-server","child":"home-timeline-service","callCount":40},
  {"parent":"home-timeline-service","child":"post-storage-service","callCount":38},
  {"parent":"post-storage-service","child":"post-storage-mongodb","callCount":38}
]}"#;

fn end() -> std::time::SystemTime {
    UNIX_EPOCH + Duration::from_millis(1_700_000_000_000)
}

#[test]
fn fetches_and_parses_records() {
    let (url, server) = mock_http(200, RECORDS, 1);
    let doc = fetch_dependencies(&url, Duration::from_secs(3600), end()).unwrap();
    let g = parse_dependencies_value(&doc).unwrap();
    assert_eq!(g.node_count(), 4);
    assert_eq!(g.edge_count(), 3);
    assert_eq!(
        g.call_count("nginx-web-server", "home-timeline-service"),
        Some(40)
    );
    let seen = server.join().unwrap();
    assert_eq!(
        seen,
        ["GET /api/dependencies?endTs=1700000000000&lookback=3600000 HTTP/1.1"]
    );
}

#[test]
fn bare_array_is_accepted() {
    let (url, server) = mock_http(200, r#"[{"parent":"a","child":"b","callCount":1}]"#, 1);
    let doc = fetch_dependencies(&url, Duration::from_secs(60), end()).unwrap();
    assert_eq!(parse_dependencies_value(&doc).unwrap().edge_count(), 1);
    server.join().unwrap();
}

#[test]
fn server_error_is_transport_error() {
    let (url, server) = mock_http(500, "{}", 1);
    let err = fetch_dependencies(&url, Duration::from_secs(60), end()).unwrap_err();
    assert!(
        matches!(
            err,
            Error::Transport {
                status: Some(500),
                ..
            }
        ),
        "{err:?}"
    );
    assert_eq!(err.exit_code(), 1);
    server.join().unwrap();
}

#[test]
fn unreachable_host_is_transport_error() {
    // Bind then drop to get a port with nothing listening.
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let err = fetch_dependencies(
        &format!("http://127.0.0.1:{port}"),
        Duration::from_secs(60),
        end(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Transport { status: None, .. }), "{err:?}");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn garbage_body_is_rejected() {
    let (url, server) = mock_http(200, "<html>not json</html>", 1);
    let err = fetch_dependencies(&url, Duration::from_secs(60), end()).unwrap_err();
    assert!(err.to_string().contains("unparseable"), "{err}");
    assert_eq!(err.exit_code(), 1);
    server.join().unwrap();
}
