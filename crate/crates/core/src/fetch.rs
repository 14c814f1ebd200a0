//! Client for a tracing backend's `/api/dependencies` endpoint.

use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde_json::Value;

use crate::error::{Error, Result};

/// Builds `<base>/api/dependencies?endTs=<ms>&lookback=<ms>`.
pub fn dependencies_url(base_url: &str, lookback: Duration, end_ts: SystemTime) -> String {
    let end_ms = end_ts.duration_since(UNIX_EPOCH).unwrap_or_default().as_millis();
    format!(
        "{}/api/dependencies?endTs={}&lookback={}",
        base_url.trim_end_matches('/'),
        end_ms,
        lookback.as_millis()
    )
}

/// Fetches the raw dependencies document. Jaeger wraps the records as
/// `{"data": [...]}`; the envelope is stripped, the records are returned
/// untouched.
pub fn fetch_dependencies(base_url: &str, lookback: Duration, end_ts: SystemTime) -> Result<Value> {
    if lookback.is_zero() {
        return Err(Error::Argument("lookback must be positive".into()));
    }
    let url = dependencies_url(base_url, lookback, end_ts);
    let transport = |status: Option<u16>, message: String| Error::Transport {
        url: url.clone(),
        status,
        message,
    };
    let mut resp = ureq::get(&url).call().map_err(|e| match e {
        ureq::Error::StatusCode(code) => transport(Some(code), format!("HTTP status {code}")),
        other => transport(None, other.to_string()),
    })?;
    let status = resp.status().as_u16();
    let body = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| transport(Some(status), e.to_string()))?;
    let value: Value =
        serde_json::from_str(&body).map_err(|e| transport(Some(status), format!("unparseable body: {e}")))?;
    match value {
        Value::Array(_) => Ok(value),
        Value::Object(mut obj) => match obj.remove("data") {
            Some(data @ Value::Array(_)) => Ok(data),
            _ => Err(transport(Some(status), "no `data` array in response".into())),
        },
        _ => Err(transport(Some(status), "response is not a JSON array".into())),
    }
}
