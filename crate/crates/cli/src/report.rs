use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use tvspec_core::spectrum::Interval;

use crate::config::RunConfig;
use crate::failure::Failure;

/// Pretty JSON with a trailing newline; keys are sorted, so equal inputs
/// give byte-identical files.
pub fn render<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

pub fn with_config(config: &RunConfig, body: Value) -> Value {
    let mut v = body;
    if let Value::Object(map) = &mut v {
        map.insert("config".into(), serde_json::to_value(config).expect("config serializes"));
    }
    v
}

/// Write to `out`, or to stdout when no path is given.
pub fn emit(report: &Value, out: Option<&Path>) -> Result<(), Failure> {
    let text = render(report);
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Input(format!("{}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

/// Per-interval endpoint differences `estimate - target`.
pub fn interval_diff(estimate: &[Interval], targets: &[Interval]) -> Value {
    if estimate.len() != targets.len() {
        return serde_json::json!({
            "count_mismatch": {"estimated": estimate.len(), "targets": targets.len()}
        });
    }
    let rows: Vec<Value> = estimate
        .iter()
        .zip(targets)
        .map(|(e, t)| serde_json::json!({"lo": e.lo - t.lo, "hi": e.hi - t.hi}))
        .collect();
    Value::Array(rows)
}
