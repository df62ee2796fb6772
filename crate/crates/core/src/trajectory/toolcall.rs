//! Tool-call payload serialization and schema validation.
//!
//! A payload is a single JSON object `{"name": ..., "arguments": ...}`.
//! The tool set is closed: `search` takes `{"queries": [string, ...]}`
//! (non-empty, no blank entries) and `browse` takes `{"url": string,
//! "query": string}` with an absolute URL.

use serde::Serialize;
use thiserror::Error;

use super::{Action, Violation, ViolationCode};

pub const TOOL_SEARCH: &str = "search";
pub const TOOL_BROWSE: &str = "browse";

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ToolCallError {
    #[error("unknown tool {0:?}")]
    UnknownTool(String),
    #[error("tool-call schema violation: {0}")]
    SchemaViolation(String),
}

#[derive(Serialize)]
struct Payload<'a> {
    name: &'a str,
    arguments: Arguments<'a>,
}

#[derive(Serialize)]
#[serde(untagged)]
enum Arguments<'a> {
    Search { queries: &'a [String] },
    Browse { url: &'a str, query: &'a str },
}

/// Canonical single-line JSON for an action's tool-call block.
pub fn payload_json(action: &Action) -> String {
    let payload = match action {
        Action::Search { queries } => Payload {
            name: TOOL_SEARCH,
            arguments: Arguments::Search { queries },
        },
        Action::Browse { url, query } => Payload {
            name: TOOL_BROWSE,
            arguments: Arguments::Browse { url, query },
        },
    };
    serde_json::to_string(&payload).expect("tool-call payload serialization cannot fail")
}

/// Checks a payload against the tool schemas and returns every violation
/// found. Positions are offsets within the payload text (0 for
/// payload-level issues).
pub fn check_payload(payload: &str) -> Vec<Violation> {
    let value: serde_json::Value = match serde_json::from_str(payload.trim()) {
        Ok(v) => v,
        Err(e) => {
            return vec![(
                0,
                ViolationCode::MalformedToolCallPayload,
                format!("payload is not a single JSON object: {e}"),
            )]
        }
    };
    let obj = match value.as_object() {
        Some(o) => o,
        None => {
            return vec![(
                0,
                ViolationCode::MalformedToolCallPayload,
                "payload must be a JSON object".into(),
            )]
        }
    };
    let name = match obj.get("name") {
        Some(serde_json::Value::String(s)) => s.as_str(),
        Some(_) => {
            return vec![(
                0,
                ViolationCode::MalformedToolCallPayload,
                "\"name\" must be a string".into(),
            )]
        }
        None => {
            return vec![(
                0,
                ViolationCode::MalformedToolCallPayload,
                "payload missing \"name\"".into(),
            )]
        }
    };
    let args = match obj.get("arguments") {
        Some(serde_json::Value::Object(a)) => a,
        Some(_) => {
            return vec![(
                0,
                ViolationCode::MalformedToolCallPayload,
                "\"arguments\" must be an object".into(),
            )]
        }
        None => {
            return vec![(
                0,
                ViolationCode::MalformedToolCallPayload,
                "payload missing \"arguments\"".into(),
            )]
        }
    };

    let mut violations = Vec::new();
    match name {
        TOOL_SEARCH => match args.get("queries") {
            None => violations.push((
                0,
                ViolationCode::MissingRequiredField,
                "search arguments missing required field \"queries\"".into(),
            )),
            Some(serde_json::Value::Array(items)) => {
                if items.is_empty() {
                    violations.push((
                        0,
                        ViolationCode::SchemaViolation,
                        "\"queries\" must contain at least one query".into(),
                    ));
                }
                for (i, item) in items.iter().enumerate() {
                    match item {
                        serde_json::Value::String(s) if !s.trim().is_empty() => {}
                        serde_json::Value::String(_) => violations.push((
                            0,
                            ViolationCode::SchemaViolation,
                            format!("query {i} is blank"),
                        )),
                        _ => violations.push((
                            0,
                            ViolationCode::SchemaViolation,
                            format!("query {i} must be a string"),
                        )),
                    }
                }
            }
            Some(_) => violations.push((
                0,
                ViolationCode::SchemaViolation,
                "\"queries\" must be an array of strings".into(),
            )),
        },
        TOOL_BROWSE => {
            match args.get("url") {
                None => violations.push((
                    0,
                    ViolationCode::MissingRequiredField,
                    "browse arguments missing required field \"url\"".into(),
                )),
                Some(serde_json::Value::String(u)) => {
                    if u.trim().is_empty() {
                        violations.push((0, ViolationCode::SchemaViolation, "\"url\" is blank".into()));
                    } else if url::Url::parse(u).is_err() {
                        violations.push((
                            0,
                            ViolationCode::SchemaViolation,
                            format!("\"url\" is not an absolute URL: {u:?}"),
                        ));
                    }
                }
                Some(_) => violations.push((
                    0,
                    ViolationCode::SchemaViolation,
                    "\"url\" must be a string".into(),
                )),
            }
            match args.get("query") {
                None => violations.push((
                    0,
                    ViolationCode::MissingRequiredField,
                    "browse arguments missing required field \"query\"".into(),
                )),
                Some(serde_json::Value::String(q)) => {
                    if q.trim().is_empty() {
                        violations.push((0, ViolationCode::SchemaViolation, "\"query\" is blank".into()));
                    }
                }
                Some(_) => violations.push((
                    0,
                    ViolationCode::SchemaViolation,
                    "\"query\" must be a string".into(),
                )),
            }
        }
        other => violations.push((
            0,
            ViolationCode::UnknownTool,
            format!("unknown tool {other:?} (expected \"search\" or \"browse\")"),
        )),
    }
    violations
}

/// Parses a payload into a typed [`Action`].
pub fn parse_tool_call(payload: &str) -> Result<Action, ToolCallError> {
    let violations = check_payload(payload);
    if let Some((_, code, message)) = violations.into_iter().next() {
        return Err(match code {
            ViolationCode::UnknownTool => {
                let value: serde_json::Value = serde_json::from_str(payload.trim()).unwrap_or_default();
                let name = value
                    .get("name")
                    .and_then(|n| n.as_str())
                    .unwrap_or_default()
                    .to_string();
                ToolCallError::UnknownTool(name)
            }
            _ => ToolCallError::SchemaViolation(message),
        });
    }
    let value: serde_json::Value =
        serde_json::from_str(payload.trim()).expect("checked payload parses");
    let name = value["name"].as_str().expect("checked payload has a name");
    let args = &value["arguments"];
    let action = match name {
        TOOL_SEARCH => Action::Search {
            queries: args["queries"]
                .as_array()
                .expect("checked queries array")
                .iter()
                .map(|q| q.as_str().expect("checked query strings").to_string())
                .collect(),
        },
        TOOL_BROWSE => Action::Browse {
            url: args["url"].as_str().expect("checked url").to_string(),
            query: args["query"].as_str().expect("checked query").to_string(),
        },
        _ => unreachable!("unknown tools rejected above"),
    };
    Ok(action)
}
