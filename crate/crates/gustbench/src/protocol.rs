//! Wire format between a trainer and an environment session.
//!
//! Each request is one JSON object on one line, selected by its `cmd`
//! field. Each request is answered by exactly one single-line JSON object,
//! in order. Floats are written in their shortest round-trip form, so a
//! value read back is bit-identical to the one sent.

use gustbench_core::control::ControllerKind;
use gustbench_core::env::StepInfo;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const PROTOCOL_VERSION: u32 = 1;

/// Accepted values of `cmd`.
pub const COMMANDS: [&str; 5] = ["hello", "configure", "reset", "step", "close"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum Request {
    /// Version handshake. A client may name the version it speaks.
    Hello {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        version: Option<u32>,
    },
    /// Selects the scenario, controller and base seed for later resets.
    Configure {
        scenario: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        controller: Option<ControllerKind>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// Starts an episode. Without a seed the session uses its base seed
    /// plus the number of earlier resets.
    Reset {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// Raw policy output in the unit box; scaling happens server side.
    Step { action: Vec<f64> },
    Close,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    /// Not JSON, not an object, or fields of the wrong type.
    Malformed,
    UnknownCommand,
    UnsupportedVersion,
    UnknownScenario,
    InvalidConfig,
    NotReset,
    EpisodeFinished,
    BadAction,
    /// The server is at its session limit.
    Busy,
    Internal,
}

/// One response line. Variants are told apart by their field sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Response {
    Error {
        error: ErrorCode,
        detail: String,
    },
    Hello {
        version: u32,
        obs_dim: usize,
        act_dim: usize,
    },
    Step {
        obs: Vec<f64>,
        reward: f64,
        done: bool,
        info: StepInfo,
    },
    Reset {
        obs: Vec<f64>,
        seed: u64,
    },
    Configured {
        scenario: String,
        controller: ControllerKind,
        n_gates: usize,
        seed: u64,
    },
    Closed {
        closed: bool,
    },
}

impl Response {
    pub fn error(code: ErrorCode, detail: impl Into<String>) -> Self {
        Response::Error {
            error: code,
            detail: detail.into(),
        }
    }

    pub fn error_code(&self) -> Option<ErrorCode> {
        match self {
            Response::Error { error, .. } => Some(*error),
            _ => None,
        }
    }

    /// The response as one line, without the trailing newline.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("responses contain only finite numbers and strings")
    }
}

impl Request {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("requests always serialize")
    }
}

/// Parses one request line, or returns the error response it earns.
#[allow(clippy::result_large_err)]
pub fn parse_request(line: &str) -> Result<Request, Response> {
    let value: Value = serde_json::from_str(line)
        .map_err(|e| Response::error(ErrorCode::Malformed, format!("invalid JSON: {e}")))?;
    let cmd = match value.as_object().map(|o| o.get("cmd")) {
        None => return Err(Response::error(ErrorCode::Malformed, "request must be a JSON object")),
        Some(None) => return Err(Response::error(ErrorCode::Malformed, "missing \"cmd\" field")),
        Some(Some(Value::String(c))) => c.clone(),
        Some(Some(_)) => return Err(Response::error(ErrorCode::Malformed, "\"cmd\" must be a string")),
    };
    if !COMMANDS.contains(&cmd.as_str()) {
        return Err(Response::error(
            ErrorCode::UnknownCommand,
            format!("unknown command '{cmd}'"),
        ));
    }
    serde_json::from_value(value)
        .map_err(|e| Response::error(ErrorCode::Malformed, format!("bad '{cmd}' request: {e}")))
}
