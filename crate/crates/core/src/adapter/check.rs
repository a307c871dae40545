//! Protocol conformance checks for an adapter command.

use std::time::Duration;

use serde_json::json;

use crate::fixtures::scene;
use crate::params::{Assignment, ParamKind, Value};

use super::client::{AdapterEndpoint, AdapterError, AdapterProcess};
use super::protocol::{ErrorCode, Reply, Role};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &'static str, result: Result<String, String>) -> Self {
        match result {
            Ok(detail) => CheckOutcome {
                name,
                passed: true,
                detail,
            },
            Err(detail) => CheckOutcome {
                name,
                passed: false,
                detail,
            },
        }
    }
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mark = if self.passed { "pass" } else { "FAIL" };
        if self.detail.is_empty() {
            write!(f, "{mark} {}", self.name)
        } else {
            write!(f, "{mark} {}: {}", self.name, self.detail)
        }
    }
}

const PROBE_SEED: u64 = 7;

/// An assignment that sets the first numeric parameter above its upper bound.
fn out_of_space(process: &AdapterProcess) -> Option<Assignment> {
    let space = process.capabilities().space.as_ref()?;
    let mut a = space.identity_assignment().ok()?;
    for spec in space.specs() {
        match spec.kind {
            ParamKind::Continuous { high, .. } => {
                a.set(spec.name.clone(), Value::Real(high + 1.0));
                return Some(a);
            }
            ParamKind::Integer { high, .. } => {
                a.set(spec.name.clone(), Value::Int(high + 1));
                return Some(a);
            }
            ParamKind::Categorical { .. } => {}
        }
    }
    None
}

fn role_checks(process: &mut AdapterProcess, out: &mut Vec<CheckOutcome>) {
    let probe = scene(PROBE_SEED, 48, 32).quantized();
    let input = match process.stage_image(&probe, "probe") {
        Ok(p) => p,
        Err(e) => {
            out.push(CheckOutcome::new("scratch", Err(e.to_string())));
            return;
        }
    };
    match process.capabilities().role {
        Role::Transform => {
            let space = process.capabilities().space.clone().expect("transform space");
            let identity = space.identity_assignment();
            let result = match &identity {
                Err(_) => Ok("skipped: not every parameter declares an identity".to_string()),
                Ok(a) => {
                    let output = process.scratch_path("identity");
                    match process.transform(&input, a, &output) {
                        Err(e) => Err(e.to_string()),
                        Ok(img) if img == probe => Ok(String::new()),
                        Ok(img) if img.width() != probe.width() || img.height() != probe.height() => Err(format!(
                            "output is {}x{}, input {}x{}",
                            img.width(),
                            img.height(),
                            probe.width(),
                            probe.height()
                        )),
                        Ok(_) => Err("identity output differs from the input".into()),
                    }
                }
            };
            out.push(CheckOutcome::new("identity-transform", result));

            let a = identity.unwrap_or_else(|_| {
                // midpoint of every parameter
                let mut a = Assignment::default();
                for spec in space.specs() {
                    let v = match &spec.kind {
                        ParamKind::Continuous { low, high } => Value::Real(0.5 * (low + high)),
                        ParamKind::Integer { low, high } => Value::Int(low + (high - low) / 2),
                        ParamKind::Categorical { choices } => Value::Choice(choices[0].clone()),
                    };
                    a.set(spec.name.clone(), v);
                }
                a
            });
            let (p1, p2) = (process.scratch_path("det"), process.scratch_path("det"));
            let result = process
                .transform(&input, &a, &p1)
                .and_then(|_| process.transform(&input, &a, &p2))
                .map_err(|e| e.to_string())
                .and_then(|_| {
                    let (b1, b2) = (std::fs::read(&p1), std::fs::read(&p2));
                    match (b1, b2) {
                        (Ok(b1), Ok(b2)) if b1 == b2 => Ok(String::new()),
                        (Ok(_), Ok(_)) => Err("two identical requests produced different files".into()),
                        _ => Err("output file missing".into()),
                    }
                });
            out.push(CheckOutcome::new("deterministic", result));

            if let Some(bad) = out_of_space(process) {
                let output = process.scratch_path("bad");
                let request = json!({
                    "type": "transform",
                    "input": input.display().to_string(),
                    "output": output.display().to_string(),
                    "assignment": bad,
                });
                let result = match process.exchange_raw(request) {
                    Ok(Reply::Error { .. }) => Ok(String::new()),
                    Ok(other) => Err(format!("accepted an out-of-bounds assignment: {}", other.to_line())),
                    Err(e) => Err(e.to_string()),
                };
                out.push(CheckOutcome::new("rejects-invalid-assignment", result));
            }
        }
        Role::Encoder => {
            let first = process.encode(&input);
            out.push(CheckOutcome::new(
                "descriptor",
                first
                    .as_ref()
                    .map(|d| format!("{} finite values", d.len()))
                    .map_err(|e| e.to_string()),
            ));
            let result = match (&first, process.encode(&input)) {
                (Ok(a), Ok(b)) if *a == b => Ok(String::new()),
                (Ok(_), Ok(_)) => Err("two identical requests produced different descriptors".into()),
                (_, Err(e)) => Err(e.to_string()),
                (Err(_), Ok(_)) => Err("first request failed".into()),
            };
            out.push(CheckOutcome::new("deterministic", result));
        }
        Role::Scorer => {
            let first = process.score(&input);
            out.push(CheckOutcome::new(
                "score",
                first.as_ref().map(|v| format!("{v}")).map_err(|e| e.to_string()),
            ));
            let result = match (&first, process.score(&input)) {
                (Ok(a), Ok(b)) if a.to_bits() == b.to_bits() => Ok(String::new()),
                (Ok(a), Ok(b)) => Err(format!("scores differ: {a} vs {b}")),
                (_, Err(e)) => Err(e.to_string()),
                (Err(_), Ok(_)) => Err("first request failed".into()),
            };
            out.push(CheckOutcome::new("deterministic", result));
        }
    }
}

/// Runs every conformance check against the adapter launched by `command`.
///
/// With `role = Some(_)` the declared role must match. Checks that cannot
/// run because an earlier one failed are not reported.
pub fn check_adapter(command: &str, role: Option<Role>, timeout: Duration) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    let endpoint = match AdapterEndpoint::parse(command, role.unwrap_or(Role::Transform)) {
        Ok(e) => e.with_timeout(timeout),
        Err(e) => {
            out.push(CheckOutcome::new("command", Err(e.to_string())));
            return out;
        }
    };
    let mut process = match AdapterProcess::launch_any(&endpoint) {
        Ok(p) => p,
        Err(e) => {
            out.push(CheckOutcome::new("hello", Err(e.to_string())));
            return out;
        }
    };
    let caps = process.capabilities().clone();
    out.push(CheckOutcome::new("hello", Ok(format!("{} {} ({})", caps.role, caps.id(), match caps.role {
        Role::Transform => format!("{} parameters", caps.space.as_ref().map_or(0, |s| s.len())),
        Role::Encoder => format!("{} values", caps.descriptor_len.unwrap_or(0)),
        Role::Scorer => "scalar".to_string(),
    }))));
    if let Some(expected) = role {
        let result = if caps.role == expected {
            Ok(String::new())
        } else {
            Err(format!("declared {}, expected {expected}", caps.role))
        };
        out.push(CheckOutcome::new("role", result));
    }

    role_checks(&mut process, &mut out);

    let result = match process.exchange_raw(json!({ "type": "frobnicate" })) {
        Ok(Reply::Error {
            code: ErrorCode::BadRequest,
            ..
        }) => Ok(String::new()),
        Ok(Reply::Error { code, .. }) => Err(format!("error code {code}, expected bad_request")),
        Ok(other) => Err(format!("unexpected reply {}", other.to_line())),
        Err(AdapterError::Remote {
            code: ErrorCode::BadRequest,
            ..
        }) => Err("error reply did not echo the request id".into()),
        Err(e) => Err(e.to_string()),
    };
    out.push(CheckOutcome::new("unknown-request", result));

    let alive = process.is_alive();
    let exited = process.shutdown();
    out.push(CheckOutcome::new(
        "shutdown",
        if exited {
            Ok(String::new())
        } else if !alive {
            Err("adapter was no longer running".into())
        } else {
            Err("adapter did not exit after shutdown".into())
        },
    ));
    out
}
