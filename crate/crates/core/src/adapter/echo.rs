//! Reference adapters used as conformance fixtures.
//!
//! `echo-transform` applies the builtin chain, `echo-encoder` returns the
//! builtin descriptor, and `echo-scorer` returns the builtin L1 distance to a
//! reference image given on its command line. Each can be told to misbehave
//! with `--fault MODE` so the engine's error paths can be exercised.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde_json::Value as Json;

use crate::metric::{distance, encode_builtin, Norm, StyleDescriptor, BUILTIN_DIM};
use crate::params::{describe_violations, Assignment};
use crate::transforms::{load_image, save_image, PhotoChain};

use super::protocol::{real_to_wire, ErrorCode, Hello, Reply, Request, Role};

pub const ECHO_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Ways a reference adapter can be told to misbehave.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Never sends a hello.
    Silent,
    /// Sends a hello that is not valid JSON.
    BadHello,
    /// Declares the wrong role.
    WrongRole,
    /// Exits on the first request.
    Crash,
    /// Never answers requests.
    Hang,
    /// Answers every request with an `unsupported` error.
    Error,
    /// Returns NaN (encoder, scorer) or writes a corrupt PNG (transform).
    Nan,
    /// Returns one value fewer than declared (encoder).
    Short,
    /// Answers requests with the wrong id first, then the right one.
    StaleIds,
}

impl std::str::FromStr for Fault {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "silent" => Fault::Silent,
            "bad-hello" => Fault::BadHello,
            "wrong-role" => Fault::WrongRole,
            "crash" => Fault::Crash,
            "hang" => Fault::Hang,
            "error" => Fault::Error,
            "nan" => Fault::Nan,
            "short" => Fault::Short,
            "stale-ids" => Fault::StaleIds,
            other => return Err(format!("unknown fault '{other}'")),
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct EchoOptions {
    pub fault: Option<Fault>,
    /// Reference image, scorer role only.
    pub reference: Option<PathBuf>,
}

impl EchoOptions {
    /// Parses `--fault MODE` and `--reference PATH`.
    pub fn from_args(args: impl IntoIterator<Item = String>) -> Result<Self, String> {
        let mut opts = EchoOptions::default();
        let mut it = args.into_iter();
        while let Some(arg) = it.next() {
            match arg.as_str() {
                "--fault" => {
                    let v = it.next().ok_or("--fault needs a value")?;
                    opts.fault = Some(v.parse()?);
                }
                "--reference" => {
                    opts.reference = Some(it.next().ok_or("--reference needs a value")?.into());
                }
                other => return Err(format!("unexpected argument '{other}'")),
            }
        }
        Ok(opts)
    }
}

pub fn echo_name(role: Role) -> &'static str {
    match role {
        Role::Transform => "echo-transform",
        Role::Encoder => "echo-encoder",
        Role::Scorer => "echo-scorer",
    }
}

fn hello_for(role: Role) -> Hello {
    let name = echo_name(role);
    match role {
        Role::Transform => Hello::transform(name, ECHO_VERSION, PhotoChain::builtin().space()),
        Role::Encoder => Hello::encoder(name, ECHO_VERSION, BUILTIN_DIM),
        Role::Scorer => Hello::scorer(name, ECHO_VERSION),
    }
}

fn error(id: Option<u64>, code: ErrorCode, message: impl Into<String>) -> Reply {
    Reply::Error {
        id,
        code,
        message: message.into(),
    }
}

struct Echo {
    role: Role,
    fault: Option<Fault>,
    reference: Option<StyleDescriptor>,
}

impl Echo {
    fn handle(&self, request: Request) -> Reply {
        let id = request.id();
        if self.fault == Some(Fault::Error) {
            return error(Some(id), ErrorCode::Unsupported, "unsupported param");
        }
        match (self.role, request) {
            (
                Role::Transform,
                Request::Transform {
                    input,
                    output,
                    assignment,
                    ..
                },
            ) => self.transform(id, Path::new(&input), Path::new(&output), &assignment),
            (Role::Encoder, Request::Encode { input, .. }) => match load_image(Path::new(&input)) {
                Err(e) => error(Some(id), ErrorCode::BadRequest, e.to_string()),
                Ok(img) => match encode_builtin(&img) {
                    Err(e) => error(Some(id), ErrorCode::BadRequest, e.to_string()),
                    Ok(d) => {
                        let mut values: Vec<Json> = d.values.iter().map(|v| Json::from(*v)).collect();
                        match self.fault {
                            Some(Fault::Nan) => values[0] = real_to_wire(f64::NAN),
                            Some(Fault::Short) => {
                                values.pop();
                            }
                            _ => {}
                        }
                        Reply::Descriptor { id, values }
                    }
                },
            },
            (Role::Scorer, Request::Score { input, .. }) => {
                let reference = self.reference.as_ref().expect("scorer has a reference");
                match load_image(Path::new(&input)).map_err(|e| e.to_string()).and_then(|img| {
                    let d = encode_builtin(&img).map_err(|e| e.to_string())?;
                    distance(&d, reference, Norm::L1, None).map_err(|e| e.to_string())
                }) {
                    Err(e) => error(Some(id), ErrorCode::BadRequest, e),
                    Ok(v) => {
                        let v = if self.fault == Some(Fault::Nan) { f64::NAN } else { v };
                        Reply::Score {
                            id,
                            value: real_to_wire(v),
                        }
                    }
                }
            }
            (role, other) => error(
                Some(id),
                ErrorCode::Unsupported,
                format!("{role} adapter cannot serve {}", request_kind(&other)),
            ),
        }
    }

    fn transform(&self, id: u64, input: &Path, output: &Path, a: &Assignment) -> Reply {
        let chain = PhotoChain::builtin();
        let violations = chain.space().validate(a);
        if !violations.is_empty() {
            return error(Some(id), ErrorCode::BadRequest, describe_violations(&violations));
        }
        let img = match load_image(input) {
            Ok(img) => img,
            Err(e) => return error(Some(id), ErrorCode::BadRequest, e.to_string()),
        };
        if self.fault == Some(Fault::Nan) {
            return match std::fs::write(output, b"not a png") {
                Ok(()) => Reply::Ok { id },
                Err(e) => error(Some(id), ErrorCode::Internal, e.to_string()),
            };
        }
        match chain.apply(&img, a) {
            Err(e) => error(Some(id), ErrorCode::BadRequest, e.to_string()),
            Ok(out) => match save_image(&out, output) {
                Ok(()) => Reply::Ok { id },
                Err(e) => error(Some(id), ErrorCode::Internal, e.to_string()),
            },
        }
    }
}

fn request_kind(r: &Request) -> &'static str {
    match r {
        Request::Transform { .. } => "transform",
        Request::Encode { .. } => "encode",
        Request::Score { .. } => "score",
        Request::Shutdown { .. } => "shutdown",
    }
}

fn emit(out: &mut impl Write, line: &str) -> std::io::Result<()> {
    writeln!(out, "{line}")?;
    out.flush()
}

/// Runs a reference adapter over the given streams until `shutdown` or end
/// of input. Returns the process exit status.
pub fn serve(role: Role, opts: &EchoOptions, input: impl BufRead, mut output: impl Write) -> i32 {
    let reference = match (role, &opts.reference) {
        (Role::Scorer, None) => {
            eprintln!("echo-scorer needs --reference PATH");
            return 2;
        }
        (Role::Scorer, Some(path)) => match load_image(path).map_err(|e| e.to_string()).and_then(|img| {
            encode_builtin(&img).map_err(|e| e.to_string())
        }) {
            Ok(d) => Some(d),
            Err(e) => {
                eprintln!("cannot read reference: {e}");
                return 2;
            }
        },
        _ => None,
    };
    let echo = Echo {
        role,
        fault: opts.fault,
        reference,
    };

    let hello = match opts.fault {
        Some(Fault::Silent) => None,
        Some(Fault::BadHello) => Some("hello, world".to_string()),
        Some(Fault::WrongRole) => {
            let wrong = if role == Role::Encoder { Role::Transform } else { Role::Encoder };
            Some(hello_for(wrong).to_line())
        }
        _ => Some(hello_for(role).to_line()),
    };
    if let Some(line) = hello {
        if emit(&mut output, &line).is_err() {
            return 1;
        }
    }

    for line in input.lines() {
        let Ok(line) = line else { return 1 };
        if line.trim().is_empty() {
            continue;
        }
        let request: Request = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                let id = serde_json::from_str::<Json>(&line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(Json::as_u64));
                let reply = error(id, ErrorCode::BadRequest, format!("cannot parse request: {e}"));
                if emit(&mut output, &reply.to_line()).is_err() {
                    return 1;
                }
                continue;
            }
        };
        if let Request::Shutdown { .. } = request {
            return 0;
        }
        match opts.fault {
            Some(Fault::Silent) => continue,
            Some(Fault::Crash) => {
                eprintln!("{}: simulated crash", echo_name(role));
                return 3;
            }
            Some(Fault::Hang) => loop {
                std::thread::sleep(Duration::from_secs(3600));
            },
            Some(Fault::StaleIds) if request.id() > 0 => {
                let stale = Reply::Ok { id: request.id() - 1 };
                if emit(&mut output, &stale.to_line()).is_err() {
                    return 1;
                }
            }
            _ => {}
        }
        let reply = echo.handle(request);
        if emit(&mut output, &reply.to_line()).is_err() {
            return 1;
        }
    }
    0
}

/// Entry point shared by the bundled adapter binaries.
pub fn main_for(role: Role) -> std::process::ExitCode {
    let opts = match EchoOptions::from_args(std::env::args().skip(1)) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{}: {e}", echo_name(role));
            return std::process::ExitCode::from(2);
        }
    };
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let code = serve(role, &opts, stdin.lock(), stdout.lock());
    std::process::ExitCode::from(code as u8)
}
