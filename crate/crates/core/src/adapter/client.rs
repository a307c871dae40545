//! Engine side of the protocol: launches a child and talks to it.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde_json::Value as Json;

use crate::metric::StyleDescriptor;
use crate::params::{describe_violations, Assignment, ParamSpace};
use crate::transforms::{load_image, save_image, ImageBuf};

use super::protocol::{wire_real, ErrorCode, Hello, Reply, Request, Role, PROTOCOL_VERSION};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
const STDERR_TAIL_LINES: usize = 20;

#[derive(Debug, thiserror::Error)]
pub enum AdapterError {
    #[error("invalid adapter command: {0}")]
    BadCommand(String),
    #[error("cannot launch '{command}': {message}")]
    Launch { command: String, message: String },
    #[error("'{command}' sent no hello within {secs:.1}s")]
    HelloTimeout { command: String, secs: f64 },
    #[error("'{command}' sent a malformed hello: {message}")]
    MalformedHello { command: String, message: String },
    #[error("'{command}' declared role {actual}, expected {expected}")]
    RoleMismatch { command: String, expected: Role, actual: Role },
    #[error("'{command}' timed out after {secs:.1}s on request {id}")]
    Timeout { command: String, id: u64, secs: f64 },
    #[error("'{command}' exited unexpectedly{}", fmt_tail(.stderr))]
    Crashed { command: String, stderr: String },
    #[error("'{command}' replied {code}: {message}")]
    Remote { command: String, code: ErrorCode, message: String },
    #[error("'{command}' broke protocol: {message}")]
    Protocol { command: String, message: String },
    #[error("'{command}' output unusable: {message}")]
    Output { command: String, message: String },
    #[error("'{command}' returned {got} values, declared {expected}")]
    DescriptorLength { command: String, expected: usize, got: usize },
    #[error("'{command}' returned a non-finite value")]
    NonFinite { command: String },
    #[error("assignment rejected by the declared space: {0}")]
    InvalidAssignment(String),
    #[error("scratch directory: {0}")]
    Scratch(String),
}

fn fmt_tail(stderr: &str) -> String {
    if stderr.is_empty() {
        String::new()
    } else {
        format!("; stderr: {stderr}")
    }
}

impl AdapterError {
    /// Short machine-readable category.
    pub fn category(&self) -> &'static str {
        match self {
            AdapterError::BadCommand(_) | AdapterError::Launch { .. } => "adapter-launch",
            AdapterError::HelloTimeout { .. } | AdapterError::Timeout { .. } => "adapter-timeout",
            AdapterError::MalformedHello { .. } | AdapterError::RoleMismatch { .. } => "adapter-handshake",
            AdapterError::Crashed { .. } => "adapter-crash",
            AdapterError::Remote { .. } => "adapter-error",
            AdapterError::Protocol { .. }
            | AdapterError::DescriptorLength { .. }
            | AdapterError::NonFinite { .. } => "adapter-protocol",
            AdapterError::Output { .. } => "adapter-output",
            AdapterError::InvalidAssignment(_) => "invalid-assignment",
            AdapterError::Scratch(_) => "adapter-io",
        }
    }
}

/// How to launch an adapter and what to expect from it.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterEndpoint {
    pub argv: Vec<String>,
    pub role: Role,
    pub timeout: Duration,
}

impl AdapterEndpoint {
    /// Splits `command` with shell quoting rules.
    pub fn parse(command: &str, role: Role) -> Result<Self, AdapterError> {
        let argv = shlex::split(command).ok_or_else(|| AdapterError::BadCommand(command.into()))?;
        if argv.is_empty() {
            return Err(AdapterError::BadCommand("empty command".into()));
        }
        Ok(AdapterEndpoint {
            argv,
            role,
            timeout: DEFAULT_TIMEOUT,
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn command_line(&self) -> String {
        shlex::try_join(self.argv.iter().map(String::as_str)).unwrap_or_else(|_| self.argv.join(" "))
    }
}

/// What a child declared in its hello.
#[derive(Debug, Clone, PartialEq)]
pub struct Capabilities {
    pub role: Role,
    pub name: String,
    pub version: String,
    pub space: Option<ParamSpace>,
    pub descriptor_len: Option<usize>,
}

impl Capabilities {
    /// `name@version`, used as the engine id or metric id.
    pub fn id(&self) -> String {
        format!("{}@{}", self.name, self.version)
    }

    fn from_hello(hello: Hello, command: &str) -> Result<Self, AdapterError> {
        let bad = |message: String| AdapterError::MalformedHello {
            command: command.into(),
            message,
        };
        if hello.protocol != PROTOCOL_VERSION {
            return Err(bad(format!("protocol {} (supported: {PROTOCOL_VERSION})", hello.protocol)));
        }
        if hello.name.is_empty() || hello.version.is_empty() {
            return Err(bad("name and version must be non-empty".into()));
        }
        let space = hello.param_space().map_err(|e| bad(format!("space: {e}")))?;
        match hello.role {
            Role::Transform if space.is_none() => return Err(bad("transform hello needs a space".into())),
            Role::Encoder if !matches!(hello.descriptor_len, Some(n) if n > 0) => {
                return Err(bad("encoder hello needs a positive descriptor_len".into()))
            }
            _ => {}
        }
        Ok(Capabilities {
            role: hello.role,
            name: hello.name,
            version: hello.version,
            space,
            descriptor_len: hello.descriptor_len,
        })
    }
}

enum Line {
    Text(String),
    Eof,
}

/// A running adapter child.
///
/// Requests are strictly sequential. Each wait for a reply is bounded by the
/// endpoint timeout; a child that times out is killed, and a crashed or
/// killed child makes every later call fail fast with
/// [`AdapterError::Crashed`].
pub struct AdapterProcess {
    endpoint: AdapterEndpoint,
    command: String,
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<Line>,
    stderr_tail: Arc<Mutex<VecDeque<String>>>,
    stderr_reader: Option<thread::JoinHandle<()>>,
    caps: Capabilities,
    next_id: u64,
    alive: bool,
    scratch: tempfile::TempDir,
    scratch_seq: u64,
}

impl std::fmt::Debug for AdapterProcess {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AdapterProcess")
            .field("command", &self.command)
            .field("caps", &self.caps)
            .field("alive", &self.alive)
            .finish()
    }
}

impl AdapterProcess {
    /// Launches the child and waits for its hello, which must declare the
    /// endpoint's role.
    pub fn launch(endpoint: &AdapterEndpoint) -> Result<Self, AdapterError> {
        Self::spawn(endpoint, true)
    }

    /// Like [`launch`](Self::launch) but accepts whatever role the child
    /// declares.
    pub fn launch_any(endpoint: &AdapterEndpoint) -> Result<Self, AdapterError> {
        Self::spawn(endpoint, false)
    }

    fn spawn(endpoint: &AdapterEndpoint, check_role: bool) -> Result<Self, AdapterError> {
        let command = endpoint.command_line();
        let mut child = Command::new(&endpoint.argv[0])
            .args(&endpoint.argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| AdapterError::Launch {
                command: command.clone(),
                message: e.to_string(),
            })?;

        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            loop {
                let mut buf = String::new();
                match reader.read_line(&mut buf) {
                    Ok(0) | Err(_) => {
                        let _ = tx.send(Line::Eof);
                        return;
                    }
                    Ok(_) => {
                        if tx.send(Line::Text(buf)).is_err() {
                            return;
                        }
                    }
                }
            }
        });

        let stderr_tail = Arc::new(Mutex::new(VecDeque::new()));
        let stderr = child.stderr.take().expect("piped stderr");
        let tail = Arc::clone(&stderr_tail);
        let stderr_reader = thread::spawn(move || {
            for line in BufReader::new(stderr).lines().map_while(Result::ok) {
                let mut t = tail.lock().expect("stderr tail lock");
                if t.len() == STDERR_TAIL_LINES {
                    t.pop_front();
                }
                t.push_back(line);
            }
        });

        let scratch = tempfile::Builder::new()
            .prefix("partran-adapter-")
            .tempdir()
            .map_err(|e| AdapterError::Scratch(e.to_string()))?;

        let stdin = child.stdin.take();
        let mut proc = AdapterProcess {
            endpoint: endpoint.clone(),
            command,
            child,
            stdin,
            lines,
            stderr_tail,
            stderr_reader: Some(stderr_reader),
            caps: Capabilities {
                role: endpoint.role,
                name: String::new(),
                version: String::new(),
                space: None,
                descriptor_len: None,
            },
            next_id: 1,
            alive: true,
            scratch,
            scratch_seq: 0,
        };
        let hello = proc.await_hello()?;
        let caps = Capabilities::from_hello(hello, &proc.command)?;
        if check_role && caps.role != endpoint.role {
            proc.kill();
            return Err(AdapterError::RoleMismatch {
                command: proc.command.clone(),
                expected: endpoint.role,
                actual: caps.role,
            });
        }
        proc.caps = caps;
        Ok(proc)
    }

    pub fn capabilities(&self) -> &Capabilities {
        &self.caps
    }

    pub fn endpoint(&self) -> &AdapterEndpoint {
        &self.endpoint
    }

    pub fn is_alive(&self) -> bool {
        self.alive
    }

    /// Directory shared with the child for image payloads.
    pub fn scratch_dir(&self) -> &Path {
        self.scratch.path()
    }

    /// A fresh path inside the scratch directory.
    pub fn scratch_path(&mut self, stem: &str) -> PathBuf {
        self.scratch_seq += 1;
        self.scratch.path().join(format!("{stem}-{}.png", self.scratch_seq))
    }

    fn stderr_text(&mut self) -> String {
        // Give the reader a moment to drain what the child wrote before it
        // exited. A grandchild holding the pipe open must not block us.
        if let Some(reader) = self.stderr_reader.take() {
            let deadline = Instant::now() + Duration::from_millis(500);
            while !reader.is_finished() && Instant::now() < deadline {
                thread::sleep(Duration::from_millis(2));
            }
            if reader.is_finished() {
                let _ = reader.join();
            }
        }
        let tail = self.stderr_tail.lock().expect("stderr tail lock");
        tail.iter().cloned().collect::<Vec<_>>().join(" | ")
    }

    fn crashed(&mut self) -> AdapterError {
        self.kill();
        AdapterError::Crashed {
            command: self.command.clone(),
            stderr: self.stderr_text(),
        }
    }

    fn kill(&mut self) {
        if self.alive {
            self.alive = false;
            self.stdin = None;
            let _ = self.child.kill();
            let _ = self.child.wait();
        }
    }

    fn await_hello(&mut self) -> Result<Hello, AdapterError> {
        let deadline = Instant::now() + self.endpoint.timeout;
        loop {
            let remaining = deadline.saturating_duration_since(Instant::now());
            match self.lines.recv_timeout(remaining) {
                Ok(Line::Text(line)) => {
                    if line.trim().is_empty() {
                        continue;
                    }
                    let parsed: Result<Reply, _> = serde_json::from_str(&line);
                    return match parsed {
                        Ok(Reply::Hello(h)) => Ok(h),
                        Ok(other) => {
                            self.kill();
                            Err(AdapterError::MalformedHello {
                                command: self.command.clone(),
                                message: format!("first message was not a hello: {}", other.to_line()),
                            })
                        }
                        Err(e) => {
                            self.kill();
                            Err(AdapterError::MalformedHello {
                                command: self.command.clone(),
                                message: e.to_string(),
                            })
                        }
                    };
                }
                Ok(Line::Eof) | Err(RecvTimeoutError::Disconnected) => return Err(self.crashed()),
                Err(RecvTimeoutError::Timeout) => {
                    self.kill();
                    return Err(AdapterError::HelloTimeout {
                        command: self.command.clone(),
                        secs: self.endpoint.timeout.as_secs_f64(),
                    });
                }
            }
        }
    }

    fn protocol_error(&mut self, message: String) -> AdapterError {
        self.kill();
        AdapterError::Protocol {
            command: self.command.clone(),
            message,
        }
    }

    /// Sends one raw JSON request object (an `id` is inserted) and waits for
    /// the reply carrying that id.
    pub fn exchange_raw(&mut self, mut request: Json) -> Result<Reply, AdapterError> {
        if !self.alive {
            return Err(AdapterError::Crashed {
                command: self.command.clone(),
                stderr: "adapter is no longer running".into(),
            });
        }
        let id = self.next_id;
        self.next_id += 1;
        if let Some(obj) = request.as_object_mut() {
            obj.insert("id".into(), Json::from(id));
        }
        let line = request.to_string();
        let stdin = self.stdin.as_mut().expect("stdin open while alive");
        if writeln!(stdin, "{line}").and_then(|_| stdin.flush()).is_err() {
            return Err(self.crashed());
        }

        let deadline = Instant::now() + self.endpoint.timeout;
        loop {
            let remaining = deadline.saturating_duration_since(Instant::now());
            match self.lines.recv_timeout(remaining) {
                Ok(Line::Text(text)) => {
                    if text.trim().is_empty() {
                        continue;
                    }
                    let reply: Reply = match serde_json::from_str(&text) {
                        Ok(r) => r,
                        Err(e) => return Err(self.protocol_error(format!("unparseable reply: {e}"))),
                    };
                    match reply.id() {
                        Some(rid) if rid == id => return Ok(reply),
                        // a late answer to an earlier request
                        Some(rid) if rid < id => continue,
                        Some(rid) => return Err(self.protocol_error(format!("reply for unknown id {rid}"))),
                        None => match reply {
                            Reply::Error { code, message, .. } => {
                                return Err(AdapterError::Remote {
                                    command: self.command.clone(),
                                    code,
                                    message,
                                })
                            }
                            _ => return Err(self.protocol_error("reply without id".into())),
                        },
                    }
                }
                Ok(Line::Eof) | Err(RecvTimeoutError::Disconnected) => return Err(self.crashed()),
                Err(RecvTimeoutError::Timeout) => {
                    self.kill();
                    return Err(AdapterError::Timeout {
                        command: self.command.clone(),
                        id,
                        secs: self.endpoint.timeout.as_secs_f64(),
                    });
                }
            }
        }
    }

    fn exchange(&mut self, request: Request) -> Result<Reply, AdapterError> {
        let json = serde_json::to_value(&request).expect("request serializes");
        match self.exchange_raw(json)? {
            Reply::Error { code, message, .. } => Err(AdapterError::Remote {
                command: self.command.clone(),
                code,
                message,
            }),
            other => Ok(other),
        }
    }

    fn require_role(&self, role: Role) -> Result<(), AdapterError> {
        if self.caps.role == role {
            Ok(())
        } else {
            Err(AdapterError::RoleMismatch {
                command: self.command.clone(),
                expected: role,
                actual: self.caps.role,
            })
        }
    }

    /// Asks the child to transform `input` into a PNG at `output`, then
    /// decodes the result.
    pub fn transform(&mut self, input: &Path, a: &Assignment, output: &Path) -> Result<ImageBuf, AdapterError> {
        self.require_role(Role::Transform)?;
        let space = self.caps.space.as_ref().expect("transform role has a space");
        let violations = space.validate(a);
        if !violations.is_empty() {
            return Err(AdapterError::InvalidAssignment(describe_violations(&violations)));
        }
        let _ = std::fs::remove_file(output);
        let request = Request::Transform {
            id: 0,
            input: input.display().to_string(),
            output: output.display().to_string(),
            assignment: a.clone(),
        };
        match self.exchange(request)? {
            Reply::Ok { .. } => {}
            other => return Err(self.protocol_error(format!("expected ok, got {}", other.to_line()))),
        }
        load_image(output).map_err(|e| AdapterError::Output {
            command: self.command.clone(),
            message: e.to_string(),
        })
    }

    /// Writes `input` to the scratch directory and transforms it.
    pub fn transform_image(&mut self, input: &ImageBuf, a: &Assignment) -> Result<ImageBuf, AdapterError> {
        let in_path = self.stage_image(input, "input")?;
        let out_path = self.scratch_path("output");
        let result = self.transform(&in_path, a, &out_path);
        let _ = std::fs::remove_file(&in_path);
        let _ = std::fs::remove_file(&out_path);
        result
    }

    /// Saves `img` as a PNG in the scratch directory.
    pub fn stage_image(&mut self, img: &ImageBuf, stem: &str) -> Result<PathBuf, AdapterError> {
        let path = self.scratch_path(stem);
        save_image(img, &path).map_err(|e| AdapterError::Scratch(e.to_string()))?;
        Ok(path)
    }

    pub fn encode(&mut self, input: &Path) -> Result<StyleDescriptor, AdapterError> {
        self.require_role(Role::Encoder)?;
        let request = Request::Encode {
            id: 0,
            input: input.display().to_string(),
        };
        let values = match self.exchange(request)? {
            Reply::Descriptor { values, .. } => values,
            other => return Err(self.protocol_error(format!("expected descriptor, got {}", other.to_line()))),
        };
        let expected = self.caps.descriptor_len.expect("encoder role has a length");
        if values.len() != expected {
            return Err(AdapterError::DescriptorLength {
                command: self.command.clone(),
                expected,
                got: values.len(),
            });
        }
        let reals: Option<Vec<f64>> = values.iter().map(wire_real).collect();
        let reals = reals.ok_or_else(|| AdapterError::NonFinite {
            command: self.command.clone(),
        })?;
        Ok(StyleDescriptor::new(self.caps.id(), reals).expect("finite by construction"))
    }

    pub fn encode_image(&mut self, img: &ImageBuf) -> Result<StyleDescriptor, AdapterError> {
        let path = self.stage_image(img, "encode")?;
        let result = self.encode(&path);
        let _ = std::fs::remove_file(&path);
        result
    }

    pub fn score(&mut self, input: &Path) -> Result<f64, AdapterError> {
        self.require_role(Role::Scorer)?;
        let request = Request::Score {
            id: 0,
            input: input.display().to_string(),
        };
        let value = match self.exchange(request)? {
            Reply::Score { value, .. } => value,
            other => return Err(self.protocol_error(format!("expected score, got {}", other.to_line()))),
        };
        wire_real(&value).ok_or_else(|| AdapterError::NonFinite {
            command: self.command.clone(),
        })
    }

    pub fn score_image(&mut self, img: &ImageBuf) -> Result<f64, AdapterError> {
        let path = self.stage_image(img, "score")?;
        let result = self.score(&path);
        let _ = std::fs::remove_file(&path);
        result
    }

    /// Sends `shutdown` and waits up to one timeout for the child to exit.
    /// Returns whether it exited on its own.
    pub fn shutdown(mut self) -> bool {
        self.shutdown_inner()
    }

    fn shutdown_inner(&mut self) -> bool {
        if !self.alive {
            return false;
        }
        let id = self.next_id;
        self.next_id += 1;
        let line = serde_json::to_string(&Request::Shutdown { id }).expect("request serializes");
        if let Some(stdin) = self.stdin.as_mut() {
            let _ = writeln!(stdin, "{line}").and_then(|_| stdin.flush());
        }
        self.stdin = None;
        let deadline = Instant::now() + self.endpoint.timeout.min(Duration::from_secs(5));
        while Instant::now() < deadline {
            if let Ok(Some(_)) = self.child.try_wait() {
                self.alive = false;
                return true;
            }
            thread::sleep(Duration::from_millis(5));
        }
        self.kill();
        false
    }
}

impl Drop for AdapterProcess {
    fn drop(&mut self) {
        self.shutdown_inner();
    }
}
