//! External-process adapters for transforms, encoders and scorers.
//!
//! An adapter is a child process speaking line-delimited JSON on its
//! standard streams. The normative description is `docs/protocol.md`; in
//! short, the child announces itself with a `hello` line, then answers
//! `transform`, `encode` and `score` requests one at a time. Images travel
//! as PNG files in a scratch directory owned by the engine.

pub mod check;
mod client;
pub mod echo;
pub mod protocol;

pub use self::check::{check_adapter, CheckOutcome};
pub use self::client::{AdapterEndpoint, AdapterError, AdapterProcess, Capabilities, DEFAULT_TIMEOUT};
pub use self::protocol::{ErrorCode, Hello, Reply, Request, Role, PROTOCOL_VERSION};
