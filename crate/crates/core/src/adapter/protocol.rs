//! Wire messages. One JSON object per line in each direction.

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::params::{Assignment, ParamSpace};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Transform,
    Encoder,
    Scorer,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Transform => "transform",
            Role::Encoder => "encoder",
            Role::Scorer => "scorer",
        }
    }
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "transform" => Ok(Role::Transform),
            "encoder" => Ok(Role::Encoder),
            "scorer" => Ok(Role::Scorer),
            other => Err(format!("unknown role '{other}'")),
        }
    }
}

/// Error codes a child may put in an `error` reply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    Unsupported,
    Internal,
}

impl std::fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ErrorCode::BadRequest => "bad_request",
            ErrorCode::Unsupported => "unsupported",
            ErrorCode::Internal => "internal",
        })
    }
}

/// First line a child writes after starting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub protocol: u32,
    pub role: Role,
    pub name: String,
    pub version: String,
    /// Parameter list in the space-file format; transform role only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<Json>,
    /// Descriptor length; encoder role only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub descriptor_len: Option<usize>,
}

impl Hello {
    pub fn transform(name: &str, version: &str, space: &ParamSpace) -> Hello {
        let doc = serde_json::to_value(space).expect("space serializes");
        Hello {
            protocol: PROTOCOL_VERSION,
            role: Role::Transform,
            name: name.into(),
            version: version.into(),
            space: doc.get("space").cloned(),
            descriptor_len: None,
        }
    }

    pub fn encoder(name: &str, version: &str, descriptor_len: usize) -> Hello {
        Hello {
            protocol: PROTOCOL_VERSION,
            role: Role::Encoder,
            name: name.into(),
            version: version.into(),
            space: None,
            descriptor_len: Some(descriptor_len),
        }
    }

    pub fn scorer(name: &str, version: &str) -> Hello {
        Hello {
            protocol: PROTOCOL_VERSION,
            role: Role::Scorer,
            name: name.into(),
            version: version.into(),
            space: None,
            descriptor_len: None,
        }
    }

    pub fn to_line(&self) -> String {
        let mut v = serde_json::to_value(self).expect("hello serializes");
        v.as_object_mut()
            .expect("object")
            .insert("type".into(), Json::String("hello".into()));
        v.to_string()
    }

    /// Parses the declared space, if any.
    pub fn param_space(&self) -> Result<Option<ParamSpace>, String> {
        match &self.space {
            None => Ok(None),
            Some(list) => {
                let doc = serde_json::json!({ "space": list });
                serde_json::from_value(doc).map(Some).map_err(|e| e.to_string())
            }
        }
    }
}

/// Requests sent by the engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Request {
    Transform {
        id: u64,
        input: String,
        output: String,
        assignment: Assignment,
    },
    Encode {
        id: u64,
        input: String,
    },
    Score {
        id: u64,
        input: String,
    },
    Shutdown {
        id: u64,
    },
}

impl Request {
    pub fn id(&self) -> u64 {
        match self {
            Request::Transform { id, .. }
            | Request::Encode { id, .. }
            | Request::Score { id, .. }
            | Request::Shutdown { id } => *id,
        }
    }
}

/// Messages written by the child, as parsed by the engine.
///
/// Reals arrive as raw JSON so that `null` and the strings `"NaN"`,
/// `"inf"`, `"-inf"` can be reported as non-finite rather than as parse
/// failures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Reply {
    Hello(Hello),
    Ok {
        id: u64,
    },
    Descriptor {
        id: u64,
        values: Vec<Json>,
    },
    Score {
        id: u64,
        value: Json,
    },
    Error {
        #[serde(default)]
        id: Option<u64>,
        code: ErrorCode,
        message: String,
    },
}

impl Reply {
    pub fn id(&self) -> Option<u64> {
        match self {
            Reply::Hello(_) => None,
            Reply::Ok { id } | Reply::Descriptor { id, .. } | Reply::Score { id, .. } => Some(*id),
            Reply::Error { id, .. } => *id,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("reply serializes")
    }
}

/// Reads a wire real. `None` for anything that is not a finite number.
pub fn wire_real(v: &Json) -> Option<f64> {
    v.as_f64().filter(|x| x.is_finite())
}

/// Encodes a real for the wire, using the string forms for non-finite values.
pub fn real_to_wire(x: f64) -> Json {
    if x.is_nan() {
        Json::String("NaN".into())
    } else if x.is_infinite() {
        Json::String(if x > 0.0 { "inf" } else { "-inf" }.into())
    } else {
        serde_json::json!(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms::builtin_space;

    #[test]
    fn hello_round_trip() {
        let h = Hello::transform("echo", "1.0", &builtin_space());
        let line = h.to_line();
        assert!(line.contains("\"type\":\"hello\""));
        let back: Reply = serde_json::from_str(&line).unwrap();
        let Reply::Hello(back) = back else { panic!("not a hello") };
        assert_eq!(back.param_space().unwrap(), Some(builtin_space()));
    }

    #[test]
    fn request_shapes() {
        let r = Request::Encode {
            id: 3,
            input: "/tmp/a.png".into(),
        };
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"type":"encode","id":3,"input":"/tmp/a.png"}"#
        );
        let e: Reply = serde_json::from_str(r#"{"type":"error","id":4,"code":"unsupported","message":"x"}"#).unwrap();
        assert_eq!(e.id(), Some(4));
        let e: Reply = serde_json::from_str(r#"{"type":"error","code":"bad_request","message":"x"}"#).unwrap();
        assert_eq!(e.id(), None);
    }

    #[test]
    fn non_finite_reals() {
        for text in ["null", "\"NaN\"", "\"inf\"", "\"-inf\""] {
            let v: Json = serde_json::from_str(text).unwrap();
            assert_eq!(wire_real(&v), None);
        }
        assert_eq!(wire_real(&real_to_wire(0.1)), Some(0.1));
        assert_eq!(real_to_wire(f64::NAN), Json::String("NaN".into()));
    }
}
