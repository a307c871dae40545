//! Parameter spaces and assignments.
//!
//! A [`ParamSpace`] is an ordered list of named parameters, each continuous,
//! integer or categorical. An [`Assignment`] carries one concrete [`Value`]
//! per parameter. Both serialize to JSON; reals are written with shortest
//! round-trip rendering so a stored assignment reproduces `apply` bit-exactly.
//!
//! ```
//! use partran::params::{Assignment, ParamSpace, ParamSpec, Value};
//!
//! let space = ParamSpace::new(vec![
//!     ParamSpec::continuous("b", -1.0, 1.0).with_identity(Value::Real(0.0)),
//! ])
//! .unwrap();
//! let a = Assignment::from_pairs([("b", Value::Real(1.5))]);
//! let violations = space.validate(&a);
//! assert_eq!(violations.len(), 1);
//! assert_eq!(violations[0].name, "b");
//! ```

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Errors raised while declaring or (de)serializing parameter spaces.
#[derive(Debug, thiserror::Error)]
pub enum ParamError {
    #[error("parameter name must not be empty")]
    EmptyName,
    #[error("duplicate parameter name '{0}'")]
    DuplicateName(String),
    #[error("parameter '{name}': invalid bounds [{low}, {high}]")]
    InvalidBounds { name: String, low: f64, high: f64 },
    #[error("parameter '{0}': categorical parameter needs at least one choice")]
    NoChoices(String),
    #[error("parameter '{name}': duplicate choice label '{label}'")]
    DuplicateChoice { name: String, label: String },
    #[error("parameter '{name}': declared identity is invalid ({reason})")]
    InvalidIdentity { name: String, reason: String },
    #[error("parameter '{0}' has no declared identity value")]
    MissingIdentity(String),
    #[error("parameter '{name}': field '{field}' is required for kind {kind}")]
    MissingField {
        name: String,
        field: &'static str,
        kind: &'static str,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}

impl From<serde_json::Error> for ParamError {
    fn from(e: serde_json::Error) -> Self {
        ParamError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

/// Kind and domain of a single parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamKind {
    Continuous { low: f64, high: f64 },
    /// Inclusive integer range.
    Integer { low: i64, high: i64 },
    Categorical { choices: Vec<String> },
}

impl ParamKind {
    pub fn label(&self) -> &'static str {
        match self {
            ParamKind::Continuous { .. } => "continuous",
            ParamKind::Integer { .. } => "integer",
            ParamKind::Categorical { .. } => "categorical",
        }
    }
}

/// A concrete parameter value.
///
/// Categorical values are stored by label, not index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Real(f64),
    Choice(String),
}

impl Value {
    pub fn as_real(&self) -> Option<f64> {
        match self {
            Value::Real(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_choice(&self) -> Option<&str> {
        match self {
            Value::Choice(v) => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Real(v) => write!(f, "{v:?}"),
            Value::Choice(v) => write!(f, "{v:?}"),
        }
    }
}

/// Declaration of one named parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    /// Value under which the owning transformation is a no-op.
    pub identity: Option<Value>,
}

impl ParamSpec {
    pub fn continuous(name: impl Into<String>, low: f64, high: f64) -> Self {
        ParamSpec {
            name: name.into(),
            kind: ParamKind::Continuous { low, high },
            identity: None,
        }
    }

    pub fn integer(name: impl Into<String>, low: i64, high: i64) -> Self {
        ParamSpec {
            name: name.into(),
            kind: ParamKind::Integer { low, high },
            identity: None,
        }
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        choices: impl IntoIterator<Item = S>,
    ) -> Self {
        ParamSpec {
            name: name.into(),
            kind: ParamKind::Categorical {
                choices: choices.into_iter().map(Into::into).collect(),
            },
            identity: None,
        }
    }

    pub fn with_identity(mut self, identity: Value) -> Self {
        self.identity = Some(identity);
        self
    }

    fn check(&self) -> Result<(), ParamError> {
        if self.name.is_empty() {
            return Err(ParamError::EmptyName);
        }
        match &self.kind {
            ParamKind::Continuous { low, high } => {
                if !(low.is_finite() && high.is_finite() && low < high) {
                    return Err(ParamError::InvalidBounds {
                        name: self.name.clone(),
                        low: *low,
                        high: *high,
                    });
                }
            }
            ParamKind::Integer { low, high } => {
                if low > high {
                    return Err(ParamError::InvalidBounds {
                        name: self.name.clone(),
                        low: *low as f64,
                        high: *high as f64,
                    });
                }
            }
            ParamKind::Categorical { choices } => {
                if choices.is_empty() {
                    return Err(ParamError::NoChoices(self.name.clone()));
                }
                for (i, c) in choices.iter().enumerate() {
                    if choices[..i].contains(c) {
                        return Err(ParamError::DuplicateChoice {
                            name: self.name.clone(),
                            label: c.clone(),
                        });
                    }
                }
            }
        }
        if let Some(identity) = &self.identity {
            if let Some(kind) = self.check_value(identity) {
                return Err(ParamError::InvalidIdentity {
                    name: self.name.clone(),
                    reason: kind.to_string(),
                });
            }
        }
        Ok(())
    }

    /// Returns the violation a value would cause, if any.
    pub fn check_value(&self, value: &Value) -> Option<ViolationKind> {
        match (&self.kind, value) {
            (ParamKind::Continuous { low, high }, Value::Real(v)) => {
                (!(v.is_finite() && low <= v && v <= high)).then_some(ViolationKind::OutOfBounds)
            }
            (ParamKind::Integer { low, high }, Value::Int(v)) => {
                (!(low <= v && v <= high)).then_some(ViolationKind::OutOfBounds)
            }
            (ParamKind::Categorical { choices }, Value::Choice(c)) => {
                (!choices.contains(c)).then_some(ViolationKind::UnknownChoice)
            }
            _ => Some(ViolationKind::WrongType),
        }
    }

    /// Index of a categorical label.
    pub fn choice_index(&self, label: &str) -> Option<usize> {
        match &self.kind {
            ParamKind::Categorical { choices } => choices.iter().position(|c| c == label),
            _ => None,
        }
    }
}

/// What is wrong with one entry of an assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    Missing,
    Extra,
    OutOfBounds,
    UnknownChoice,
    WrongType,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationKind::Missing => "missing",
            ViolationKind::Extra => "extra",
            ViolationKind::OutOfBounds => "out-of-bounds",
            ViolationKind::UnknownChoice => "unknown-choice",
            ViolationKind::WrongType => "wrong-type",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub name: String,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} '{}'", self.kind, self.name)
    }
}

/// Formats a violation list as `out-of-bounds 'b', missing 'c'`.
pub fn describe_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

/// Ordered list of parameter declarations with pairwise distinct names.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSpace {
    specs: Vec<ParamSpec>,
}

impl ParamSpace {
    pub fn new(specs: Vec<ParamSpec>) -> Result<Self, ParamError> {
        for (i, spec) in specs.iter().enumerate() {
            spec.check()?;
            if specs[..i].iter().any(|s| s.name == spec.name) {
                return Err(ParamError::DuplicateName(spec.name.clone()));
            }
        }
        Ok(ParamSpace { specs })
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&ParamSpec> {
        self.specs.iter().find(|s| s.name == name)
    }

    /// Returns a new space with `spec` inserted before all existing specs.
    pub fn prepend(&self, spec: ParamSpec) -> Result<ParamSpace, ParamError> {
        let mut specs = Vec::with_capacity(self.specs.len() + 1);
        specs.push(spec);
        specs.extend(self.specs.iter().cloned());
        ParamSpace::new(specs)
    }

    /// Checks `a` against this space. An empty list means the assignment is valid.
    ///
    /// Violations are reported in space order, followed by extra names in
    /// lexicographic order.
    pub fn validate(&self, a: &Assignment) -> Vec<Violation> {
        let mut out = Vec::new();
        for spec in &self.specs {
            match a.get(&spec.name) {
                None => out.push(Violation {
                    name: spec.name.clone(),
                    kind: ViolationKind::Missing,
                }),
                Some(v) => {
                    if let Some(kind) = spec.check_value(v) {
                        out.push(Violation {
                            name: spec.name.clone(),
                            kind,
                        });
                    }
                }
            }
        }
        for name in a.names() {
            if self.get(name).is_none() {
                out.push(Violation {
                    name: name.to_string(),
                    kind: ViolationKind::Extra,
                });
            }
        }
        out
    }

    /// The assignment of every declared identity value.
    pub fn identity_assignment(&self) -> Result<Assignment, ParamError> {
        let mut a = Assignment::default();
        for spec in &self.specs {
            let identity = spec
                .identity
                .clone()
                .ok_or_else(|| ParamError::MissingIdentity(spec.name.clone()))?;
            a.set(spec.name.clone(), identity);
        }
        Ok(a)
    }

    /// Converts JSON-ambiguous values to the declared kind: an integral
    /// number given for a continuous parameter becomes a real, and an
    /// integral real given for an integer parameter becomes an integer.
    /// Unknown names and genuine type errors are left for [`validate`](Self::validate).
    pub fn coerce(&self, a: &Assignment) -> Assignment {
        let mut out = a.clone();
        for spec in &self.specs {
            let Some(v) = out.values.get_mut(&spec.name) else {
                continue;
            };
            match (&spec.kind, &*v) {
                (ParamKind::Continuous { .. }, Value::Int(i)) => *v = Value::Real(*i as f64),
                (ParamKind::Integer { .. }, Value::Real(r))
                    if r.fract() == 0.0 && r.abs() < 9.0e15 =>
                {
                    *v = Value::Int(*r as i64)
                }
                _ => {}
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("space serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ParamError> {
        let doc: SpaceDocument = serde_json::from_str(text)?;
        ParamSpace::from_document(doc)
    }

    pub(crate) fn to_document(&self) -> SpaceDocument {
        SpaceDocument {
            space: self.specs.iter().map(SpecDocument::from).collect(),
        }
    }

    pub(crate) fn from_document(doc: SpaceDocument) -> Result<Self, ParamError> {
        let specs = doc
            .space
            .into_iter()
            .map(ParamSpec::try_from)
            .collect::<Result<Vec<_>, _>>()?;
        ParamSpace::new(specs)
    }
}

impl Serialize for ParamSpace {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_document().serialize(s)
    }
}

impl<'de> Deserialize<'de> for ParamSpace {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let doc = SpaceDocument::deserialize(d)?;
        ParamSpace::from_document(doc).map_err(serde::de::Error::custom)
    }
}

/// On-disk form of a space: `{"space": [spec, ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct SpaceDocument {
    space: Vec<SpecDocument>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecDocument {
    name: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    low: Option<serde_json::Number>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    high: Option<serde_json::Number>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    choices: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    identity: Option<Value>,
}

impl From<&ParamSpec> for SpecDocument {
    fn from(spec: &ParamSpec) -> Self {
        let real = |v: f64| serde_json::Number::from_f64(v);
        let (low, high, choices) = match &spec.kind {
            ParamKind::Continuous { low, high } => (real(*low), real(*high), None),
            ParamKind::Integer { low, high } => (Some((*low).into()), Some((*high).into()), None),
            ParamKind::Categorical { choices } => (None, None, Some(choices.clone())),
        };
        SpecDocument {
            name: spec.name.clone(),
            kind: spec.kind.label().to_string(),
            low,
            high,
            choices,
            identity: spec.identity.clone(),
        }
    }
}

impl TryFrom<SpecDocument> for ParamSpec {
    type Error = ParamError;

    fn try_from(doc: SpecDocument) -> Result<Self, ParamError> {
        let missing = |field, kind| ParamError::MissingField {
            name: doc.name.clone(),
            field,
            kind,
        };
        let kind = match doc.kind.as_str() {
            "continuous" => {
                let low = doc.low.as_ref().and_then(|n| n.as_f64());
                let high = doc.high.as_ref().and_then(|n| n.as_f64());
                ParamKind::Continuous {
                    low: low.ok_or_else(|| missing("low", "continuous"))?,
                    high: high.ok_or_else(|| missing("high", "continuous"))?,
                }
            }
            "integer" => {
                let low = doc.low.as_ref().and_then(|n| n.as_i64());
                let high = doc.high.as_ref().and_then(|n| n.as_i64());
                ParamKind::Integer {
                    low: low.ok_or_else(|| missing("low", "integer"))?,
                    high: high.ok_or_else(|| missing("high", "integer"))?,
                }
            }
            "categorical" => ParamKind::Categorical {
                choices: doc
                    .choices
                    .clone()
                    .ok_or_else(|| missing("choices", "categorical"))?,
            },
            other => {
                return Err(ParamError::Parse {
                    line: 0,
                    column: 0,
                    message: format!("parameter '{}': unknown kind '{other}'", doc.name),
                })
            }
        };
        // An identity like `0` for a continuous parameter is read back as Int.
        let identity = doc.identity.map(|v| match (&kind, v) {
            (ParamKind::Continuous { .. }, Value::Int(i)) => Value::Real(i as f64),
            (_, v) => v,
        });
        Ok(ParamSpec {
            name: doc.name,
            kind,
            identity,
        })
    }
}

/// One value per parameter name.
///
/// Backed by an ordered map so iteration order (and therefore anything
/// derived from it) never depends on insertion order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment {
    values: BTreeMap<String, Value>,
}

impl Assignment {
    pub fn from_pairs<K: Into<String>>(pairs: impl IntoIterator<Item = (K, Value)>) -> Self {
        Assignment {
            values: pairs.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.values.get(name)
    }

    pub fn set(&mut self, name: impl Into<String>, value: Value) {
        self.values.insert(name.into(), value);
    }

    pub fn remove(&mut self, name: &str) -> Option<Value> {
        self.values.remove(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Real value of a parameter; panics if absent or not real.
    ///
    /// Only for use on assignments that already passed validation.
    pub fn real(&self, name: &str) -> f64 {
        self.get(name)
            .and_then(Value::as_real)
            .unwrap_or_else(|| panic!("assignment lacks real '{name}'"))
    }

    /// Values of `overrides` replace the corresponding entries of `self`.
    pub fn merged(&self, overrides: &Assignment) -> Assignment {
        let mut out = self.clone();
        for (k, v) in overrides.iter() {
            out.set(k, v.clone());
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("assignment serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ParamError> {
        let a: Assignment = serde_json::from_str(text)?;
        if let Some((name, _)) = a.iter().find(|(_, v)| matches!(v, Value::Real(r) if !r.is_finite())) {
            return Err(ParamError::Parse {
                line: 0,
                column: 0,
                message: format!("non-finite value for '{name}'"),
            });
        }
        Ok(a)
    }
}
