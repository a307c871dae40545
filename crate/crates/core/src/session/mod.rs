//! Transcription sessions: inputs, reference, engine and metric wired into a
//! study, plus the result directory they produce.
//!
//! A finished session directory holds
//!
//! | file                        | content                                     |
//! |-----------------------------|---------------------------------------------|
//! | `result.json`               | [`TranscriptionResult`]                     |
//! | `trials.jsonl`              | one [`TrialRecord`] per line                |
//! | `best.png`                  | output of the best assignment               |
//! | `reference_descriptor.json` | the cached reference descriptor             |

mod runtime;

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adapter::AdapterError;
use crate::metric::{MetricError, Norm};
use crate::optimizer::trial_log::{self, TrialLogError};
use crate::optimizer::{OptimizerError, SamplerKind, StudyConfig, TpeConfig, TrialRecord};
use crate::params::{Assignment, ParamError, ParamSpace, Value, Violation};
use crate::transforms::{load_image, ImageBuf, TransformError};

pub use self::runtime::{
    Candidate, Engine, EngineSpec, Metric, MetricSpec, Progress, RunOutcome, Transcriber, CANDIDATE_PARAM,
};

pub const RESULT_FILE: &str = "result.json";
pub const TRIALS_FILE: &str = "trials.jsonl";
pub const BEST_IMAGE_FILE: &str = "best.png";
pub const REFERENCE_DESCRIPTOR_FILE: &str = "reference_descriptor.json";
pub const RESULT_SCHEMA_VERSION: u32 = 1;
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("invalid assignment: {}", crate::params::describe_violations(.0))]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("all {trials} evaluated trials failed; last failure: {last}")]
    AllTrialsFailed { trials: usize, last: String, adapter: bool },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl From<TrialLogError> for SessionError {
    fn from(e: TrialLogError) -> Self {
        SessionError::Input(e.to_string())
    }
}

impl SessionError {
    /// Short machine-readable category.
    pub fn category(&self) -> &'static str {
        match self {
            SessionError::Usage(_) => "usage",
            SessionError::Input(_) | SessionError::Param(_) => "input",
            SessionError::Invalid(_) => "invalid-assignment",
            SessionError::Adapter(e) => e.category(),
            SessionError::Optimizer(OptimizerError::AllTrialsFailed(..)) | SessionError::AllTrialsFailed { .. } => {
                "all-trials-failed"
            }
            SessionError::Optimizer(OptimizerError::InvalidConfig(_)) => "usage",
            SessionError::Optimizer(_) => "internal",
            SessionError::Metric(MetricError::WeightLength(..) | MetricError::BadWeight | MetricError::TooSmall(..)) => {
                "input"
            }
            SessionError::Metric(_) => "metric",
            SessionError::Transform(TransformError::Io { .. } | TransformError::Decode(_)) => "input",
            SessionError::Transform(TransformError::InvalidAssignment(_)) => "invalid-assignment",
            SessionError::Transform(_) => "internal",
            SessionError::Io { .. } => "io",
        }
    }

    /// Process exit code: 2 usage, 3 input, 4 adapter, 5 internal. A study in
    /// which every trial failed counts as an adapter error when one was in use.
    pub fn exit_code(&self) -> u8 {
        if let SessionError::AllTrialsFailed { adapter, .. } = self {
            return if *adapter { 4 } else { 5 };
        }
        match self.category() {
            "usage" => 2,
            "input" | "invalid-assignment" => 3,
            c if c.starts_with("adapter") => 4,
            _ => 5,
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> SessionError + '_ {
    move |e| SessionError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// The image(s) a session transforms.
#[derive(Debug, Clone, PartialEq)]
pub enum InputSpec {
    Single(PathBuf),
    Candidates(Vec<PathBuf>),
}

impl InputSpec {
    pub fn paths(&self) -> Vec<PathBuf> {
        match self {
            InputSpec::Single(p) => vec![p.clone()],
            InputSpec::Candidates(ps) => ps.clone(),
        }
    }
}

/// Label of a candidate: its file stem.
pub fn candidate_label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionSpec {
    pub input: InputSpec,
    pub reference: PathBuf,
    pub engine: EngineSpec,
    pub metric: MetricSpec,
    pub norm: Norm,
    pub weights: Option<Vec<f64>>,
    pub study: StudyConfig,
    pub out_dir: PathBuf,
}

impl SessionSpec {
    /// A builtin-engine, builtin-metric session with default study settings.
    pub fn builtin(input: InputSpec, reference: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        SessionSpec {
            input,
            reference: reference.into(),
            engine: EngineSpec::Builtin,
            metric: MetricSpec::Builtin,
            norm: Norm::L1,
            weights: None,
            study: StudyConfig::default(),
            out_dir: out_dir.into(),
        }
    }

    fn validate(&self) -> Result<(), SessionError> {
        let inputs = self.input.paths();
        if inputs.is_empty() {
            return Err(SessionError::Input("the candidate list is empty".into()));
        }
        self.study.validate()?;
        let outputs: Vec<PathBuf> = [RESULT_FILE, TRIALS_FILE, BEST_IMAGE_FILE, REFERENCE_DESCRIPTOR_FILE]
            .iter()
            .map(|f| absolute(&self.out_dir.join(f)))
            .collect();
        for p in inputs.iter().chain(std::iter::once(&self.reference)) {
            if outputs.contains(&absolute(p)) {
                return Err(SessionError::Input(format!(
                    "{} would be overwritten by the session output",
                    p.display()
                )));
            }
        }
        Ok(())
    }
}

fn absolute(p: &Path) -> PathBuf {
    std::fs::canonicalize(p)
        .or_else(|_| std::path::absolute(p))
        .unwrap_or_else(|_| p.to_path_buf())
}

/// Which candidate won, in selection mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedCandidate {
    pub index: usize,
    pub label: String,
}

/// How the session was configured; enough to rebuild it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub inputs: Vec<PathBuf>,
    pub labels: Vec<String>,
    pub reference: PathBuf,
    pub engine: String,
    pub metric: String,
    pub norm: Norm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub budget: usize,
    pub sampler: SamplerKind,
    pub tpe: TpeConfig,
    pub metric_id: String,
    pub engine_id: String,
    pub preset_hash: Option<String>,
    pub artifact_version: String,
}

/// Contents of `result.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptionResult {
    pub schema_version: u32,
    pub best_assignment: Assignment,
    pub best_objective: f64,
    pub best_trial: usize,
    pub identity_objective: Option<f64>,
    pub trials_completed: usize,
    pub trials_failed: usize,
    pub selected_candidate: Option<SelectedCandidate>,
    pub trial_log: String,
    pub best_image: String,
    pub space: ParamSpace,
    pub session: SessionRecord,
    pub provenance: Provenance,
}

impl TranscriptionResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    /// Reads `result.json`, given the file or its directory.
    pub fn load(path: &Path) -> Result<(Self, PathBuf), SessionError> {
        let file = if path.is_dir() { path.join(RESULT_FILE) } else { path.to_path_buf() };
        let text = std::fs::read_to_string(&file).map_err(|e| SessionError::Input(format!("{}: {e}", file.display())))?;
        let result: TranscriptionResult =
            serde_json::from_str(&text).map_err(|e| SessionError::Input(format!("{}: {e}", file.display())))?;
        if result.schema_version != RESULT_SCHEMA_VERSION {
            return Err(SessionError::Input(format!(
                "{}: schema version {} is not supported (expected {RESULT_SCHEMA_VERSION})",
                file.display(),
                result.schema_version
            )));
        }
        let dir = file.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((result, dir))
    }

    pub fn assignment_space(&self) -> &ParamSpace {
        &self.space
    }
}

fn load_candidates(input: &InputSpec) -> Result<Vec<Candidate>, SessionError> {
    input
        .paths()
        .iter()
        .map(|p| {
            Ok(Candidate {
                label: candidate_label(p),
                image: load_image(p)?,
            })
        })
        .collect()
}

/// Opens everything a spec names: images, engine, metric.
pub fn open_transcriber(spec: &SessionSpec) -> Result<Transcriber, SessionError> {
    let candidates = load_candidates(&spec.input)?;
    let reference = load_image(&spec.reference)?;
    let engine = Engine::open(&spec.engine)?;
    let metric = Metric::open(&spec.metric, spec.norm, spec.weights.clone())?;
    Transcriber::new(candidates, &reference, engine, metric)
}

/// Runs a session and writes its result directory.
pub fn transcribe(spec: &SessionSpec) -> Result<TranscriptionResult, SessionError> {
    transcribe_with(spec, |_, _| {})
}

/// [`transcribe`] with a callback after every trial.
pub fn transcribe_with(
    spec: &SessionSpec,
    mut observe: impl FnMut(&TrialRecord, &Progress),
) -> Result<TranscriptionResult, SessionError> {
    spec.validate()?;
    let mut transcriber = open_transcriber(spec)?;
    std::fs::create_dir_all(&spec.out_dir).map_err(io_err(&spec.out_dir))?;

    let trials_path = spec.out_dir.join(TRIALS_FILE);
    let file = std::fs::File::create(&trials_path).map_err(io_err(&trials_path))?;
    let mut log = std::io::BufWriter::new(file);
    let mut log_error = None;
    let run = transcriber.run(&spec.study, |record, progress| {
        if log_error.is_none() {
            if let Err(e) = writeln!(log, "{}", trial_log::to_line(record)) {
                log_error = Some(e);
            }
        }
        observe(record, progress);
    });
    if let Some(e) = log_error {
        return Err(io_err(&trials_path)(e));
    }
    log.flush().map_err(io_err(&trials_path))?;
    drop(log);
    let uses_adapter = matches!(spec.engine, EngineSpec::Adapter(_)) || spec.metric.uses_adapter();
    let run = run.map_err(|e| match e {
        SessionError::Optimizer(OptimizerError::AllTrialsFailed(trials, last)) => SessionError::AllTrialsFailed {
            trials,
            last,
            adapter: uses_adapter,
        },
        other => other,
    })?;

    let result = build_result(spec, &transcriber, &run);
    write_outputs(&spec.out_dir, &transcriber, &run, &result)?;
    Ok(result)
}

pub(crate) fn build_result(spec: &SessionSpec, t: &Transcriber, run: &RunOutcome) -> TranscriptionResult {
    let completed = run.history.iter().filter(|r| r.is_complete()).count();
    let selected_candidate = t.is_generative().then(|| {
        let index = t.candidate_of(&run.best.assignment);
        SelectedCandidate {
            index,
            label: t.candidates()[index].label.clone(),
        }
    });
    let inputs = spec.input.paths().iter().map(|p| absolute(p)).collect();
    TranscriptionResult {
        schema_version: RESULT_SCHEMA_VERSION,
        best_assignment: run.best.assignment.clone(),
        best_objective: run.best.objective.expect("best trial completed"),
        best_trial: run.best.index,
        identity_objective: run.history.first().and_then(|r| r.objective),
        trials_completed: completed,
        trials_failed: run.history.len() - completed,
        selected_candidate,
        trial_log: TRIALS_FILE.into(),
        best_image: BEST_IMAGE_FILE.into(),
        space: t.space().clone(),
        session: SessionRecord {
            inputs,
            labels: t.candidates().iter().map(|c| c.label.clone()).collect(),
            reference: absolute(&spec.reference),
            engine: spec.engine.describe(),
            metric: spec.metric.describe(),
            norm: spec.norm,
            weights: spec.weights.clone(),
        },
        provenance: Provenance {
            seed: spec.study.seed,
            budget: spec.study.budget,
            sampler: spec.study.sampler,
            tpe: spec.study.tpe,
            metric_id: t.metric().id().into(),
            engine_id: t.engine().id().into(),
            preset_hash: t.engine().preset_hash(),
            artifact_version: ARTIFACT_VERSION.into(),
        },
    }
}

#[derive(Serialize)]
struct ReferenceDescriptorFile<'a> {
    metric_id: &'a str,
    values: Option<&'a [f64]>,
}

fn write_outputs(dir: &Path, t: &Transcriber, run: &RunOutcome, result: &TranscriptionResult) -> Result<(), SessionError> {
    let write = |name: &str, bytes: &[u8]| {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(io_err(&path))
    };
    write(BEST_IMAGE_FILE, &run.best_image.to_png())?;
    let descriptor = ReferenceDescriptorFile {
        metric_id: t.metric().id(),
        values: t.reference_descriptor().map(|d| d.values.as_slice()),
    };
    write(
        REFERENCE_DESCRIPTOR_FILE,
        serde_json::to_string_pretty(&descriptor).expect("serializes").as_bytes(),
    )?;
    write(RESULT_FILE, result.to_json().as_bytes())?;
    Ok(())
}

/// Rebuilds the spec a result was produced from.
pub fn spec_from_result(result: &TranscriptionResult, out_dir: &Path) -> Result<SessionSpec, SessionError> {
    let input = if result.session.inputs.len() == 1 {
        InputSpec::Single(result.session.inputs[0].clone())
    } else {
        InputSpec::Candidates(result.session.inputs.clone())
    };
    Ok(SessionSpec {
        input,
        reference: result.session.reference.clone(),
        engine: EngineSpec::parse(&result.session.engine)?,
        metric: MetricSpec::parse(&result.session.metric)?,
        norm: result.session.norm,
        weights: result.session.weights.clone(),
        study: StudyConfig {
            seed: result.provenance.seed,
            budget: result.provenance.budget,
            sampler: result.provenance.sampler,
            tpe: result.provenance.tpe,
            ..StudyConfig::default()
        },
        out_dir: out_dir.to_path_buf(),
    })
}

/// Merges `overrides` and `disabled` parameters onto the best assignment.
///
/// A disabled parameter is set to its identity value. Unknown names and
/// out-of-domain values are errors.
pub fn merged_assignment(
    space: &ParamSpace,
    best: &Assignment,
    overrides: &Assignment,
    disabled: &[String],
) -> Result<Assignment, SessionError> {
    runtime::check_overrides(space, overrides)?;
    let mut merged = best.merged(&space.coerce(overrides));
    for name in disabled {
        let spec = space
            .get(name)
            .ok_or_else(|| SessionError::Input(format!("unknown parameter: {name}")))?;
        let identity = spec
            .identity
            .clone()
            .ok_or_else(|| SessionError::Input(format!("parameter '{name}' has no identity value")))?;
        merged.set(name.clone(), identity);
    }
    let violations = space.validate(&merged);
    if !violations.is_empty() {
        return Err(SessionError::Invalid(violations));
    }
    Ok(merged)
}

/// Re-renders a result with `overrides` applied. The engine and input are
/// taken from the result. With no overrides this reproduces `best.png`.
pub fn apply_result(
    result: &TranscriptionResult,
    overrides: &Assignment,
    disabled: &[String],
) -> Result<ImageBuf, SessionError> {
    let a = merged_assignment(&result.space, &result.best_assignment, overrides, disabled)?;
    let index = if result.session.inputs.len() >= 2 {
        let label = a.get(CANDIDATE_PARAM).and_then(Value::as_choice).unwrap_or_default();
        result
            .session
            .labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| SessionError::Input(format!("unknown candidate '{label}'")))?
    } else {
        0
    };
    let input = load_image(&result.session.inputs[index])?;
    let mut engine = Engine::open(&EngineSpec::parse(&result.session.engine)?)?;
    let mut engine_a = a;
    engine_a.remove(CANDIDATE_PARAM);
    engine.apply(&input, &engine_a)
}

/// Parses `name=value` into a typed override for `space`.
pub fn parse_override(space: &ParamSpace, text: &str) -> Result<(String, Value), SessionError> {
    let (name, raw) = text
        .split_once('=')
        .ok_or_else(|| SessionError::Usage(format!("expected name=value, got '{text}'")))?;
    let spec = space
        .get(name)
        .ok_or_else(|| SessionError::Input(format!("unknown parameter: {name}")))?;
    let value = match &spec.kind {
        crate::params::ParamKind::Continuous { .. } => Value::Real(
            raw.parse()
                .map_err(|_| SessionError::Input(format!("{name}: '{raw}' is not a number")))?,
        ),
        crate::params::ParamKind::Integer { .. } => Value::Int(
            raw.parse()
                .map_err(|_| SessionError::Input(format!("{name}: '{raw}' is not an integer")))?,
        ),
        crate::params::ParamKind::Categorical { .. } => Value::Choice(raw.to_string()),
    };
    Ok((name.to_string(), value))
}
