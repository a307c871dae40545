//! Live engines, metrics and the objective they define.

use crate::adapter::{AdapterEndpoint, AdapterError, AdapterProcess, Role};
use crate::metric::{distance, encode_builtin, Norm, StyleDescriptor, BUILTIN_METRIC_ID};
use crate::optimizer::{best_of, Study, StudyConfig, TrialRecord};
use crate::params::{Assignment, ParamSpace, ParamSpec, Value};
use crate::transforms::{ImageBuf, PhotoChain};

use super::SessionError;

/// Name of the parameter prepended in candidate-selection mode.
pub const CANDIDATE_PARAM: &str = "candidate_index";

/// Where the transformation chain runs.
#[derive(Debug, Clone, PartialEq)]
pub enum EngineSpec {
    Builtin,
    Adapter(AdapterEndpoint),
}

impl EngineSpec {
    /// `builtin`, or an adapter command line.
    pub fn parse(text: &str) -> Result<Self, SessionError> {
        if text == "builtin" {
            Ok(EngineSpec::Builtin)
        } else {
            Ok(EngineSpec::Adapter(AdapterEndpoint::parse(text, Role::Transform)?))
        }
    }

    pub fn with_timeout(self, timeout: std::time::Duration) -> Self {
        match self {
            EngineSpec::Adapter(e) => EngineSpec::Adapter(e.with_timeout(timeout)),
            other => other,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            EngineSpec::Builtin => "builtin".into(),
            EngineSpec::Adapter(e) => e.command_line(),
        }
    }
}

/// How outputs are compared with the reference.
#[derive(Debug, Clone, PartialEq)]
pub enum MetricSpec {
    Builtin,
    Encoder(AdapterEndpoint),
    Scorer(AdapterEndpoint),
}

impl MetricSpec {
    /// `builtin`, `encoder:CMD` or `scorer:CMD`.
    pub fn parse(text: &str) -> Result<Self, SessionError> {
        if text == "builtin" {
            return Ok(MetricSpec::Builtin);
        }
        if let Some(cmd) = text.strip_prefix("encoder:") {
            return Ok(MetricSpec::Encoder(AdapterEndpoint::parse(cmd, Role::Encoder)?));
        }
        if let Some(cmd) = text.strip_prefix("scorer:") {
            return Ok(MetricSpec::Scorer(AdapterEndpoint::parse(cmd, Role::Scorer)?));
        }
        Err(SessionError::Usage(format!(
            "metric must be 'builtin', 'encoder:CMD' or 'scorer:CMD', got '{text}'"
        )))
    }

    pub fn with_timeout(self, timeout: std::time::Duration) -> Self {
        match self {
            MetricSpec::Builtin => MetricSpec::Builtin,
            MetricSpec::Encoder(e) => MetricSpec::Encoder(e.with_timeout(timeout)),
            MetricSpec::Scorer(e) => MetricSpec::Scorer(e.with_timeout(timeout)),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            MetricSpec::Builtin => "builtin".into(),
            MetricSpec::Encoder(e) => format!("encoder:{}", e.command_line()),
            MetricSpec::Scorer(e) => format!("scorer:{}", e.command_line()),
        }
    }

    pub fn uses_adapter(&self) -> bool {
        !matches!(self, MetricSpec::Builtin)
    }
}

/// A process that is relaunched when it has died.
#[derive(Debug)]
struct Relaunching {
    endpoint: AdapterEndpoint,
    process: Option<AdapterProcess>,
}

impl Relaunching {
    fn launch(endpoint: &AdapterEndpoint) -> Result<Self, AdapterError> {
        let process = AdapterProcess::launch(endpoint)?;
        Ok(Relaunching {
            endpoint: endpoint.clone(),
            process: Some(process),
        })
    }

    fn get(&mut self) -> Result<&mut AdapterProcess, AdapterError> {
        if !self.process.as_ref().is_some_and(AdapterProcess::is_alive) {
            self.process = None;
            self.process = Some(AdapterProcess::launch(&self.endpoint)?);
        }
        Ok(self.process.as_mut().expect("just launched"))
    }

    fn process(&self) -> &AdapterProcess {
        self.process.as_ref().expect("launched")
    }
}

/// A transformation chain, in-process or behind an adapter.
#[derive(Debug)]
pub struct Engine {
    inner: EngineInner,
    space: ParamSpace,
    id: String,
}

#[derive(Debug)]
enum EngineInner {
    Builtin(&'static PhotoChain),
    Adapter(Box<Relaunching>),
}

impl Engine {
    pub fn open(spec: &EngineSpec) -> Result<Self, SessionError> {
        match spec {
            EngineSpec::Builtin => Ok(Engine::builtin()),
            EngineSpec::Adapter(endpoint) => {
                let proc = Relaunching::launch(endpoint)?;
                let caps = proc.process().capabilities();
                let space = caps.space.clone().expect("transform role declares a space");
                let id = caps.id();
                Ok(Engine {
                    inner: EngineInner::Adapter(Box::new(proc)),
                    space,
                    id,
                })
            }
        }
    }

    pub fn builtin() -> Self {
        let chain = PhotoChain::builtin();
        Engine {
            inner: EngineInner::Builtin(chain),
            space: chain.space().clone(),
            id: format!("builtin-chain/{}", chain.presets().version()),
        }
    }

    pub fn space(&self) -> &ParamSpace {
        &self.space
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// SHA-256 of the preset file, for the builtin engine.
    pub fn preset_hash(&self) -> Option<String> {
        match &self.inner {
            EngineInner::Builtin(chain) => Some(chain.presets().sha256().to_string()),
            EngineInner::Adapter(_) => None,
        }
    }

    /// Applies the chain. The result is always 8-bit quantized, exactly as
    /// it would be after a PNG round trip, so in-process and adapter runs
    /// see the same pixels.
    pub fn apply(&mut self, x: &ImageBuf, a: &Assignment) -> Result<ImageBuf, SessionError> {
        match &mut self.inner {
            EngineInner::Builtin(chain) => Ok(chain.apply(x, a)?.quantized()),
            EngineInner::Adapter(proc) => Ok(proc.get()?.transform_image(x, a)?),
        }
    }
}

/// A style metric with its norm and weights.
#[derive(Debug)]
pub struct Metric {
    inner: MetricInner,
    norm: Norm,
    weights: Option<Vec<f64>>,
    id: String,
}

#[derive(Debug)]
enum MetricInner {
    Builtin,
    Encoder(Relaunching),
    Scorer(Relaunching),
}

impl Metric {
    pub fn open(spec: &MetricSpec, norm: Norm, weights: Option<Vec<f64>>) -> Result<Self, SessionError> {
        let (inner, id) = match spec {
            MetricSpec::Builtin => (MetricInner::Builtin, BUILTIN_METRIC_ID.to_string()),
            MetricSpec::Encoder(e) => {
                let p = Relaunching::launch(e)?;
                let id = p.process().capabilities().id();
                (MetricInner::Encoder(p), id)
            }
            MetricSpec::Scorer(e) => {
                let p = Relaunching::launch(e)?;
                let id = p.process().capabilities().id();
                (MetricInner::Scorer(p), id)
            }
        };
        Ok(Metric {
            inner,
            norm,
            weights,
            id,
        })
    }

    pub fn builtin() -> Self {
        Metric {
            inner: MetricInner::Builtin,
            norm: Norm::L1,
            weights: None,
            id: BUILTIN_METRIC_ID.into(),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn norm(&self) -> Norm {
        self.norm
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn is_scorer(&self) -> bool {
        matches!(self.inner, MetricInner::Scorer(_))
    }

    /// Descriptor of `img`; `None` for a scorer.
    pub fn descriptor(&mut self, img: &ImageBuf) -> Result<Option<StyleDescriptor>, SessionError> {
        match &mut self.inner {
            MetricInner::Builtin => Ok(Some(encode_builtin(img)?)),
            MetricInner::Encoder(p) => Ok(Some(p.get()?.encode_image(img)?)),
            MetricInner::Scorer(_) => Ok(None),
        }
    }

    /// Objective value of `y` against the cached reference descriptor.
    pub fn objective(&mut self, y: &ImageBuf, reference: Option<&StyleDescriptor>) -> Result<f64, SessionError> {
        if let MetricInner::Scorer(p) = &mut self.inner {
            return Ok(p.get()?.score_image(y)?);
        }
        let d = self.descriptor(y)?.expect("descriptor metric");
        let r = reference.expect("descriptor metrics cache the reference");
        Ok(distance(&d, r, self.norm, self.weights.as_deref())?)
    }
}

/// An input image and its label.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub label: String,
    pub image: ImageBuf,
}

/// Trials done so far in a running study.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct Progress {
    pub trials_done: usize,
    pub budget: usize,
    pub best_objective: Option<f64>,
}

/// Outcome of [`Transcriber::run`].
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub best: TrialRecord,
    pub history: Vec<TrialRecord>,
    pub best_image: ImageBuf,
}

/// Everything needed to evaluate the objective for an assignment.
#[derive(Debug)]
pub struct Transcriber {
    candidates: Vec<Candidate>,
    engine: Engine,
    metric: Metric,
    reference_descriptor: Option<StyleDescriptor>,
    space: ParamSpace,
}

impl Transcriber {
    /// Encodes the reference once and builds the search space. With two or
    /// more candidates, a categorical `candidate_index` over their labels is
    /// prepended (identity: the first label).
    pub fn new(
        candidates: Vec<Candidate>,
        reference: &ImageBuf,
        engine: Engine,
        mut metric: Metric,
    ) -> Result<Self, SessionError> {
        if candidates.is_empty() {
            return Err(SessionError::Input("at least one input image is required".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &candidates {
            if !seen.insert(c.label.as_str()) {
                return Err(SessionError::Input(format!("duplicate candidate label '{}'", c.label)));
            }
        }
        let reference_descriptor = metric.descriptor(reference)?;
        if let Some(r) = &reference_descriptor {
            // surfaces weight-length problems before any trial runs
            distance(r, r, metric.norm, metric.weights.as_deref())?;
        }
        let mut space = engine.space().clone();
        if candidates.len() >= 2 {
            let labels: Vec<&str> = candidates.iter().map(|c| c.label.as_str()).collect();
            let spec = ParamSpec::categorical(CANDIDATE_PARAM, labels)
                .with_identity(Value::Choice(candidates[0].label.clone()));
            space = space.prepend(spec)?;
        }
        Ok(Transcriber {
            candidates,
            engine,
            metric,
            reference_descriptor,
            space,
        })
    }

    pub fn space(&self) -> &ParamSpace {
        &self.space
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn reference_descriptor(&self) -> Option<&StyleDescriptor> {
        self.reference_descriptor.as_ref()
    }

    pub fn is_generative(&self) -> bool {
        self.candidates.len() >= 2
    }

    /// Index of the candidate an assignment selects.
    pub fn candidate_of(&self, a: &Assignment) -> usize {
        if !self.is_generative() {
            return 0;
        }
        let label = a.get(CANDIDATE_PARAM).and_then(Value::as_choice);
        self.candidates
            .iter()
            .position(|c| Some(c.label.as_str()) == label)
            .unwrap_or(0)
    }

    /// Assignment restricted to the engine's own parameters.
    pub fn engine_assignment(&self, a: &Assignment) -> Assignment {
        let mut a = a.clone();
        a.remove(CANDIDATE_PARAM);
        a
    }

    /// Identity trials evaluated before sampling: the identity assignment,
    /// once per candidate in selection mode.
    pub fn forced_trials(&self) -> Result<Vec<Assignment>, SessionError> {
        let identity = self.space.identity_assignment().map_err(|e| {
            SessionError::Input(format!("every parameter needs an identity value for the baseline trial: {e}"))
        })?;
        if !self.is_generative() {
            return Ok(vec![identity]);
        }
        Ok(self
            .candidates
            .iter()
            .map(|c| {
                let mut a = identity.clone();
                a.set(CANDIDATE_PARAM, Value::Choice(c.label.clone()));
                a
            })
            .collect())
    }

    /// Renders the output for `a` after validating it against the space.
    pub fn render(&mut self, a: &Assignment) -> Result<ImageBuf, SessionError> {
        let violations = self.space.validate(a);
        if !violations.is_empty() {
            return Err(SessionError::Invalid(violations));
        }
        let idx = self.candidate_of(a);
        let engine_a = self.engine_assignment(a);
        let x = &self.candidates[idx].image;
        self.engine.apply(x, &engine_a)
    }

    /// Objective of an already rendered output.
    pub fn score(&mut self, y: &ImageBuf) -> Result<f64, SessionError> {
        self.metric.objective(y, self.reference_descriptor.as_ref())
    }

    pub fn evaluate(&mut self, a: &Assignment) -> Result<(ImageBuf, f64), SessionError> {
        let y = self.render(a)?;
        let v = self.score(&y)?;
        Ok((y, v))
    }

    /// Runs a study: the forced identity trials first (they count toward the
    /// budget), then sampled ones. Failed evaluations are recorded and the
    /// study continues. `observe` sees every trial with the progress so far.
    pub fn run(
        &mut self,
        config: &StudyConfig,
        mut observe: impl FnMut(&TrialRecord, &Progress),
    ) -> Result<RunOutcome, SessionError> {
        let mut study = Study::new(self.space.clone(), *config)?;
        for a in self.forced_trials()?.into_iter().take(config.budget) {
            study.enqueue(a)?;
        }
        let mut best: Option<(f64, ImageBuf)> = None;
        let mut progress = Progress {
            trials_done: 0,
            budget: config.budget,
            best_objective: None,
        };
        let outcome = study.run_with(
            |a| match self.evaluate(a) {
                Ok((y, v)) => {
                    // strict improvement keeps the earliest of tied trials
                    if v.is_finite() && best.as_ref().is_none_or(|(b, _)| v < *b) {
                        best = Some((v, y));
                    }
                    Ok(v)
                }
                Err(e) => Err(e.to_string()),
            },
            |record| {
                progress.trials_done += 1;
                if let Some(v) = record.objective {
                    if progress.best_objective.is_none_or(|b| v < b) {
                        progress.best_objective = Some(v);
                    }
                }
                observe(record, &progress);
            },
        )?;
        let (_, best_image) = best.expect("a completed trial exists");
        debug_assert_eq!(best_of(&outcome.history).map(|t| t.index), Some(outcome.best.index));
        Ok(RunOutcome {
            best: outcome.best,
            history: outcome.history,
            best_image,
        })
    }
}

pub(crate) fn check_overrides(space: &ParamSpace, overrides: &Assignment) -> Result<(), SessionError> {
    let unknown: Vec<&str> = overrides.names().filter(|n| space.get(n).is_none()).collect();
    if !unknown.is_empty() {
        return Err(SessionError::Input(format!("unknown parameter(s): {}", unknown.join(", "))));
    }
    Ok(())
}
