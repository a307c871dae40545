//! Sequential black-box minimization over a [`ParamSpace`].
//!
//! Two samplers are provided: uniform random search and an independent
//! (per-parameter) Tree-structured Parzen Estimator. A [`Study`] owns the
//! trial history and a single seeded random stream, so equal seed, space,
//! config and objective always produce the same trial sequence.
//!
//! ```
//! use partran::optimizer::{run_study, StudyConfig};
//! use partran::params::{ParamSpace, ParamSpec};
//!
//! let space = ParamSpace::new(vec![ParamSpec::continuous("x", 0.0, 1.0)]).unwrap();
//! let config = StudyConfig { seed: 7, budget: 200, ..StudyConfig::default() };
//! let outcome = run_study(
//!     |a| Ok((a.real("x") - 0.3).powi(2)),
//!     &space,
//!     &config,
//! )
//! .unwrap();
//! assert_eq!(outcome.history.len(), 200);
//! assert!((outcome.best.assignment.real("x") - 0.3).abs() <= 0.05);
//! ```

pub mod bench;
pub mod parzen;
pub mod trial_log;

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::params::{describe_violations, Assignment, ParamKind, ParamSpace, ParamSpec, Value};

use parzen::{CategoricalEstimator, ParzenEstimator};

pub use parzen::tpe_density_eval;

/// The study's random stream.
pub type StudyRng = ChaCha8Rng;

#[derive(Debug, thiserror::Error)]
pub enum OptimizerError {
    #[error("invalid study config: {0}")]
    InvalidConfig(String),
    #[error("all {0} evaluated trials failed; last failure: {1}")]
    AllTrialsFailed(usize, String),
    #[error("query {query} is outside the domain of '{name}'")]
    QueryOutOfDomain { name: String, query: String },
    #[error("enqueued assignment is invalid: {0}")]
    InvalidAssignment(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Random,
    Tpe,
}

impl std::str::FromStr for SamplerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "random" => Ok(SamplerKind::Random),
            "tpe" => Ok(SamplerKind::Tpe),
            other => Err(format!("unknown sampler '{other}' (expected random or tpe)")),
        }
    }
}

/// TPE knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TpeConfig {
    /// Completed trials drawn uniformly before the Parzen model kicks in.
    pub n_startup: usize,
    /// Fraction of completed trials assigned to the good density.
    pub gamma: f64,
    /// Candidates drawn from the good density per parameter.
    pub n_candidates: usize,
    /// Weight of the uniform prior component (and categorical smoothing).
    pub prior_weight: f64,
    /// Optional upper bound on the size of the good set.
    #[serde(default)]
    pub max_good: Option<usize>,
}

impl Default for TpeConfig {
    fn default() -> Self {
        TpeConfig {
            n_startup: 20,
            gamma: 0.25,
            n_candidates: 24,
            prior_weight: 1.0,
            max_good: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub seed: u64,
    /// Total number of trials, including any enqueued ones.
    pub budget: usize,
    pub sampler: SamplerKind,
    pub tpe: TpeConfig,
    /// Abort once this many leading trials have all failed.
    #[serde(default = "default_abort_after")]
    pub abort_after: usize,
}

fn default_abort_after() -> usize {
    50
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            seed: 0,
            budget: 1000,
            sampler: SamplerKind::Tpe,
            tpe: TpeConfig::default(),
            abort_after: default_abort_after(),
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        let bad = |m: &str| Err(OptimizerError::InvalidConfig(m.to_string()));
        if self.budget < 1 {
            return bad("budget must be at least 1");
        }
        if self.tpe.n_startup < 1 {
            return bad("n_startup must be at least 1");
        }
        if !(self.tpe.gamma > 0.0 && self.tpe.gamma < 1.0) {
            return bad("gamma must lie strictly between 0 and 1");
        }
        if self.tpe.n_candidates < 1 {
            return bad("n_candidates must be at least 1");
        }
        if !(self.tpe.prior_weight.is_finite() && self.tpe.prior_weight > 0.0) {
            return bad("prior_weight must be positive");
        }
        if self.abort_after < 1 {
            return bad("abort_after must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialState {
    Complete,
    Failed,
}

/// One evaluated trial. `objective` is `None` exactly when the trial failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub assignment: Assignment,
    pub objective: Option<f64>,
    pub state: TrialState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl TrialRecord {
    pub fn is_complete(&self) -> bool {
        self.state == TrialState::Complete
    }
}

/// Suggests the next assignment given the history so far.
///
/// Uniform per parameter while fewer than `n_startup` trials have completed
/// (or always, for the random sampler); independent TPE otherwise.
pub fn suggest(
    history: &[TrialRecord],
    space: &ParamSpace,
    config: &StudyConfig,
    rng: &mut StudyRng,
) -> Assignment {
    let mut completed: Vec<&TrialRecord> = history.iter().filter(|t| t.is_complete()).collect();
    if config.sampler == SamplerKind::Random || completed.len() < config.tpe.n_startup {
        return sample_uniform(space, rng);
    }
    // ties go to the earlier trial
    completed.sort_by(|a, b| {
        let (oa, ob) = (a.objective.expect("complete"), b.objective.expect("complete"));
        oa.total_cmp(&ob).then(a.index.cmp(&b.index))
    });
    let n_good = ((config.tpe.gamma * completed.len() as f64).ceil() as usize).clamp(1, completed.len());
    let n_good = config.tpe.max_good.map_or(n_good, |m| n_good.min(m.max(1)));
    let (good, bad) = completed.split_at(n_good);

    let mut out = Assignment::default();
    for spec in space.specs() {
        let value = suggest_param(spec, good, bad, &config.tpe, rng);
        out.set(spec.name.clone(), value);
    }
    out
}

fn sample_uniform(space: &ParamSpace, rng: &mut StudyRng) -> Assignment {
    let mut out = Assignment::default();
    for spec in space.specs() {
        let value = match &spec.kind {
            ParamKind::Continuous { low, high } => {
                let u: f64 = rng.random();
                Value::Real((low + u * (high - low)).min(*high))
            }
            ParamKind::Integer { low, high } => Value::Int(rng.random_range(*low..=*high)),
            ParamKind::Categorical { choices } => {
                Value::Choice(choices[rng.random_range(0..choices.len())].clone())
            }
        };
        out.set(spec.name.clone(), value);
    }
    out
}

fn suggest_param(
    spec: &ParamSpec,
    good: &[&TrialRecord],
    bad: &[&TrialRecord],
    tpe: &TpeConfig,
    rng: &mut StudyRng,
) -> Value {
    let values = |set: &[&TrialRecord]| -> Vec<Value> {
        set.iter()
            .filter_map(|t| t.assignment.get(&spec.name).cloned())
            .collect()
    };
    match &spec.kind {
        ParamKind::Continuous { low, high } => {
            let reals = |set| values(set).iter().filter_map(Value::as_real).collect::<Vec<_>>();
            let l = ParzenEstimator::new(&reals(good), *low, *high, tpe.prior_weight);
            let g = ParzenEstimator::new(&reals(bad), *low, *high, tpe.prior_weight);
            Value::Real(best_candidate(tpe.n_candidates, || l.sample(rng), |x| ratio(l.pdf(*x), g.pdf(*x))))
        }
        ParamKind::Integer { low, high } => {
            if low == high {
                return Value::Int(*low);
            }
            let ints = |set| {
                values(set)
                    .iter()
                    .filter_map(Value::as_int)
                    .map(|i| i as f64)
                    .collect::<Vec<_>>()
            };
            let (lo, hi) = (*low as f64, *high as f64);
            let l = ParzenEstimator::new(&ints(good), lo, hi, tpe.prior_weight);
            let g = ParzenEstimator::new(&ints(bad), lo, hi, tpe.prior_weight);
            let pick = best_candidate(
                tpe.n_candidates,
                || l.sample(rng).round().clamp(lo, hi),
                |x| ratio(l.pdf(*x), g.pdf(*x)),
            );
            Value::Int(pick as i64)
        }
        ParamKind::Categorical { choices } => {
            let idx = |set| {
                values(set)
                    .iter()
                    .filter_map(|v| v.as_choice().and_then(|c| spec.choice_index(c)))
                    .collect::<Vec<_>>()
            };
            let l = CategoricalEstimator::new(&idx(good), choices.len(), tpe.prior_weight);
            let g = CategoricalEstimator::new(&idx(bad), choices.len(), tpe.prior_weight);
            let pick = best_candidate(tpe.n_candidates, || l.sample(rng), |c| ratio(l.pmf(*c), g.pmf(*c)));
            Value::Choice(choices[pick].clone())
        }
    }
}

fn ratio(l: f64, g: f64) -> f64 {
    l.ln() - g.ln()
}

/// Draws `n` candidates and keeps the first one with the highest score.
fn best_candidate<T>(n: usize, mut draw: impl FnMut() -> T, score: impl Fn(&T) -> f64) -> T {
    let mut best = draw();
    let mut best_score = score(&best);
    for _ in 1..n {
        let c = draw();
        let s = score(&c);
        if s > best_score {
            best = c;
            best_score = s;
        }
    }
    best
}

/// Result of a finished study.
#[derive(Debug, Clone)]
pub struct StudyOutcome {
    pub best: TrialRecord,
    pub history: Vec<TrialRecord>,
}

/// A sequential study: ask for an assignment, evaluate it, tell the result.
#[derive(Debug)]
pub struct Study {
    space: ParamSpace,
    config: StudyConfig,
    rng: StudyRng,
    history: Vec<TrialRecord>,
    queue: VecDeque<Assignment>,
}

impl Study {
    pub fn new(space: ParamSpace, config: StudyConfig) -> Result<Self, OptimizerError> {
        config.validate()?;
        Ok(Study {
            space,
            rng: StudyRng::seed_from_u64(config.seed),
            config,
            history: Vec::new(),
            queue: VecDeque::new(),
        })
    }

    pub fn space(&self) -> &ParamSpace {
        &self.space
    }

    pub fn config(&self) -> &StudyConfig {
        &self.config
    }

    /// Schedules `a` to be evaluated before any sampled assignment.
    /// Enqueued trials do not consume the random stream.
    pub fn enqueue(&mut self, a: Assignment) -> Result<(), OptimizerError> {
        let violations = self.space.validate(&a);
        if !violations.is_empty() {
            return Err(OptimizerError::InvalidAssignment(describe_violations(&violations)));
        }
        self.queue.push_back(a);
        Ok(())
    }

    pub fn history(&self) -> &[TrialRecord] {
        &self.history
    }

    pub fn is_finished(&self) -> bool {
        self.history.len() >= self.config.budget
    }

    pub fn ask(&mut self) -> Assignment {
        match self.queue.pop_front() {
            Some(a) => a,
            None => suggest(&self.history, &self.space, &self.config, &mut self.rng),
        }
    }

    /// Records the outcome of evaluating `assignment`. A non-finite objective
    /// is recorded as a failure.
    pub fn tell(&mut self, assignment: Assignment, result: Result<f64, String>) -> &TrialRecord {
        let index = self.history.len();
        let record = match result {
            Ok(v) if v.is_finite() => TrialRecord {
                index,
                assignment,
                objective: Some(v),
                state: TrialState::Complete,
                message: None,
            },
            Ok(v) => TrialRecord {
                index,
                assignment,
                objective: None,
                state: TrialState::Failed,
                message: Some(format!("non-finite objective {v}")),
            },
            Err(message) => TrialRecord {
                index,
                assignment,
                objective: None,
                state: TrialState::Failed,
                message: Some(message),
            },
        };
        self.history.push(record);
        self.history.last().expect("just pushed")
    }

    /// Minimum-objective completed trial; the earliest wins ties.
    pub fn best(&self) -> Option<&TrialRecord> {
        best_of(&self.history)
    }

    /// Runs the remaining budget, calling `observe` after every trial.
    pub fn run_with<F, O>(&mut self, mut objective: F, mut observe: O) -> Result<StudyOutcome, OptimizerError>
    where
        F: FnMut(&Assignment) -> Result<f64, String>,
        O: FnMut(&TrialRecord),
    {
        while !self.is_finished() {
            let a = self.ask();
            let result = objective(&a);
            let record = self.tell(a, result);
            observe(record);
            let n = self.history.len();
            if n == self.config.abort_after && self.best().is_none() {
                return Err(self.all_failed());
            }
        }
        match self.best() {
            Some(best) => Ok(StudyOutcome {
                best: best.clone(),
                history: self.history.clone(),
            }),
            None => Err(self.all_failed()),
        }
    }

    pub fn run<F>(&mut self, objective: F) -> Result<StudyOutcome, OptimizerError>
    where
        F: FnMut(&Assignment) -> Result<f64, String>,
    {
        self.run_with(objective, |_| {})
    }

    fn all_failed(&self) -> OptimizerError {
        let last = self
            .history
            .last()
            .and_then(|t| t.message.clone())
            .unwrap_or_default();
        OptimizerError::AllTrialsFailed(self.history.len(), last)
    }
}

pub fn best_of(history: &[TrialRecord]) -> Option<&TrialRecord> {
    history.iter().filter(|t| t.is_complete()).fold(None, |best: Option<&TrialRecord>, t| match best {
        Some(b) if b.objective.expect("complete") <= t.objective.expect("complete") => Some(b),
        _ => Some(t),
    })
}

/// Runs a full study of `config.budget` trials.
pub fn run_study<F>(objective: F, space: &ParamSpace, config: &StudyConfig) -> Result<StudyOutcome, OptimizerError>
where
    F: FnMut(&Assignment) -> Result<f64, String>,
{
    Study::new(space.clone(), *config)?.run(objective)
}
