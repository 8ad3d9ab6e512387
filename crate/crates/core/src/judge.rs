//! Pairwise comparison judges.
//!
//! A judge looks at two texts written for the same context and says whether
//! the first is better, worse, or indistinguishable from the second. The
//! trained neural comparator lives out of process and is reached through
//! [`RemoteJudge`]; the other judges here exist for validation and tests.

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Duration;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rating::GameOutcome;
use crate::seed;

const SIMPLEX_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JudgeError {
    #[error("judge unavailable: {0}")]
    Unavailable(String),
    #[error("judge timed out")]
    Timeout,
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("unknown player `{0}`")]
    UnknownPlayer(String),
    #[error("verdict script exhausted after {0} verdicts")]
    ScriptExhausted(usize),
    #[error("invalid comparison request: {0}")]
    InvalidRequest(String),
    #[error("invalid judge config: {0}")]
    InvalidConfig(String),
}

impl JudgeError {
    /// Transport failures are worth retrying; everything else is not.
    pub fn is_transport(&self) -> bool {
        matches!(self, JudgeError::Unavailable(_) | JudgeError::Timeout)
    }
}

/// Verdict label, always read as "first relative to second".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Better,
    Worse,
    Tie,
}

impl Label {
    pub fn swapped(self) -> Self {
        match self {
            Label::Better => Label::Worse,
            Label::Worse => Label::Better,
            Label::Tie => Label::Tie,
        }
    }

    pub fn outcome(self) -> GameOutcome {
        match self {
            Label::Better => GameOutcome::Win,
            Label::Worse => GameOutcome::Loss,
            Label::Tie => GameOutcome::Tie,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Probs {
    pub better: f64,
    pub worse: f64,
    pub tie: f64,
}

impl Probs {
    pub fn get(&self, label: Label) -> f64 {
        match label {
            Label::Better => self.better,
            Label::Worse => self.worse,
            Label::Tie => self.tie,
        }
    }

    pub fn one_hot(label: Label) -> Self {
        let mut p = Probs {
            better: 0.0,
            worse: 0.0,
            tie: 0.0,
        };
        match label {
            Label::Better => p.better = 1.0,
            Label::Worse => p.worse = 1.0,
            Label::Tie => p.tie = 1.0,
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Verdict {
    pub label: Label,
    pub probs: Probs,
}

impl Verdict {
    pub fn certain(label: Label) -> Self {
        Self {
            label,
            probs: Probs::one_hot(label),
        }
    }

    /// The verdict for the same pair presented in the other order.
    pub fn swapped(&self) -> Self {
        Self {
            label: self.label.swapped(),
            probs: Probs {
                better: self.probs.worse,
                worse: self.probs.better,
                tie: self.probs.tie,
            },
        }
    }

    /// Checks the probability simplex, argmax consistency and the no-tie contract.
    pub fn validate(&self, allow_tie: bool) -> Result<(), JudgeError> {
        let p = self.probs;
        let all = [p.better, p.worse, p.tie];
        if all.iter().any(|x| !x.is_finite() || *x < 0.0 || *x > 1.0) {
            return Err(JudgeError::Protocol(format!("probabilities out of range: {p:?}")));
        }
        let sum: f64 = all.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(JudgeError::Protocol(format!("probabilities sum to {sum}")));
        }
        let max = all.iter().cloned().fold(f64::MIN, f64::max);
        if p.get(self.label) + SIMPLEX_TOLERANCE < max {
            return Err(JudgeError::Protocol(format!(
                "label {:?} is not the argmax of {p:?}",
                self.label
            )));
        }
        if !allow_tie && p.tie != 0.0 {
            return Err(JudgeError::Protocol(format!(
                "tie probability {} returned for a no-tie request",
                p.tie
            )));
        }
        Ok(())
    }
}

/// Identifies where a compared text came from. Only synthetic judges look at it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Source {
    pub id: String,
    /// Fallback key, e.g. the model that produced a sample.
    pub group: Option<String>,
}

impl Source {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            group: None,
        }
    }

    pub fn with_group(id: impl Into<String>, group: Option<String>) -> Self {
        Self { id: id.into(), group }
    }
}

/// Out-of-band information attached to a request; never sent over the wire.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RequestMeta {
    pub first_source: Source,
    pub second_source: Source,
    pub match_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRequest {
    pub context: String,
    pub first: String,
    pub second: String,
    pub allow_tie: bool,
    #[serde(skip)]
    pub meta: RequestMeta,
}

impl ComparisonRequest {
    pub fn new(context: impl Into<String>, first: impl Into<String>, second: impl Into<String>) -> Self {
        Self {
            context: context.into(),
            first: first.into(),
            second: second.into(),
            allow_tie: true,
            meta: RequestMeta::default(),
        }
    }

    pub fn allow_tie(mut self, allow: bool) -> Self {
        self.allow_tie = allow;
        self
    }

    pub fn with_meta(mut self, meta: RequestMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn swapped(&self) -> Self {
        Self {
            context: self.context.clone(),
            first: self.second.clone(),
            second: self.first.clone(),
            allow_tie: self.allow_tie,
            meta: RequestMeta {
                first_source: self.meta.second_source.clone(),
                second_source: self.meta.first_source.clone(),
                match_seed: self.meta.match_seed,
            },
        }
    }

    pub fn validate(&self) -> Result<(), JudgeError> {
        if self.first.trim().is_empty() || self.second.trim().is_empty() {
            return Err(JudgeError::InvalidRequest("compared texts must be non-empty".into()));
        }
        Ok(())
    }
}

/// Anything that can compare two texts sharing a context.
///
/// Implementations must tolerate concurrent calls.
pub trait Judge: Send + Sync {
    fn compare(&self, request: &ComparisonRequest) -> Result<Verdict, JudgeError>;
}

impl<J: Judge + ?Sized> Judge for &J {
    fn compare(&self, request: &ComparisonRequest) -> Result<Verdict, JudgeError> {
        (**self).compare(request)
    }
}

impl<J: Judge + ?Sized> Judge for Box<J> {
    fn compare(&self, request: &ComparisonRequest) -> Result<Verdict, JudgeError> {
        (**self).compare(request)
    }
}

impl<J: Judge + ?Sized> Judge for std::sync::Arc<J> {
    fn compare(&self, request: &ComparisonRequest) -> Result<Verdict, JudgeError> {
        (**self).compare(request)
    }
}

/// How a verdict becomes a game result.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum DecisionRule {
    #[default]
    Argmax,
    /// Decisive only if the decisive label carries at least `threshold` mass.
    Confidence { threshold: f64 },
}

impl DecisionRule {
    pub fn outcome(&self, verdict: &Verdict) -> GameOutcome {
        match *self {
            DecisionRule::Argmax => verdict.label.outcome(),
            DecisionRule::Confidence { threshold } => match verdict.label {
                Label::Tie => GameOutcome::Tie,
                l if verdict.probs.get(l) >= threshold => l.outcome(),
                _ => GameOutcome::Tie,
            },
        }
    }
}

// ---------------------------------------------------------------------------
// Oracle judge
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleJudgeConfig {
    /// True quality per source id (player, sample, model or checkpoint key).
    pub latent_quality: BTreeMap<String, f64>,
    #[serde(default)]
    pub sample_noise: f64,
    #[serde(default)]
    pub tie_band: f64,
    #[serde(default)]
    pub flip_prob: f64,
    #[serde(default)]
    pub seed: u64,
}

impl OracleJudgeConfig {
    pub fn new(latent_quality: BTreeMap<String, f64>) -> Self {
        Self {
            latent_quality,
            sample_noise: 0.0,
            tie_band: 0.0,
            flip_prob: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), JudgeError> {
        let bad = |m: &str| Err(JudgeError::InvalidConfig(m.to_string()));
        if !(self.sample_noise.is_finite() && self.sample_noise >= 0.0) {
            return bad("oracle.sample_noise must be finite and >= 0");
        }
        if !(self.tie_band.is_finite() && self.tie_band >= 0.0) {
            return bad("oracle.tie_band must be finite and >= 0");
        }
        if !(0.0..0.5).contains(&self.flip_prob) {
            return bad("oracle.flip_prob must lie in [0, 0.5)");
        }
        if self.latent_quality.values().any(|q| !q.is_finite()) {
            return bad("oracle.latent_quality values must be finite");
        }
        Ok(())
    }

    fn quality(&self, source: &Source) -> Result<f64, JudgeError> {
        self.latent_quality
            .get(&source.id)
            .or_else(|| source.group.as_ref().and_then(|g| self.latent_quality.get(g)))
            .copied()
            .ok_or_else(|| JudgeError::UnknownPlayer(source.id.clone()))
    }

    fn drawn_quality(&self, source: &Source, match_seed: u64) -> Result<f64, JudgeError> {
        let q = self.quality(source)?;
        if self.sample_noise == 0.0 {
            return Ok(q);
        }
        let mut rng = seed::stream(self.seed, &format!("oracle-noise/{}", source.id), match_seed);
        let noise = Normal::new(0.0, self.sample_noise)
            .expect("validated noise")
            .sample(&mut rng);
        Ok(q + noise)
    }
}

/// Synthetic ground-truth verdict for two sources.
///
/// Randomness is keyed on the source ids and `match_seed`, never on the
/// position, so presenting the pair in the other order yields the swapped verdict.
pub fn oracle_compare(
    config: &OracleJudgeConfig,
    first: &Source,
    second: &Source,
    match_seed: u64,
    allow_tie: bool,
) -> Result<Verdict, JudgeError> {
    let qa = config.drawn_quality(first, match_seed)?;
    let qb = config.drawn_quality(second, match_seed)?;
    let diff = qa - qb;

    let truth = if allow_tie && diff.abs() < config.tie_band {
        Label::Tie
    } else if diff > 0.0 {
        Label::Better
    } else if diff < 0.0 {
        Label::Worse
    } else if first.id <= second.id {
        Label::Better
    } else {
        Label::Worse
    };

    let label = if truth != Label::Tie && config.flip_prob > 0.0 {
        let mut rng = seed::stream(config.seed, "oracle-flip", match_seed);
        if rng.random::<f64>() < config.flip_prob {
            truth.swapped()
        } else {
            truth
        }
    } else {
        truth
    };

    let eps = config.flip_prob;
    if eps == 0.0 {
        return Ok(Verdict::certain(label));
    }
    let probs = if allow_tie {
        let rest = eps / 2.0;
        let mut p = Probs {
            better: rest,
            worse: rest,
            tie: rest,
        };
        match label {
            Label::Better => p.better = 1.0 - eps,
            Label::Worse => p.worse = 1.0 - eps,
            Label::Tie => p.tie = 1.0 - eps,
        }
        p
    } else if label == Label::Better {
        Probs {
            better: 1.0 - eps,
            worse: eps,
            tie: 0.0,
        }
    } else {
        Probs {
            better: eps,
            worse: 1.0 - eps,
            tie: 0.0,
        }
    };
    Ok(Verdict { label, probs })
}

#[derive(Debug, Clone)]
pub struct OracleJudge {
    config: OracleJudgeConfig,
}

impl OracleJudge {
    pub fn new(config: OracleJudgeConfig) -> Result<Self, JudgeError> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &OracleJudgeConfig {
        &self.config
    }
}

impl Judge for OracleJudge {
    fn compare(&self, request: &ComparisonRequest) -> Result<Verdict, JudgeError> {
        request.validate()?;
        oracle_compare(
            &self.config,
            &request.meta.first_source,
            &request.meta.second_source,
            request.meta.match_seed,
            request.allow_tie,
        )
    }
}

// ---------------------------------------------------------------------------
// Scripted judge
// ---------------------------------------------------------------------------

/// Replays a fixed list of labels in call order.
#[derive(Debug)]
pub struct ScriptedJudge {
    script: Vec<Label>,
    cursor: Mutex<usize>,
}

impl ScriptedJudge {
    pub fn new(script: Vec<Label>) -> Result<Self, JudgeError> {
        if script.is_empty() {
            return Err(JudgeError::InvalidConfig("verdict script is empty".into()));
        }
        Ok(Self {
            script,
            cursor: Mutex::new(0),
        })
    }

    pub fn consumed(&self) -> usize {
        *self.cursor.lock().expect("cursor lock")
    }
}

impl Judge for ScriptedJudge {
    fn compare(&self, request: &ComparisonRequest) -> Result<Verdict, JudgeError> {
        request.validate()?;
        let mut cursor = self.cursor.lock().expect("cursor lock");
        let label = *self.script.get(*cursor).ok_or(JudgeError::ScriptExhausted(*cursor))?;
        *cursor += 1;
        Ok(Verdict::certain(label))
    }
}

/// Prefers the lexicographically larger text; ties on identical texts.
/// Deterministic and antisymmetric, handy in tests.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalJudge;

impl Judge for LexicalJudge {
    fn compare(&self, request: &ComparisonRequest) -> Result<Verdict, JudgeError> {
        request.validate()?;
        let label = match request.first.cmp(&request.second) {
            std::cmp::Ordering::Greater => Label::Better,
            std::cmp::Ordering::Less => Label::Worse,
            std::cmp::Ordering::Equal if request.allow_tie => Label::Tie,
            std::cmp::Ordering::Equal => Label::Better,
        };
        Ok(Verdict::certain(label))
    }
}

// ---------------------------------------------------------------------------
// No-tie adapter
// ---------------------------------------------------------------------------

/// Removes the tie option from a verdict.
///
/// The tie mass is spread over better/worse in proportion to their current
/// values. If both end up equal, the lexicographically smaller first text wins.
pub fn binarize(verdict: &Verdict, first: &str, second: &str) -> Verdict {
    let p = verdict.probs;
    let decisive = p.better + p.worse;
    let (better, worse) = if decisive > 0.0 {
        (p.better / decisive, p.worse / decisive)
    } else {
        (0.5, 0.5)
    };
    let label = if better > worse {
        Label::Better
    } else if worse > better {
        Label::Worse
    } else if first <= second {
        Label::Better
    } else {
        Label::Worse
    };
    Verdict {
        label,
        probs: Probs {
            better,
            worse,
            tie: 0.0,
        },
    }
}

/// Wraps a judge so that it never returns a tie.
#[derive(Debug, Clone)]
pub struct BinaryAdapter<J> {
    inner: J,
}

impl<J: Judge> BinaryAdapter<J> {
    pub fn new(inner: J) -> Self {
        Self { inner }
    }
}

impl<J: Judge> Judge for BinaryAdapter<J> {
    fn compare(&self, request: &ComparisonRequest) -> Result<Verdict, JudgeError> {
        let verdict = self.inner.compare(request)?;
        Ok(binarize(&verdict, &request.first, &request.second))
    }
}

// ---------------------------------------------------------------------------
// Remote judge
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteJudgeConfig {
    pub endpoint: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_retries() -> u32 {
    2
}

#[derive(Serialize)]
struct BatchRequest<'a> {
    items: &'a [ComparisonRequest],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BatchResponse {
    results: Vec<Verdict>,
}

#[derive(Deserialize)]
struct HealthResponse {
    status: String,
}

/// HTTP client for an out-of-process comparator.
pub struct RemoteJudge {
    base: String,
    retries: u32,
    agent: ureq::Agent,
}

impl std::fmt::Debug for RemoteJudge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteJudge")
            .field("base", &self.base)
            .field("retries", &self.retries)
            .finish()
    }
}

impl RemoteJudge {
    pub fn new(config: &RemoteJudgeConfig) -> Result<Self, JudgeError> {
        if config.endpoint.trim().is_empty() {
            return Err(JudgeError::InvalidConfig("remote endpoint is empty".into()));
        }
        if config.timeout_ms == 0 {
            return Err(JudgeError::InvalidConfig("remote timeout must be positive".into()));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            base: config.endpoint.trim_end_matches('/').to_string(),
            retries: config.retries,
            agent,
        })
    }

    fn with_retries<T>(&self, mut call: impl FnMut() -> Result<T, JudgeError>) -> Result<T, JudgeError> {
        let mut attempt = 0;
        loop {
            match call() {
                Err(e) if e.is_transport() && attempt < self.retries => {
                    attempt += 1;
                    tracing::warn!(attempt, error = %e, "retrying remote judge");
                }
                other => return other,
            }
        }
    }

    fn post<T: serde::de::DeserializeOwned>(&self, path: &str, body: &impl Serialize) -> Result<T, JudgeError> {
        let url = format!("{}{}", self.base, path);
        let mut response = self.agent.post(&url).send_json(body).map_err(transport_error)?;
        let status = response.status().as_u16();
        if status != 200 {
            return Err(JudgeError::Protocol(format!("{path} returned HTTP {status}")));
        }
        response
            .body_mut()
            .read_json::<T>()
            .map_err(|e| match transport_error(e) {
                JudgeError::Unavailable(m) => JudgeError::Protocol(m),
                other => other,
            })
    }

    pub fn health(&self) -> Result<(), JudgeError> {
        self.with_retries(|| {
            let url = format!("{}/health", self.base);
            let mut response = self.agent.get(&url).call().map_err(transport_error)?;
            if response.status().as_u16() != 200 {
                return Err(JudgeError::Protocol(format!(
                    "/health returned HTTP {}",
                    response.status().as_u16()
                )));
            }
            let health: HealthResponse = response
                .body_mut()
                .read_json()
                .map_err(|e| JudgeError::Protocol(e.to_string()))?;
            if health.status != "ok" {
                return Err(JudgeError::Unavailable(format!("status `{}`", health.status)));
            }
            Ok(())
        })
    }

    pub fn compare_batch(&self, requests: &[ComparisonRequest]) -> Result<Vec<Verdict>, JudgeError> {
        for r in requests {
            r.validate()?;
        }
        let response: BatchResponse =
            self.with_retries(|| self.post("/compare_batch", &BatchRequest { items: requests }))?;
        if response.results.len() != requests.len() {
            return Err(JudgeError::Protocol(format!(
                "batch of {} answered with {} results",
                requests.len(),
                response.results.len()
            )));
        }
        for (verdict, request) in response.results.iter().zip(requests) {
            verdict.validate(request.allow_tie)?;
        }
        Ok(response.results)
    }
}

fn transport_error(e: ureq::Error) -> JudgeError {
    match e {
        ureq::Error::Timeout(_) => JudgeError::Timeout,
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => JudgeError::Timeout,
        ureq::Error::Io(io) => JudgeError::Unavailable(io.to_string()),
        ureq::Error::ConnectionFailed | ureq::Error::HostNotFound => JudgeError::Unavailable(e.to_string()),
        ureq::Error::Json(err) => JudgeError::Protocol(format!("malformed body: {err}")),
        other => JudgeError::Protocol(other.to_string()),
    }
}

/// Single remote comparison with validation of the returned verdict.
pub fn remote_compare(judge: &RemoteJudge, request: &ComparisonRequest) -> Result<Verdict, JudgeError> {
    request.validate()?;
    let verdict: Verdict = judge.with_retries(|| judge.post("/compare", request))?;
    verdict.validate(request.allow_tie)?;
    Ok(verdict)
}

impl Judge for RemoteJudge {
    fn compare(&self, request: &ComparisonRequest) -> Result<Verdict, JudgeError> {
        remote_compare(self, request)
    }
}
