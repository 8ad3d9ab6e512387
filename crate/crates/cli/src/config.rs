//! Run configuration, loaded from one TOML file per run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use skillrank_core::judge::{
    BinaryAdapter, DecisionRule, Judge, Label, OracleJudge, OracleJudgeConfig, RemoteJudge, RemoteJudgeConfig,
    ScriptedJudge,
};
use skillrank_core::monitor::MonitorConfig;
use skillrank_core::rating::RatingConfig;
use skillrank_core::seed;
use skillrank_core::supervision::WeakSupervisionConfig;
use skillrank_core::tournament::TournamentConfig;

use crate::error::CliError;

/// Bumped whenever an output layout changes.
pub const FORMAT_VERSION: u32 = 1;

pub const ENDPOINT_ENV: &str = "SKILLRANK_JUDGE_ENDPOINT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum JudgeKind {
    Oracle,
    Remote,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedJudgeSpec {
    pub labels: Vec<Label>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeSpec {
    pub kind: JudgeKind,
    #[serde(default = "yes")]
    pub allow_tie: bool,
    #[serde(default)]
    pub decision_rule: DecisionRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleJudgeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remote: Option<RemoteJudgeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scripted: Option<ScriptedJudgeSpec>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Sample JSONL.
    pub samples: Option<PathBuf>,
    /// Human score JSONL.
    pub human_scores: Option<PathBuf>,
    /// Metric JSONL for `correlate`.
    pub metrics: Option<PathBuf>,
    /// Directory of per-step sample JSONL files or directories.
    pub checkpoints: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairsConfig {
    /// Truncate every text to this many words (at a sentence boundary when possible).
    pub max_words: Option<usize>,
    pub human_min_gap: i64,
    /// Cap on unordered strong pairs per context.
    pub max_strong_per_context: Option<usize>,
}

impl Default for PairsConfig {
    fn default() -> Self {
        Self {
            max_words: None,
            human_min_gap: 1,
            max_strong_per_context: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateMode {
    /// One player per model, drawing from that model's samples.
    #[default]
    Models,
    /// One player per sample.
    Samples,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateConfig {
    pub mode: RateMode,
    /// In model mode, add human-written samples as a player named `human`.
    pub include_human: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreConfig {
    pub references: usize,
    pub sample_budget: u64,
    pub retries: u32,
    pub reference_points: bool,
    pub sample_rating: bool,
    pub model_rating: bool,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            references: skillrank_core::scoring::DEFAULT_REFERENCE_COUNT,
            sample_budget: skillrank_core::scoring::DEFAULT_SAMPLE_PLAY_BUDGET,
            retries: 2,
            reference_points: true,
            sample_rating: true,
            model_rating: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub players: usize,
    pub spacing: f64,
    /// Explicit latent qualities; overrides `players` and `spacing`.
    pub qualities: Option<Vec<f64>>,
    pub flip_prob: f64,
    pub sample_noise: f64,
    pub tie_band: f64,
    pub runs: usize,
    pub contexts: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            players: 5,
            spacing: 1.0,
            qualities: None,
            flip_prob: 0.1,
            sample_noise: 0.1,
            tie_band: 0.2,
            runs: 20,
            contexts: 10,
        }
    }
}

impl SimulateConfig {
    pub fn latent_qualities(&self) -> Vec<f64> {
        match &self.qualities {
            Some(q) => q.clone(),
            None => (0..self.players).map(|i| i as f64 * self.spacing).collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub rating: RatingConfig,
    pub tournament: TournamentConfig,
    pub monitor: MonitorConfig,
    pub weak_supervision: WeakSupervisionConfig,
    pub judge: Option<JudgeSpec>,
    pub paths: Paths,
    pub pairs: PairsConfig,
    pub rate: RateConfig,
    pub score: ScoreConfig,
    pub simulate: SimulateConfig,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub judge: Option<JudgeKind>,
    pub endpoint: Option<String>,
}

impl RunConfig {
    /// Parses a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut config = Self::parse(&text)?;
        if let Some(dir) = path.parent() {
            config.paths.resolve(dir);
        }
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .map(|s| text[s].lines().next().unwrap_or_default().to_string())
                .unwrap_or_else(|| "<file>".to_string());
            CliError::config(field, e.message().to_string())
        })
    }

    /// Applies overrides; the endpoint falls back to the environment.
    pub fn apply(&mut self, overrides: &Overrides, env_endpoint: Option<String>) -> Result<(), CliError> {
        if let Some(seed) = overrides.seed {
            self.seed = seed;
        }
        if let Some(out) = &overrides.out {
            self.paths.out = Some(out.clone());
        }
        if let Some(kind) = overrides.judge {
            match &mut self.judge {
                Some(spec) => spec.kind = kind,
                None => {
                    self.judge = Some(JudgeSpec {
                        kind,
                        allow_tie: true,
                        decision_rule: DecisionRule::Argmax,
                        oracle: None,
                        remote: None,
                        scripted: None,
                    })
                }
            }
        }
        let endpoint = overrides.endpoint.clone().or(env_endpoint);
        if let (Some(spec), Some(endpoint)) = (&mut self.judge, endpoint) {
            if spec.kind == JudgeKind::Remote {
                match &mut spec.remote {
                    Some(remote) if overrides.endpoint.is_some() || remote.endpoint.is_empty() => {
                        remote.endpoint = endpoint
                    }
                    Some(_) => {}
                    None => {
                        spec.remote = Some(RemoteJudgeConfig {
                            endpoint,
                            timeout_ms: 30_000,
                            retries: 2,
                        })
                    }
                }
            }
        }
        Ok(())
    }

    /// Checks every section; the first invalid field is reported by name.
    pub fn validate(&self) -> Result<(), CliError> {
        self.rating
            .validate()
            .map_err(|e| CliError::config("rating", e.to_string()))?;
        self.tournament.validate()?;
        if self.tournament.seed != 0 {
            return Err(CliError::config("tournament.seed", "set the root `seed` instead"));
        }
        self.monitor.validate()?;
        if self.monitor.seed != 0 {
            return Err(CliError::config("monitor.seed", "set the root `seed` instead"));
        }
        self.weak_supervision.validate()?;
        if self.pairs.human_min_gap < 1 {
            return Err(CliError::config("pairs.human_min_gap", "must be at least 1"));
        }
        if self.pairs.max_words == Some(0) {
            return Err(CliError::config("pairs.max_words", "must be positive"));
        }
        if self.pairs.max_strong_per_context == Some(0) {
            return Err(CliError::config("pairs.max_strong_per_context", "must be positive"));
        }
        if self.score.references == 0 {
            return Err(CliError::config("score.references", "must be positive"));
        }
        if self.score.sample_budget == 0 {
            return Err(CliError::config("score.sample_budget", "must be positive"));
        }
        self.validate_simulate()?;
        if let Some(spec) = &self.judge {
            self.validate_judge(spec)?;
        }
        Ok(())
    }

    fn validate_simulate(&self) -> Result<(), CliError> {
        let s = &self.simulate;
        let q = s.latent_qualities();
        if q.len() < 2 {
            return Err(CliError::config("simulate.players", "need at least two players"));
        }
        if q.iter().any(|v| !v.is_finite()) || !s.spacing.is_finite() {
            return Err(CliError::config("simulate.qualities", "values must be finite"));
        }
        if s.runs == 0 {
            return Err(CliError::config("simulate.runs", "must be positive"));
        }
        if s.contexts == 0 {
            return Err(CliError::config("simulate.contexts", "must be positive"));
        }
        let mut probe = OracleJudgeConfig::new(Default::default());
        probe.flip_prob = s.flip_prob;
        probe.sample_noise = s.sample_noise;
        probe.tie_band = s.tie_band;
        probe
            .validate()
            .map_err(|e| CliError::config("simulate", e.to_string()))
    }

    fn validate_judge(&self, spec: &JudgeSpec) -> Result<(), CliError> {
        if spec.allow_tie && !self.tournament.allow_tie {
            return Err(CliError::config(
                "tournament.allow_tie",
                "set `judge.allow_tie` instead",
            ));
        }
        if spec.allow_tie && !self.monitor.allow_tie {
            return Err(CliError::config("monitor.allow_tie", "set `judge.allow_tie` instead"));
        }
        if let DecisionRule::Confidence { threshold } = spec.decision_rule {
            if !(threshold.is_finite() && (0.0..=1.0).contains(&threshold)) {
                return Err(CliError::config("judge.decision_rule.threshold", "must lie in [0, 1]"));
            }
        }
        match spec.kind {
            JudgeKind::Oracle => {
                let oracle = spec
                    .oracle
                    .as_ref()
                    .ok_or_else(|| CliError::config("judge.oracle", "missing section for the selected judge"))?;
                if oracle.seed != 0 {
                    return Err(CliError::config("judge.oracle.seed", "set the root `seed` instead"));
                }
                oracle.validate()?;
            }
            JudgeKind::Remote => {
                let remote = spec.remote.as_ref().ok_or_else(|| {
                    CliError::config(
                        "judge.remote",
                        format!("missing section; pass --endpoint or set {ENDPOINT_ENV}"),
                    )
                })?;
                if remote.endpoint.is_empty() {
                    return Err(CliError::config("judge.remote.endpoint", "must not be empty"));
                }
                if !remote.endpoint.starts_with("http://") && !remote.endpoint.starts_with("https://") {
                    return Err(CliError::config("judge.remote.endpoint", "must be an http(s) URL"));
                }
                if remote.timeout_ms == 0 {
                    return Err(CliError::config("judge.remote.timeout_ms", "must be positive"));
                }
            }
            JudgeKind::Scripted => {
                let scripted = spec
                    .scripted
                    .as_ref()
                    .ok_or_else(|| CliError::config("judge.scripted", "missing section for the selected judge"))?;
                if scripted.labels.is_empty() {
                    return Err(CliError::config("judge.scripted.labels", "must not be empty"));
                }
                if self.tournament.concurrency > 1 {
                    return Err(CliError::config(
                        "tournament.concurrency",
                        "a scripted judge replays in call order and needs concurrency 1",
                    ));
                }
                if !spec.allow_tie && scripted.labels.contains(&Label::Tie) {
                    return Err(CliError::config(
                        "judge.scripted.labels",
                        "contains `tie` but ties are disabled",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn judge_spec(&self) -> Result<&JudgeSpec, CliError> {
        self.judge.as_ref().ok_or_else(|| {
            CliError::config(
                "judge",
                "this command needs a judge; add a [judge] section or pass --judge",
            )
        })
    }

    /// Builds the selected judge; the no-tie ablation wraps it in a binary adapter.
    pub fn build_judge(&self) -> Result<Box<dyn Judge>, CliError> {
        let spec = self.judge_spec()?;
        let inner: Box<dyn Judge> = match spec.kind {
            JudgeKind::Oracle => {
                let mut cfg = spec.oracle.clone().expect("validated");
                cfg.seed = seed::derive_seed(self.seed, "oracle", 0);
                Box::new(OracleJudge::new(cfg)?)
            }
            JudgeKind::Remote => Box::new(RemoteJudge::new(spec.remote.as_ref().expect("validated"))?),
            JudgeKind::Scripted => Box::new(ScriptedJudge::new(
                spec.scripted.as_ref().expect("validated").labels.clone(),
            )?),
        };
        Ok(if spec.allow_tie {
            inner
        } else {
            Box::new(BinaryAdapter::new(inner))
        })
    }

    pub fn allow_tie(&self) -> bool {
        self.judge.as_ref().is_none_or(|j| j.allow_tie)
    }

    /// Tournament settings for one labeled use of the root seed.
    pub fn tournament_for(&self, label: &str) -> TournamentConfig {
        let mut t = self.tournament.clone();
        t.seed = seed::derive_seed(self.seed, label, 0);
        t.allow_tie = self.allow_tie();
        if let Some(spec) = &self.judge {
            t.decision_rule = spec.decision_rule;
        }
        t
    }

    pub fn monitor_config(&self) -> MonitorConfig {
        let mut m = self.monitor.clone();
        m.seed = seed::derive_seed(self.seed, "monitor", 0);
        m.allow_tie = self.allow_tie();
        m
    }

    pub fn out_dir(&self) -> PathBuf {
        self.paths.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    /// SHA-256 over the canonical JSON form of the effective config. The
    /// output directory is left out so relocated reruns hash the same.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.paths.out = None;
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.samples,
            &mut self.human_scores,
            &mut self.metrics,
            &mut self.checkpoints,
            &mut self.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}
