//! Comparison-driven training supervision.
//!
//! After each new checkpoint, `n` of its samples are compared with samples of
//! the previous `k` checkpoints on shared contexts. Training should stop once
//! the latest checkpoint loses more than it wins for `patience` consecutive
//! rounds. Hyperparameter choices are ranked with a model tournament.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::judge::{ComparisonRequest, Judge, JudgeError, Label, RequestMeta, Source};
use crate::rating::RatingConfig;
use crate::seed;
use crate::supervision::Sample;
use crate::tournament::{self, ContextPool, Player, TournamentConfig, TournamentError};

#[derive(Debug, Error)]
pub enum MonitorError {
    #[error("invalid monitor config: {field} ({reason})")]
    InvalidConfig { field: &'static str, reason: &'static str },
    #[error("no baseline checkpoints to compare against")]
    NoBaselines,
    #[error("baseline step {step} offers {available} comparisons on shared contexts, {needed} needed")]
    InsufficientContexts { step: u64, available: usize, needed: usize },
    #[error("judge failed: {0}")]
    Judge(#[from] JudgeError),
    #[error("no hyperparameter candidates")]
    NoCandidates,
    #[error(transparent)]
    Tournament(#[from] TournamentError),
}

/// What to do when shared contexts cannot supply `n` distinct comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextReuse {
    /// Draw sample pairs with replacement.
    #[default]
    WithReplacement,
    /// Require enough distinct sample pairs, otherwise fail.
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorConfig {
    pub n_comparisons: usize,
    pub k_baselines: usize,
    pub patience: usize,
    pub seed: u64,
    pub reuse: ContextReuse,
    pub allow_tie: bool,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            n_comparisons: 1000,
            k_baselines: 2,
            patience: 5,
            seed: 0,
            reuse: ContextReuse::WithReplacement,
            allow_tie: true,
        }
    }
}

impl MonitorConfig {
    pub fn validate(&self) -> Result<(), MonitorError> {
        let bad = |field, reason| Err(MonitorError::InvalidConfig { field, reason });
        if self.n_comparisons == 0 {
            return bad("n_comparisons", "must be at least 1");
        }
        if self.k_baselines == 0 {
            return bad("k_baselines", "must be at least 1");
        }
        if self.patience == 0 {
            return bad("patience", "must be at least 1");
        }
        Ok(())
    }
}

/// Samples produced by one checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointSamples {
    pub step: u64,
    pub samples: Vec<Sample>,
}

/// Oracle lookup key of a checkpoint.
pub fn checkpoint_key(step: u64) -> String {
    format!("step-{step}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointComparison {
    pub round: usize,
    pub latest_step: u64,
    pub baseline_steps: Vec<u64>,
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
}

impl CheckpointComparison {
    pub fn failing(&self) -> bool {
        self.wins < self.losses
    }
}

fn by_context(samples: &[Sample]) -> BTreeMap<&str, Vec<&Sample>> {
    let mut map: BTreeMap<&str, Vec<&Sample>> = BTreeMap::new();
    for s in samples {
        map.entry(s.context.as_str()).or_default().push(s);
    }
    map
}

/// Splits `n` evenly over `k` baselines, the remainder going to the first ones.
pub fn allocate(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|i| n / k + usize::from(i < n % k)).collect()
}

/// `n` comparisons of the latest checkpoint against its baselines, counted
/// from the latest checkpoint's side. The latest sample is always shown first.
pub fn compare_checkpoints(
    latest: &CheckpointSamples,
    baselines: &[CheckpointSamples],
    judge: &dyn Judge,
    config: &MonitorConfig,
    round: usize,
) -> Result<CheckpointComparison, MonitorError> {
    config.validate()?;
    if baselines.is_empty() {
        return Err(MonitorError::NoBaselines);
    }
    let latest_by = by_context(&latest.samples);
    let mut requests = Vec::with_capacity(config.n_comparisons);

    for (b, (baseline, quota)) in baselines
        .iter()
        .zip(allocate(config.n_comparisons, baselines.len()))
        .enumerate()
    {
        if quota == 0 {
            continue;
        }
        let base_by = by_context(&baseline.samples);
        let shared: Vec<(&str, &Vec<&Sample>, &Vec<&Sample>)> = latest_by
            .iter()
            .filter_map(|(ctx, l)| base_by.get(ctx).map(|o| (*ctx, l, o)))
            .collect();
        let available: usize = shared.iter().map(|(_, l, o)| l.len() * o.len()).sum();
        if available == 0 || (config.reuse == ContextReuse::Error && available < quota) {
            return Err(MonitorError::InsufficientContexts {
                step: baseline.step,
                available,
                needed: quota,
            });
        }

        let label = format!("monitor/{round}/{b}");
        let chosen: Vec<(&Sample, &Sample)> = match config.reuse {
            ContextReuse::WithReplacement => (0..quota)
                .map(|j| {
                    let mut rng = seed::stream(config.seed, &label, j as u64);
                    let (_, l, o) = shared[rng.random_range(0..shared.len())];
                    (l[rng.random_range(0..l.len())], o[rng.random_range(0..o.len())])
                })
                .collect(),
            ContextReuse::Error => {
                let mut all: Vec<(&Sample, &Sample)> = shared
                    .iter()
                    .flat_map(|(_, l, o)| l.iter().flat_map(move |a| o.iter().map(move |b| (*a, *b))))
                    .collect();
                let mut rng = seed::stream(config.seed, &label, u64::MAX);
                rand::seq::SliceRandom::shuffle(all.as_mut_slice(), &mut rng);
                all.truncate(quota);
                all
            }
        };

        for (a, o) in chosen {
            let index = requests.len() as u64;
            requests.push(
                ComparisonRequest::new(a.context.clone(), a.text.clone(), o.text.clone())
                    .allow_tie(config.allow_tie)
                    .with_meta(RequestMeta {
                        first_source: Source::with_group(a.id.clone(), Some(checkpoint_key(latest.step))),
                        second_source: Source::with_group(o.id.clone(), Some(checkpoint_key(baseline.step))),
                        match_seed: seed::derive_seed(config.seed, &format!("monitor-judge/{round}"), index),
                    }),
            );
        }
    }

    let labels: Vec<Label> = requests
        .par_iter()
        .map(|r| judge.compare(r).map(|v| v.label))
        .collect::<Result<_, _>>()?;
    let count = |l: Label| labels.iter().filter(|x| **x == l).count();
    Ok(CheckpointComparison {
        round,
        latest_step: latest.step,
        baseline_steps: baselines.iter().map(|b| b.step).collect(),
        wins: count(Label::Better),
        losses: count(Label::Worse),
        ties: count(Label::Tie),
    })
}

/// Length of the trailing run of rounds with `wins < losses`.
pub fn failing_streak(history: &[CheckpointComparison]) -> usize {
    history.iter().rev().take_while(|c| c.failing()).count()
}

/// True iff each of the last `patience` rounds has strictly fewer wins than losses.
pub fn should_stop(history: &[CheckpointComparison], patience: usize) -> bool {
    patience > 0 && failing_streak(history) >= patience
}

/// One line of the monitor audit log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitorDecision {
    pub round: usize,
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    pub stop: bool,
}

/// Feeds checkpoints in training order and decides when to stop.
#[derive(Debug)]
pub struct Monitor {
    config: MonitorConfig,
    recent: VecDeque<CheckpointSamples>,
    history: Vec<CheckpointComparison>,
}

impl Monitor {
    pub fn new(config: MonitorConfig) -> Result<Self, MonitorError> {
        config.validate()?;
        Ok(Self {
            config,
            recent: VecDeque::new(),
            history: Vec::new(),
        })
    }

    pub fn history(&self) -> &[CheckpointComparison] {
        &self.history
    }

    /// Evaluates a new checkpoint. Returns `None` until `k` baselines exist.
    pub fn observe(
        &mut self,
        checkpoint: CheckpointSamples,
        judge: &dyn Judge,
    ) -> Result<Option<MonitorDecision>, MonitorError> {
        let decision = if self.recent.len() >= self.config.k_baselines {
            let baselines: Vec<CheckpointSamples> = self.recent.iter().rev().cloned().collect();
            let round = self.history.len();
            let cmp = compare_checkpoints(&checkpoint, &baselines, judge, &self.config, round)?;
            self.history.push(cmp.clone());
            Some(MonitorDecision {
                round,
                wins: cmp.wins,
                losses: cmp.losses,
                ties: cmp.ties,
                stop: should_stop(&self.history, self.config.patience),
            })
        } else {
            None
        };
        self.recent.push_back(checkpoint);
        while self.recent.len() > self.config.k_baselines {
            self.recent.pop_front();
        }
        Ok(decision)
    }

    /// First round of the failing streak that triggered a stop.
    pub fn streak_start(&self) -> Option<usize> {
        should_stop(&self.history, self.config.patience).then(|| self.history.len() - failing_streak(&self.history))
    }
}

/// Picks the candidate with the highest model-level rating (ties by id).
///
/// Candidates are sorted by id first, so the input order does not matter.
pub fn select_hyperparameters(
    candidates: Vec<(String, Player)>,
    judge: &dyn Judge,
    contexts: &ContextPool,
    config: &TournamentConfig,
    rating_config: &RatingConfig,
) -> Result<String, MonitorError> {
    match candidates.len() {
        0 => return Err(MonitorError::NoCandidates),
        1 => return Ok(candidates.into_iter().next().expect("one candidate").0),
        _ => {}
    }
    let mut players: Vec<Player> = candidates
        .into_iter()
        .map(|(id, mut p)| {
            p.id = id;
            p
        })
        .collect();
    players.sort_by(|a, b| a.id.cmp(&b.id));
    let result = tournament::run(players, judge, contexts, config, rating_config)?;
    Ok(result.leaderboard[0].id.clone())
}
