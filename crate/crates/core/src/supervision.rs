//! Training pairs for a comparative evaluator.
//!
//! Three sources of labels:
//! - strong: human references beat model outputs on the same context, and
//!   two texts from the same source tie;
//! - weak: for one model, a sample from a much later checkpoint beats one
//!   from an earlier checkpoint;
//! - human: annotator scores on a 1..=5 scale turned into pairwise labels.
//!
//! Every pair is emitted in both orientations. Pairs never cross contexts.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SupervisionError {
    #[error("invalid sample `{id}`: {reason}")]
    InvalidSample { id: String, reason: String },
    #[error("model `{0}` has samples without total_steps")]
    MissingTotalSteps(String),
    #[error("model `{0}` reports inconsistent total_steps")]
    InconsistentTotalSteps(String),
    #[error("invalid supervision config: {field} ({reason})")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("score {score} for sample `{id}` is outside 1..=5")]
    ScoreOutOfRange { id: String, score: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Human,
    Model,
}

/// One text, human-written or generated, with its conditioning context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sample {
    pub id: String,
    pub context: String,
    pub text: String,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_step: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_steps: Option<u64>,
}

impl Sample {
    pub fn human(id: impl Into<String>, context: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            context: context.into(),
            text: text.into(),
            origin: Origin::Human,
            model_id: None,
            checkpoint_step: None,
            total_steps: None,
        }
    }

    pub fn generated(
        id: impl Into<String>,
        context: impl Into<String>,
        text: impl Into<String>,
        model_id: impl Into<String>,
        step: u64,
        total_steps: Option<u64>,
    ) -> Self {
        Self {
            id: id.into(),
            context: context.into(),
            text: text.into(),
            origin: Origin::Model,
            model_id: Some(model_id.into()),
            checkpoint_step: Some(step),
            total_steps,
        }
    }

    pub fn validate(&self) -> Result<(), SupervisionError> {
        let bad = |reason: &str| {
            Err(SupervisionError::InvalidSample {
                id: self.id.clone(),
                reason: reason.to_string(),
            })
        };
        if self.id.is_empty() {
            return bad("empty id");
        }
        if self.origin == Origin::Model && (self.model_id.is_none() || self.checkpoint_step.is_none()) {
            return bad("model samples need model_id and checkpoint_step");
        }
        if self.total_steps == Some(0) {
            return bad("total_steps must be positive");
        }
        if let (Some(step), Some(total)) = (self.checkpoint_step, self.total_steps) {
            if step > total {
                return bad("checkpoint_step exceeds total_steps");
            }
        }
        Ok(())
    }

    fn checkpoint(&self) -> Option<(&str, u64)> {
        Some((self.model_id.as_deref()?, self.checkpoint_step?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairLabel {
    Better,
    Worse,
    Tie,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Strong,
    Weak,
    Human,
}

/// An ordered, labeled pair of samples that share a context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairExample {
    pub context: String,
    pub first_id: String,
    pub first: String,
    pub second_id: String,
    pub second: String,
    pub label: PairLabel,
    pub provenance: Provenance,
    /// Checkpoint step gap, weak pairs only.
    pub margin: Option<u64>,
}

/// The JSONL row consumed by comparator training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairRecord {
    pub context: String,
    pub first: String,
    pub second: String,
    pub label: PairLabel,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<u64>,
}

impl PairExample {
    pub fn record(&self) -> PairRecord {
        PairRecord {
            context: self.context.clone(),
            first: self.first.clone(),
            second: self.second.clone(),
            label: self.label,
            provenance: self.provenance,
            margin: self.margin,
        }
    }

    fn unordered_key(&self) -> (String, String, String) {
        let (lo, hi) = if self.first_id <= self.second_id {
            (&self.first_id, &self.second_id)
        } else {
            (&self.second_id, &self.first_id)
        };
        (self.context.clone(), lo.clone(), hi.clone())
    }
}

fn both_ways(
    a: &Sample,
    b: &Sample,
    label: PairLabel,
    provenance: Provenance,
    margin: Option<u64>,
) -> [PairExample; 2] {
    let reverse = match label {
        PairLabel::Better => PairLabel::Worse,
        PairLabel::Worse => PairLabel::Better,
        PairLabel::Tie => PairLabel::Tie,
    };
    let make = |x: &Sample, y: &Sample, label| PairExample {
        context: x.context.clone(),
        first_id: x.id.clone(),
        first: x.text.clone(),
        second_id: y.id.clone(),
        second: y.text.clone(),
        label,
        provenance,
        margin,
    };
    [make(a, b, label), make(b, a, reverse)]
}

fn by_context<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> BTreeMap<&'a str, Vec<&'a Sample>> {
    let mut map: BTreeMap<&str, Vec<&Sample>> = BTreeMap::new();
    for s in samples {
        map.entry(s.context.as_str()).or_default().push(s);
    }
    map
}

/// Human references beat generated samples; same-source pairs tie.
///
/// Generated-generated pairs are only formed within one model checkpoint;
/// pairs across checkpoints are left out.
pub fn build_strong_pairs(real: &[Sample], generated: &[Sample]) -> Result<Vec<PairExample>, SupervisionError> {
    for s in real {
        s.validate()?;
        if s.origin != Origin::Human {
            return Err(SupervisionError::InvalidSample {
                id: s.id.clone(),
                reason: "real samples must have origin human".into(),
            });
        }
    }
    for s in generated {
        s.validate()?;
        if s.origin != Origin::Model {
            return Err(SupervisionError::InvalidSample {
                id: s.id.clone(),
                reason: "generated samples must have origin model".into(),
            });
        }
    }
    let real_by = by_context(real);
    let gen_by = by_context(generated);
    let contexts: BTreeSet<&str> = real_by.keys().chain(gen_by.keys()).copied().collect();

    let mut out = Vec::new();
    for ctx in contexts {
        let rs = real_by.get(ctx).map(Vec::as_slice).unwrap_or(&[]);
        let gs = gen_by.get(ctx).map(Vec::as_slice).unwrap_or(&[]);
        for (i, a) in rs.iter().enumerate() {
            for b in &rs[i + 1..] {
                out.extend(both_ways(a, b, PairLabel::Tie, Provenance::Strong, None));
            }
        }
        for r in rs {
            for g in gs {
                out.extend(both_ways(r, g, PairLabel::Better, Provenance::Strong, None));
            }
        }
        for (i, a) in gs.iter().enumerate() {
            for b in &gs[i + 1..] {
                if a.checkpoint() == b.checkpoint() {
                    out.extend(both_ways(a, b, PairLabel::Tie, Provenance::Strong, None));
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeakSupervisionConfig {
    /// Smallest admissible step gap, as a fraction of total training steps.
    pub min_margin_fraction: f64,
    /// Pairs with both checkpoints in this final fraction of training are dropped.
    pub converged_exclusion_fraction: f64,
    pub curriculum_stages: usize,
}

impl Default for WeakSupervisionConfig {
    fn default() -> Self {
        Self {
            min_margin_fraction: 0.10,
            converged_exclusion_fraction: 0.20,
            curriculum_stages: 3,
        }
    }
}

impl WeakSupervisionConfig {
    pub fn validate(&self) -> Result<(), SupervisionError> {
        if !(self.min_margin_fraction > 0.0 && self.min_margin_fraction < 1.0) {
            return Err(SupervisionError::InvalidConfig {
                field: "min_margin_fraction",
                reason: "must lie in (0, 1)".into(),
            });
        }
        if !(0.0..1.0).contains(&self.converged_exclusion_fraction) {
            return Err(SupervisionError::InvalidConfig {
                field: "converged_exclusion_fraction",
                reason: "must lie in [0, 1)".into(),
            });
        }
        if self.curriculum_stages == 0 {
            return Err(SupervisionError::InvalidConfig {
                field: "curriculum_stages",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }

    /// Whether checkpoints `early < late` may form a weak pair.
    pub fn admits(&self, early: u64, late: u64, total_steps: u64) -> bool {
        let total = total_steps as f64;
        let margin_ok = (late - early) as f64 >= self.min_margin_fraction * total;
        let zone = (1.0 - self.converged_exclusion_fraction) * total;
        let both_converged = early as f64 > zone && late as f64 > zone;
        margin_ok && !both_converged
    }
}

pub type CheckpointKey = (String, u64);

/// Groups model samples by `(model_id, checkpoint_step)`; human samples are ignored.
pub fn group_checkpoints(samples: &[Sample]) -> BTreeMap<CheckpointKey, Vec<Sample>> {
    let mut map: BTreeMap<CheckpointKey, Vec<Sample>> = BTreeMap::new();
    for s in samples {
        if let Some((model, step)) = s.checkpoint() {
            map.entry((model.to_string(), step)).or_default().push(s.clone());
        }
    }
    map
}

/// Later checkpoints beat earlier ones of the same model, subject to the
/// margin and near-convergence rules.
pub fn build_weak_pairs(
    checkpoints: &BTreeMap<CheckpointKey, Vec<Sample>>,
    config: &WeakSupervisionConfig,
) -> Result<Vec<PairExample>, SupervisionError> {
    config.validate()?;
    let mut models: BTreeMap<&str, Vec<(u64, &[Sample])>> = BTreeMap::new();
    for ((model, step), samples) in checkpoints {
        models
            .entry(model.as_str())
            .or_default()
            .push((*step, samples.as_slice()));
    }

    let mut out = Vec::new();
    for (model, mut steps) in models {
        if steps.len() < 2 {
            continue;
        }
        steps.sort_by_key(|(s, _)| *s);
        let mut total = None;
        for (_, samples) in &steps {
            for s in *samples {
                s.validate()?;
                let t = s
                    .total_steps
                    .ok_or_else(|| SupervisionError::MissingTotalSteps(model.to_string()))?;
                if *total.get_or_insert(t) != t {
                    return Err(SupervisionError::InconsistentTotalSteps(model.to_string()));
                }
            }
        }
        let Some(total) = total else { continue };

        for (i, (early, early_samples)) in steps.iter().enumerate() {
            for (late, late_samples) in &steps[i + 1..] {
                if !config.admits(*early, *late, total) {
                    continue;
                }
                let margin = late - early;
                let early_by = by_context(early_samples.iter());
                let late_by = by_context(late_samples.iter());
                for (ctx, lates) in &late_by {
                    let Some(earlies) = early_by.get(ctx) else { continue };
                    for l in lates {
                        for e in earlies {
                            out.extend(both_ways(l, e, PairLabel::Better, Provenance::Weak, Some(margin)));
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

fn unordered_units(pairs: &[PairExample]) -> Vec<Vec<PairExample>> {
    let mut index: BTreeMap<(String, String, String), usize> = BTreeMap::new();
    let mut units: Vec<Vec<PairExample>> = Vec::new();
    for p in pairs {
        let slot = *index.entry(p.unordered_key()).or_insert_with(|| {
            units.push(Vec::new());
            units.len() - 1
        });
        units[slot].push(p.clone());
    }
    units
}

/// Splits pairs into cumulative curriculum stages, largest weak margins first.
///
/// Weak pairs are sorted by margin and cut into `stages` equal-frequency
/// buckets; stage `k` holds buckets `1..=k`. Strong and human pairs appear in
/// every stage. Each stage is shuffled with its own seeded stream.
pub fn curriculum_order(
    pairs: &[PairExample],
    stages: usize,
    seed: u64,
) -> Result<Vec<Vec<PairExample>>, SupervisionError> {
    if stages == 0 {
        return Err(SupervisionError::InvalidConfig {
            field: "curriculum_stages",
            reason: "must be at least 1".into(),
        });
    }
    let (weak, rest): (Vec<PairExample>, Vec<PairExample>) =
        pairs.iter().cloned().partition(|p| p.provenance == Provenance::Weak);
    let mut units = unordered_units(&weak);
    units.sort_by(|a, b| b[0].margin.cmp(&a[0].margin));

    let n = units.len();
    let mut out = Vec::with_capacity(stages);
    let mut acc: Vec<PairExample> = rest;
    for k in 0..stages {
        let (lo, hi) = (k * n / stages, (k + 1) * n / stages);
        acc.extend(units[lo..hi].iter().flatten().cloned());
        let mut stage = acc.clone();
        stage.shuffle(&mut seed::stream(seed, "curriculum", k as u64));
        out.push(stage);
    }
    Ok(out)
}

/// Smallest weak margin present in a stage, if it has weak pairs.
pub fn min_weak_margin(stage: &[PairExample]) -> Option<u64> {
    stage.iter().filter_map(|p| p.margin).min()
}

/// Keeps at most `cap` unordered pairs per context, chosen uniformly with `seed`.
pub fn cap_per_context(pairs: &[PairExample], cap: usize, seed: u64) -> Vec<PairExample> {
    let mut groups: BTreeMap<String, Vec<Vec<PairExample>>> = BTreeMap::new();
    for unit in unordered_units(pairs) {
        groups.entry(unit[0].context.clone()).or_default().push(unit);
    }
    let mut out = Vec::new();
    for (i, (_, mut units)) in groups.into_iter().enumerate() {
        if units.len() > cap {
            units.shuffle(&mut seed::stream(seed, "pair-cap", i as u64));
            units.truncate(cap);
        }
        out.extend(units.into_iter().flatten());
    }
    out
}

/// One annotator's 1..=5 judgement of a sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanScore {
    pub sample_id: String,
    pub score: i64,
    pub annotator: String,
}

impl HumanScore {
    pub fn validate(&self) -> Result<(), SupervisionError> {
        if !(1..=5).contains(&self.score) {
            return Err(SupervisionError::ScoreOutOfRange {
                id: self.sample_id.clone(),
                score: self.score,
            });
        }
        Ok(())
    }
}

/// Mean score per sample over annotators.
pub fn mean_human_scores(scores: &[HumanScore]) -> Result<BTreeMap<String, f64>, SupervisionError> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for s in scores {
        s.validate()?;
        let e = acc.entry(s.sample_id.clone()).or_insert((0.0, 0));
        e.0 += s.score as f64;
        e.1 += 1;
    }
    Ok(acc.into_iter().map(|(k, (sum, n))| (k, sum / n as f64)).collect())
}

/// Pairs from scored samples: a gap of at least `min_gap` is decisive, equal
/// scores tie, anything in between is dropped.
pub fn pairs_from_scores(scored: &[(Sample, i64)], min_gap: i64) -> Result<Vec<PairExample>, SupervisionError> {
    if min_gap < 1 {
        return Err(SupervisionError::InvalidConfig {
            field: "min_gap",
            reason: "must be at least 1".into(),
        });
    }
    for (s, score) in scored {
        if !(1..=5).contains(score) {
            return Err(SupervisionError::ScoreOutOfRange {
                id: s.id.clone(),
                score: *score,
            });
        }
    }
    let mut groups: BTreeMap<&str, Vec<&(Sample, i64)>> = BTreeMap::new();
    for item in scored {
        groups.entry(item.0.context.as_str()).or_default().push(item);
    }
    let mut out = Vec::new();
    for items in groups.values() {
        for (i, (a, sa)) in items.iter().map(|x| (&x.0, x.1)).enumerate() {
            for (b, sb) in items[i + 1..].iter().map(|x| (&x.0, x.1)) {
                let gap = sa - sb;
                if gap == 0 {
                    out.extend(both_ways(a, b, PairLabel::Tie, Provenance::Human, None));
                } else if gap.abs() >= min_gap {
                    let label = if gap > 0 { PairLabel::Better } else { PairLabel::Worse };
                    out.extend(both_ways(a, b, label, Provenance::Human, None));
                }
            }
        }
    }
    Ok(out)
}

fn ends_sentence(word: &str) -> bool {
    word.ends_with(['.', '!', '?'])
}

/// Cuts texts longer than `max_words` at the sentence boundary nearest to
/// `max_words` words (ties go to the shorter cut). The end of the text
/// always counts as a boundary.
pub fn truncate_sample(text: &str, max_words: usize) -> &str {
    let mut words = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                words.push((s, i));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        words.push((s, text.len()));
    }
    if words.len() <= max_words {
        return text;
    }
    let last = words.len() - 1;
    let best = words
        .iter()
        .enumerate()
        .filter(|(i, (s, e))| *i == last || ends_sentence(&text[*s..*e]))
        .min_by_key(|(i, _)| ((i + 1).abs_diff(max_words), *i))
        .map(|(_, (_, e))| *e)
        .unwrap_or(text.len());
    &text[..best]
}
