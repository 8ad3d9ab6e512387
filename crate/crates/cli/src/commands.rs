//! Subcommand implementations. Each writes its outputs under the configured
//! out directory and returns a small summary.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use skillrank_core::judge::Judge;
use skillrank_core::monitor::{CheckpointSamples, Monitor, MonitorDecision};
use skillrank_core::rating::RatingConfig;
use skillrank_core::scoring::{
    self, model_score_avg_sample_rating, model_skill_rating, pearson, reference_score, reference_scores,
    sample_skill_rating, select_references, spearman, CorrelationResult, ModelMethod, ModelScore, ReferenceOptions,
    SampleScore,
};
use skillrank_core::seed;
use skillrank_core::supervision::{
    build_strong_pairs, build_weak_pairs, cap_per_context, curriculum_order, group_checkpoints, mean_human_scores,
    min_weak_margin, pairs_from_scores, truncate_sample, HumanScore, Origin, PairExample, PairRecord, Sample,
};
use skillrank_core::tournament::{self, Context, ContextPool, Player, PoolSampler, TournamentResult};
use tracing::{info, warn};

use crate::config::{JudgeKind, RateMode, RunConfig, FORMAT_VERSION};
use crate::error::CliError;
use crate::io::{read_jsonl, OutputSet};

/// What a command reports back to `main`.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub out_dir: PathBuf,
    /// False when a rating tournament hit its budget first (exit code 5).
    pub converged: bool,
}

fn require<'a>(path: &'a Option<PathBuf>, field: &str) -> Result<&'a Path, CliError> {
    path.as_deref()
        .ok_or_else(|| CliError::config(field, "required by this command"))
}

fn load_samples(config: &RunConfig) -> Result<Vec<Sample>, CliError> {
    let path = require(&config.paths.samples, "paths.samples")?;
    let samples: Vec<Sample> = read_jsonl(path)?;
    let mut ids = BTreeSet::new();
    for s in &samples {
        s.validate()?;
        if !ids.insert(s.id.as_str()) {
            return Err(CliError::Input(format!(
                "{}: duplicate sample id `{}`",
                path.display(),
                s.id
            )));
        }
    }
    Ok(samples)
}

// ---------------------------------------------------------------------------
// build-pairs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceCount {
    /// Ordered rows written (both orientations).
    pub rows: usize,
    /// Unordered sample pairs.
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageBoundary {
    pub stage: usize,
    /// Rows `0..weak_rows_end` of `weak.jsonl` make up this stage's weak data.
    pub weak_rows_end: usize,
    pub min_margin: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairsManifest {
    pub format_version: u32,
    pub config_hash: String,
    pub strong: ProvenanceCount,
    pub weak: ProvenanceCount,
    pub human: ProvenanceCount,
    pub curriculum: Vec<StageBoundary>,
    pub warnings: Vec<String>,
}

fn count(pairs: &[PairExample]) -> ProvenanceCount {
    ProvenanceCount {
        rows: pairs.len(),
        pairs: pairs.len() / 2,
    }
}

/// Lays weak pairs out stage by stage, so each cumulative stage is a prefix.
fn weak_in_stage_order(stages: &[Vec<PairExample>]) -> (Vec<PairExample>, Vec<StageBoundary>) {
    let mut seen = BTreeSet::new();
    let mut rows = Vec::new();
    let mut bounds = Vec::new();
    for (k, stage) in stages.iter().enumerate() {
        let mut fresh: Vec<&PairExample> = stage
            .iter()
            .filter(|p| p.margin.is_some() && !seen.contains(&(p.first_id.clone(), p.second_id.clone())))
            .collect();
        // Keep both orientations of a pair adjacent.
        fresh.sort_by_key(|p| {
            let (lo, hi) = if p.first_id <= p.second_id {
                (&p.first_id, &p.second_id)
            } else {
                (&p.second_id, &p.first_id)
            };
            (
                std::cmp::Reverse(p.margin),
                p.context.clone(),
                lo.clone(),
                hi.clone(),
                p.first_id != *lo,
            )
        });
        for p in fresh {
            seen.insert((p.first_id.clone(), p.second_id.clone()));
            rows.push(p.clone());
        }
        bounds.push(StageBoundary {
            stage: k + 1,
            weak_rows_end: rows.len(),
            min_margin: min_weak_margin(stage),
        });
    }
    (rows, bounds)
}

fn human_pairs(config: &RunConfig, samples: &[Sample]) -> Result<Vec<PairExample>, CliError> {
    let Some(path) = &config.paths.human_scores else {
        return Ok(Vec::new());
    };
    let scores: Vec<HumanScore> = read_jsonl(path)?;
    let means = mean_human_scores(&scores)?;
    let by_id: BTreeMap<&str, &Sample> = samples.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut scored = Vec::with_capacity(means.len());
    for (id, mean) in &means {
        let sample = by_id
            .get(id.as_str())
            .ok_or_else(|| CliError::Input(format!("{}: score for unknown sample `{id}`", path.display())))?;
        scored.push(((*sample).clone(), mean.round() as i64));
    }
    Ok(pairs_from_scores(&scored, config.pairs.human_min_gap)?)
}

pub fn cmd_build_pairs(config: &RunConfig) -> Result<(Outcome, PairsManifest), CliError> {
    config.validate()?;
    let mut samples = load_samples(config)?;
    if let Some(max_words) = config.pairs.max_words {
        for s in &mut samples {
            s.text = truncate_sample(&s.text, max_words).to_string();
        }
    }
    let (real, generated): (Vec<Sample>, Vec<Sample>) =
        samples.iter().cloned().partition(|s| s.origin == Origin::Human);

    let mut strong = build_strong_pairs(&real, &generated)?;
    if let Some(cap) = config.pairs.max_strong_per_context {
        strong = cap_per_context(&strong, cap, seed::derive_seed(config.seed, "strong-cap", 0));
    }

    let mut warnings = Vec::new();
    let checkpoints = group_checkpoints(&generated);
    let weak = build_weak_pairs(&checkpoints, &config.weak_supervision)?;
    if weak.is_empty() {
        let msg = if checkpoints.is_empty() {
            "no checkpoint samples provided; weak supervision is empty"
        } else {
            "no model has two checkpoints far enough apart; weak supervision is empty"
        };
        warn!("{msg}");
        warnings.push(msg.to_string());
    }
    let stages = curriculum_order(
        &weak,
        config.weak_supervision.curriculum_stages,
        seed::derive_seed(config.seed, "curriculum", 0),
    )?;
    let (weak_rows, curriculum) = weak_in_stage_order(&stages);
    let human = human_pairs(config, &samples)?;

    let records = |pairs: &[PairExample]| pairs.iter().map(PairExample::record).collect::<Vec<PairRecord>>();
    let mut out = OutputSet::new(config.out_dir(), "build-pairs");
    out.put_jsonl("strong.jsonl", &records(&strong))?;
    out.put_jsonl("weak.jsonl", &records(&weak_rows))?;
    out.put_jsonl("human.jsonl", &records(&human))?;
    let manifest = PairsManifest {
        format_version: FORMAT_VERSION,
        config_hash: config.hash(),
        strong: count(&strong),
        weak: count(&weak_rows),
        human: count(&human),
        curriculum,
        warnings,
    };
    out.put_json("pairs.json", &manifest)?;
    info!(
        strong = manifest.strong.pairs,
        weak = manifest.weak.pairs,
        human = manifest.human.pairs,
        "pairs written"
    );
    let out_dir = out.dir().to_path_buf();
    out.finish(config)?;
    Ok((
        Outcome {
            out_dir,
            converged: true,
        },
        manifest,
    ))
}

// ---------------------------------------------------------------------------
// rate
// ---------------------------------------------------------------------------

/// One player per model id, sampling from that model's outputs per context.
/// The context pool is restricted to contexts every model has answered.
/// Human-written samples form a player named `human` when `include_human` is set.
pub fn model_players(
    samples: &[Sample],
    include_human: bool,
    rating: &RatingConfig,
) -> Result<(Vec<Player>, ContextPool), CliError> {
    let mut by_model: BTreeMap<String, BTreeMap<String, Vec<&Sample>>> = BTreeMap::new();
    for s in samples {
        let model = match (s.origin, &s.model_id) {
            (Origin::Human, _) if include_human => "human".to_string(),
            (Origin::Human, _) => continue,
            (Origin::Model, Some(m)) => m.clone(),
            (Origin::Model, None) => {
                return Err(CliError::Input(format!("generated sample `{}` has no model_id", s.id)));
            }
        };
        by_model
            .entry(model)
            .or_default()
            .entry(s.context.clone())
            .or_default()
            .push(s);
    }
    let mut shared: Option<BTreeSet<String>> = None;
    for contexts in by_model.values() {
        let keys: BTreeSet<String> = contexts.keys().cloned().collect();
        shared = Some(match shared {
            None => keys,
            Some(acc) => acc.intersection(&keys).cloned().collect(),
        });
    }
    let shared = shared.unwrap_or_default();
    if shared.is_empty() {
        return Err(CliError::Input("models share no context".into()));
    }
    let players = by_model
        .into_iter()
        .map(|(model, contexts)| {
            let outputs = contexts
                .into_iter()
                .map(|(ctx, mut group)| {
                    group.sort_by(|a, b| a.id.cmp(&b.id));
                    (ctx, group.into_iter().map(|s| s.text.clone()).collect())
                })
                .collect();
            Player::model(model, Arc::new(PoolSampler { outputs }), rating.initial_state())
        })
        .collect();
    let pool = ContextPool::new(shared.into_iter().map(|c| Context::new(c.clone(), c)).collect());
    Ok((players, pool))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub format_version: u32,
    pub config_hash: String,
    pub converged: bool,
    pub matches_played: u64,
    pub failures: usize,
    pub order: Vec<String>,
}

fn write_tournament(
    out: &mut OutputSet,
    config: &RunConfig,
    result: &TournamentResult,
) -> Result<RateSummary, CliError> {
    out.put_json("leaderboard.json", &result.snapshot())?;
    out.put_jsonl("matches.jsonl", &result.matches)?;
    out.put_jsonl("failures.jsonl", &result.failures)?;
    let summary = RateSummary {
        format_version: FORMAT_VERSION,
        config_hash: config.hash(),
        converged: result.converged,
        matches_played: result.matches_played,
        failures: result.failures.len(),
        order: result.leaderboard.iter().map(|s| s.id.clone()).collect(),
    };
    out.put_json("rate.json", &summary)?;
    Ok(summary)
}

pub fn cmd_rate(config: &RunConfig) -> Result<(Outcome, RateSummary), CliError> {
    config.validate()?;
    let judge = config.build_judge()?;
    let samples = load_samples(config)?;
    let tcfg = config.tournament_for("rate");
    let result = match config.rate.mode {
        RateMode::Models => {
            let (players, pool) = model_players(&samples, config.rate.include_human, &config.rating)?;
            tournament::run(players, judge.as_ref(), &pool, &tcfg, &config.rating)?
        }
        RateMode::Samples => {
            let budget = tcfg.plays_budget.unwrap_or(tcfg.max_matches);
            scoring::sample_tournament(&samples, judge.as_ref(), budget, &tcfg, &config.rating)?
        }
    };
    if !result.converged {
        warn!(matches = result.matches_played, "tournament stopped before convergence");
    }
    let mut out = OutputSet::new(config.out_dir(), "rate");
    let summary = write_tournament(&mut out, config, &result)?;
    let out_dir = out.dir().to_path_buf();
    out.finish(config)?;
    Ok((
        Outcome {
            out_dir,
            converged: result.converged,
        },
        summary,
    ))
}

// ---------------------------------------------------------------------------
// score
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Sample,
    Model,
}

/// One metric value; the row format shared by `score` output and `correlate` input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricRow {
    pub level: Level,
    pub id: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub format_version: u32,
    pub config_hash: String,
    pub references: Vec<String>,
    pub samples: Vec<SampleScore>,
    pub models: Vec<ModelScore>,
    pub model_rating_converged: Option<bool>,
}

fn tag<T: Serialize>(method: &T) -> String {
    serde_json::to_value(method)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .expect("methods serialize as strings")
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn model_of(samples: &[Sample]) -> Result<BTreeMap<String, String>, CliError> {
    samples
        .iter()
        .map(|s| {
            s.model_id
                .clone()
                .map(|m| (s.id.clone(), m))
                .ok_or_else(|| CliError::Input(format!("generated sample `{}` has no model_id", s.id)))
        })
        .collect()
}

fn reference_points(
    config: &RunConfig,
    judge: &dyn Judge,
    generated: &[Sample],
    refs: &[Sample],
) -> Result<Vec<SampleScore>, CliError> {
    let options = ReferenceOptions {
        seed: seed::derive_seed(config.seed, "reference", 0),
        retries: config.score.retries,
        allow_tie: config.allow_tie(),
    };
    // A scripted judge replays in call order, so it is queried sequentially.
    let scripted = config.judge_spec()?.kind == JudgeKind::Scripted;
    Ok(if scripted {
        generated
            .iter()
            .map(|s| reference_score(s, refs, judge, &options))
            .collect::<Result<_, _>>()?
    } else {
        reference_scores(generated, refs, judge, &options)?
    })
}

pub fn cmd_score(config: &RunConfig) -> Result<(Outcome, ScoreReport), CliError> {
    config.validate()?;
    let judge = config.build_judge()?;
    let samples = load_samples(config)?;
    let generated: Vec<Sample> = samples.iter().filter(|s| s.origin == Origin::Model).cloned().collect();
    if generated.is_empty() {
        return Err(CliError::Input("no generated samples to score".into()));
    }
    let owner = model_of(&generated)?;

    let refs = select_references(
        &samples,
        config.score.references,
        seed::derive_seed(config.seed, "references", 0),
    );
    let mut sample_scores = Vec::new();
    let mut model_scores = Vec::new();

    if config.score.reference_points {
        let points = reference_points(config, judge.as_ref(), &generated, &refs)?;
        let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for s in &points {
            groups.entry(owner[&s.sample_id].clone()).or_default().push(s.value);
        }
        model_scores.extend(groups.into_iter().map(|(model_id, values)| ModelScore {
            model_id,
            method: ModelMethod::AvgReference,
            value: mean(&values),
        }));
        sample_scores.extend(points);
    }

    if config.score.sample_rating {
        let tcfg = config.tournament_for("score/sample");
        let ratings = sample_skill_rating(
            &generated,
            judge.as_ref(),
            config.score.sample_budget,
            &tcfg,
            &config.rating,
        )?;
        let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for s in &generated {
            groups.entry(owner[&s.id].clone()).or_default().push(ratings[&s.id]);
            sample_scores.push(SampleScore {
                sample_id: s.id.clone(),
                method: scoring::SampleMethod::SkillRating,
                value: ratings[&s.id],
            });
        }
        model_scores.extend(model_score_avg_sample_rating(&groups)?);
    }

    let mut model_rating_converged = None;
    if config.score.model_rating {
        let (players, pool) = model_players(&generated, false, &config.rating)?;
        let tcfg = config.tournament_for("score/model");
        let (scores, result) = model_skill_rating(players, judge.as_ref(), &pool, &tcfg, &config.rating)?;
        let mut scores = scores;
        scores.sort_by(|a, b| a.model_id.cmp(&b.model_id));
        model_scores.extend(scores);
        model_rating_converged = Some(result.converged);
    }

    let mut rows: Vec<MetricRow> = sample_scores
        .iter()
        .map(|s| MetricRow {
            level: Level::Sample,
            id: s.sample_id.clone(),
            metric: tag(&s.method),
            value: s.value,
        })
        .chain(model_scores.iter().map(|m| MetricRow {
            level: Level::Model,
            id: m.model_id.clone(),
            metric: tag(&m.method),
            value: m.value,
        }))
        .collect();
    rows.sort_by(|a, b| (a.level, &a.metric, &a.id).cmp(&(b.level, &b.metric, &b.id)));

    let report = ScoreReport {
        format_version: FORMAT_VERSION,
        config_hash: config.hash(),
        references: refs.iter().map(|r| r.id.clone()).collect(),
        samples: sample_scores,
        models: model_scores,
        model_rating_converged,
    };
    let mut out = OutputSet::new(config.out_dir(), "score");
    out.put_json("scores.json", &report)?;
    out.put_jsonl("metrics.jsonl", &rows)?;
    let out_dir = out.dir().to_path_buf();
    out.finish(config)?;
    Ok((
        Outcome {
            out_dir,
            converged: model_rating_converged.unwrap_or(true),
        },
        report,
    ))
}

// ---------------------------------------------------------------------------
// correlate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCorrelation {
    pub n: usize,
    pub pearson: CorrelationResult,
    pub spearman: CorrelationResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub format_version: u32,
    pub config_hash: String,
    pub sample_level: BTreeMap<String, MetricCorrelation>,
    pub model_level: BTreeMap<String, MetricCorrelation>,
}

fn correlate_level(
    level: Level,
    rows: &[MetricRow],
    human: &BTreeMap<String, f64>,
) -> Result<BTreeMap<String, MetricCorrelation>, CliError> {
    let mut by_metric: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.level == level) {
        if let Some(h) = human.get(&r.id) {
            by_metric.entry(r.metric.as_str()).or_default().push((r.value, *h));
        }
    }
    let mut out = BTreeMap::new();
    for (metric, joined) in by_metric {
        if joined.len() < 3 {
            return Err(CliError::Input(format!(
                "{level:?}-level metric `{metric}` joins {} rows with human scores, need at least 3",
                joined.len()
            )));
        }
        let (x, y): (Vec<f64>, Vec<f64>) = joined.into_iter().unzip();
        out.insert(
            metric.to_string(),
            MetricCorrelation {
                n: x.len(),
                pearson: pearson(&x, &y)?,
                spearman: spearman(&x, &y)?,
            },
        );
    }
    Ok(out)
}

pub fn cmd_correlate(config: &RunConfig) -> Result<(Outcome, CorrelationReport), CliError> {
    config.validate()?;
    let metrics: Vec<MetricRow> = read_jsonl(require(&config.paths.metrics, "paths.metrics")?)?;
    let scores: Vec<HumanScore> = read_jsonl(require(&config.paths.human_scores, "paths.human_scores")?)?;
    let per_sample = mean_human_scores(&scores)?;

    let sample_level = correlate_level(Level::Sample, &metrics, &per_sample)?;
    let has_model_rows = metrics.iter().any(|r| r.level == Level::Model);
    let model_level = if has_model_rows {
        let samples = load_samples(config)?;
        let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for s in &samples {
            if let (Some(model), Some(h)) = (&s.model_id, per_sample.get(&s.id)) {
                groups.entry(model.clone()).or_default().push(*h);
            }
        }
        let per_model = groups.into_iter().map(|(m, v)| (m, mean(&v))).collect();
        correlate_level(Level::Model, &metrics, &per_model)?
    } else {
        BTreeMap::new()
    };
    if sample_level.is_empty() && model_level.is_empty() {
        return Err(CliError::Input("no metric rows join the human scores".into()));
    }

    let report = CorrelationReport {
        format_version: FORMAT_VERSION,
        config_hash: config.hash(),
        sample_level,
        model_level,
    };
    let mut out = OutputSet::new(config.out_dir(), "correlate");
    out.put_json("correlation.json", &report)?;
    let out_dir = out.dir().to_path_buf();
    out.finish(config)?;
    Ok((
        Outcome {
            out_dir,
            converged: true,
        },
        report,
    ))
}

// ---------------------------------------------------------------------------
// monitor
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorSummary {
    pub format_version: u32,
    pub config_hash: String,
    pub rounds: usize,
    pub stopped: bool,
    pub stop_round: Option<usize>,
    pub stop_step: Option<u64>,
    pub streak_start_round: Option<usize>,
    /// Last checkpoint evaluated before the failing streak began.
    pub last_good_step: Option<u64>,
}

/// Reads `<step>.jsonl` files and `<step>/` directories of JSONL files, in step order.
pub fn load_checkpoints(dir: &Path) -> Result<Vec<CheckpointSamples>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut found: BTreeMap<u64, PathBuf> = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        let stem = if path.is_dir() {
            path.file_name()
        } else if path.extension().is_some_and(|e| e == "jsonl") {
            path.file_stem()
        } else {
            None
        };
        match stem.and_then(|s| s.to_str()).and_then(|s| s.parse::<u64>().ok()) {
            Some(step) => {
                if let Some(prev) = found.insert(step, path.clone()) {
                    return Err(CliError::Input(format!(
                        "step {step} given twice: {} and {}",
                        prev.display(),
                        path.display()
                    )));
                }
            }
            None => warn!(path = %path.display(), "ignoring entry not named by step"),
        }
    }
    let mut out = Vec::with_capacity(found.len());
    for (step, path) in found {
        let samples = if path.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(&path)
                .map_err(|e| CliError::io(&path, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
                .collect();
            files.sort();
            let mut all = Vec::new();
            for f in files {
                all.extend(read_jsonl::<Sample>(&f)?);
            }
            all
        } else {
            read_jsonl(&path)?
        };
        for s in &samples {
            s.validate()?;
        }
        out.push(CheckpointSamples { step, samples });
    }
    Ok(out)
}

pub fn cmd_monitor(config: &RunConfig) -> Result<(Outcome, MonitorSummary), CliError> {
    config.validate()?;
    let judge = config.build_judge()?;
    let checkpoints = load_checkpoints(require(&config.paths.checkpoints, "paths.checkpoints")?)?;
    let mcfg = config.monitor_config();
    let k = mcfg.k_baselines;
    let steps: Vec<u64> = checkpoints.iter().map(|c| c.step).collect();
    let mut monitor = Monitor::new(mcfg)?;
    let mut log: Vec<MonitorDecision> = Vec::new();
    let mut stop_step = None;
    for (i, checkpoint) in checkpoints.into_iter().enumerate() {
        if let Some(decision) = monitor.observe(checkpoint, judge.as_ref())? {
            let stop = decision.stop;
            log.push(decision);
            if stop {
                stop_step = Some(steps[i]);
                break;
            }
        }
    }
    let streak_start = monitor.streak_start();
    let summary = MonitorSummary {
        format_version: FORMAT_VERSION,
        config_hash: config.hash(),
        rounds: log.len(),
        stopped: stop_step.is_some(),
        stop_round: stop_step.and(log.last().map(|d| d.round)),
        stop_step,
        streak_start_round: streak_start,
        last_good_step: streak_start.map(|s| steps[s + k - 1]),
    };
    let mut out = OutputSet::new(config.out_dir(), "monitor");
    out.put_jsonl("monitor.jsonl", &log)?;
    out.put_json("monitor.json", &summary)?;
    let out_dir = out.dir().to_path_buf();
    out.finish(config)?;
    Ok((
        Outcome {
            out_dir,
            converged: true,
        },
        summary,
    ))
}
