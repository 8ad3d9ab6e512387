//! Absolute scores from pairwise comparisons, and correlation with human scores.
//!
//! Sample-level scores come either from a fixed pool of references (3 points
//! per win, 1 per tie, 0 per loss) or from a tournament in which every sample
//! is a player that always produces itself. Model-level scores average those,
//! or rate the models directly in a tournament.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::judge::{ComparisonRequest, Judge, JudgeError, Label, RequestMeta, Source};
use crate::rating::RatingConfig;
use crate::seed;
use crate::supervision::{Origin, Sample};
use crate::tournament::{self, Context, ContextPool, Player, TournamentConfig, TournamentError, TournamentResult};

pub const DEFAULT_REFERENCE_COUNT: usize = 50;
pub const DEFAULT_SAMPLE_PLAY_BUDGET: u64 = 10_000;

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("reference set is empty")]
    NoReferences,
    #[error("model `{0}` has no scored samples")]
    EmptyGroup(String),
    #[error("judge failed comparing `{sample}` with reference `{reference}`: {source}")]
    Judge {
        sample: String,
        reference: String,
        source: JudgeError,
    },
    #[error(transparent)]
    Tournament(#[from] TournamentError),
    #[error(transparent)]
    Correlation(#[from] CorrelationError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorrelationError {
    #[error("inputs differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("correlation undefined for constant input")]
    ConstantInput,
    #[error("non-finite input value")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMethod {
    ReferencePoints,
    SkillRating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub sample_id: String,
    pub method: SampleMethod,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelMethod {
    AvgReference,
    AvgSampleRating,
    ModelSkillRating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub model_id: String,
    pub method: ModelMethod,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationKind {
    Pearson,
    Spearman,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub coefficient: f64,
    pub p_value: f64,
    pub n: usize,
    pub kind: CorrelationKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceOptions {
    pub seed: u64,
    /// Extra attempts per comparison on transport errors.
    pub retries: u32,
    pub allow_tie: bool,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            retries: 2,
            allow_tie: true,
        }
    }
}

fn source_of(sample: &Sample) -> Source {
    Source::with_group(sample.id.clone(), sample.model_id.clone())
}

/// Draws the common reference set from the machine-generated samples.
pub fn select_references(pool: &[Sample], count: usize, seed: u64) -> Vec<Sample> {
    let mut generated: Vec<&Sample> = pool.iter().filter(|s| s.origin == Origin::Model).collect();
    generated.sort_by(|a, b| a.id.cmp(&b.id));
    generated.shuffle(&mut seed::stream(seed, "references", 0));
    generated.into_iter().take(count).cloned().collect()
}

fn compare_with_retry(
    judge: &dyn Judge,
    request: &ComparisonRequest,
    retries: u32,
) -> Result<crate::judge::Verdict, JudgeError> {
    let mut attempt = 0;
    loop {
        match judge.compare(request) {
            Err(e) if e.is_transport() && attempt < retries => attempt += 1,
            other => return other,
        }
    }
}

/// 3 points per reference beaten, 1 per tie, 0 per loss.
///
/// Each request carries the evaluated sample's own context for both texts.
pub fn reference_score(
    sample: &Sample,
    refs: &[Sample],
    judge: &dyn Judge,
    options: &ReferenceOptions,
) -> Result<SampleScore, ScoringError> {
    if refs.is_empty() {
        return Err(ScoringError::NoReferences);
    }
    let mut points = 0u64;
    for (i, reference) in refs.iter().enumerate() {
        let request = ComparisonRequest::new(sample.context.clone(), sample.text.clone(), reference.text.clone())
            .allow_tie(options.allow_tie)
            .with_meta(RequestMeta {
                first_source: source_of(sample),
                second_source: source_of(reference),
                match_seed: seed::derive_seed(options.seed, &format!("reference/{}", sample.id), i as u64),
            });
        let verdict = compare_with_retry(judge, &request, options.retries).map_err(|source| ScoringError::Judge {
            sample: sample.id.clone(),
            reference: reference.id.clone(),
            source,
        })?;
        points += match verdict.label {
            Label::Better => 3,
            Label::Tie => 1,
            Label::Worse => 0,
        };
    }
    Ok(SampleScore {
        sample_id: sample.id.clone(),
        method: SampleMethod::ReferencePoints,
        value: points as f64,
    })
}

/// Reference scores for many samples, computed in parallel, in input order.
pub fn reference_scores(
    samples: &[Sample],
    refs: &[Sample],
    judge: &dyn Judge,
    options: &ReferenceOptions,
) -> Result<Vec<SampleScore>, ScoringError> {
    samples
        .par_iter()
        .map(|s| reference_score(s, refs, judge, options))
        .collect()
}

/// Rates each sample as a player that always outputs itself.
pub fn sample_skill_rating(
    samples: &[Sample],
    judge: &dyn Judge,
    budget: u64,
    config: &TournamentConfig,
    rating_config: &RatingConfig,
) -> Result<BTreeMap<String, f64>, ScoringError> {
    let result = sample_tournament(samples, judge, budget, config, rating_config)?;
    Ok(result.leaderboard.into_iter().map(|s| (s.id, s.rating)).collect())
}

/// The full tournament behind [`sample_skill_rating`].
pub fn sample_tournament(
    samples: &[Sample],
    judge: &dyn Judge,
    budget: u64,
    config: &TournamentConfig,
    rating_config: &RatingConfig,
) -> Result<TournamentResult, ScoringError> {
    if samples.len() < 2 {
        return Err(TournamentError::TooFewPlayers(samples.len()).into());
    }
    let players: Vec<Player> = samples
        .iter()
        .map(|s| {
            Player::constant(
                s.id.clone(),
                s.text.clone(),
                Some(Context::new(s.context.clone(), s.context.clone())),
                rating_config.initial_state(),
            )
            .with_group(s.model_id.clone())
        })
        .collect();
    let config = TournamentConfig {
        plays_budget: Some(budget),
        max_matches: config.max_matches.max(budget),
        ..config.clone()
    };
    Ok(tournament::run(
        players,
        judge,
        &ContextPool::default(),
        &config,
        rating_config,
    )?)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Mean reference score over a model's samples.
pub fn model_score_avg_reference(
    model_id: &str,
    samples: &[Sample],
    refs: &[Sample],
    judge: &dyn Judge,
    options: &ReferenceOptions,
) -> Result<ModelScore, ScoringError> {
    if samples.is_empty() {
        return Err(ScoringError::EmptyGroup(model_id.to_string()));
    }
    let scores = reference_scores(samples, refs, judge, options)?;
    let values: Vec<f64> = scores.iter().map(|s| s.value).collect();
    Ok(ModelScore {
        model_id: model_id.to_string(),
        method: ModelMethod::AvgReference,
        value: mean(&values),
    })
}

/// Mean sample rating per model.
pub fn model_score_avg_sample_rating(groups: &BTreeMap<String, Vec<f64>>) -> Result<Vec<ModelScore>, ScoringError> {
    groups
        .iter()
        .map(|(model, ratings)| {
            if ratings.is_empty() {
                return Err(ScoringError::EmptyGroup(model.clone()));
            }
            Ok(ModelScore {
                model_id: model.clone(),
                method: ModelMethod::AvgSampleRating,
                value: mean(ratings),
            })
        })
        .collect()
}

/// Rates models directly in a tournament.
pub fn model_skill_rating(
    players: Vec<Player>,
    judge: &dyn Judge,
    contexts: &ContextPool,
    config: &TournamentConfig,
    rating_config: &RatingConfig,
) -> Result<(Vec<ModelScore>, TournamentResult), ScoringError> {
    let result = tournament::run(players, judge, contexts, config, rating_config)?;
    let scores = result
        .leaderboard
        .iter()
        .map(|s| ModelScore {
            model_id: s.id.clone(),
            method: ModelMethod::ModelSkillRating,
            value: s.rating,
        })
        .collect();
    Ok((scores, result))
}

fn check_inputs(x: &[f64], y: &[f64]) -> Result<(), CorrelationError> {
    if x.len() != y.len() {
        return Err(CorrelationError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(CorrelationError::TooFewPoints(x.len()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(CorrelationError::NonFinite);
    }
    Ok(())
}

fn product_moment(x: &[f64], y: &[f64]) -> Result<f64, CorrelationError> {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(CorrelationError::ConstantInput);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Two-sided p-value of `r` under the t approximation with `n - 2` degrees of freedom.
pub fn t_test_p_value(r: f64, n: usize) -> f64 {
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult, CorrelationError> {
    check_inputs(x, y)?;
    let r = product_moment(x, y)?;
    Ok(CorrelationResult {
        coefficient: r,
        p_value: t_test_p_value(r, x.len()),
        n: x.len(),
        kind: CorrelationKind::Pearson,
    })
}

/// 1-based ranks; tied values share the average of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of the average-rank transforms.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<CorrelationResult, CorrelationError> {
    check_inputs(x, y)?;
    let rho = product_moment(&average_ranks(x), &average_ranks(y))?;
    Ok(CorrelationResult {
        coefficient: rho,
        p_value: t_test_p_value(rho, x.len()),
        n: x.len(),
        kind: CorrelationKind::Spearman,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::judge::{LexicalJudge, ScriptedJudge};
    use proptest::prelude::*;

    fn refs(n: usize) -> Vec<Sample> {
        (0..n)
            .map(|i| Sample::generated(format!("ref{i}"), "c", format!("ref text {i}"), "m", 1, None))
            .collect()
    }

    fn sample(text: &str) -> Sample {
        Sample::generated("s", "c", text, "m", 1, None)
    }

    fn scripted(counts: &[(Label, usize)]) -> ScriptedJudge {
        let script = counts.iter().flat_map(|&(l, n)| std::iter::repeat_n(l, n)).collect();
        ScriptedJudge::new(script).unwrap()
    }

    #[test]
    fn reference_score_extremes_and_mixed() {
        let opts = ReferenceOptions::default();
        let r = refs(50);
        let all_win = scripted(&[(Label::Better, 50)]);
        assert_eq!(reference_score(&sample("x"), &r, &all_win, &opts).unwrap().value, 150.0);
        let all_tie = scripted(&[(Label::Tie, 50)]);
        assert_eq!(reference_score(&sample("x"), &r, &all_tie, &opts).unwrap().value, 50.0);
        let all_loss = scripted(&[(Label::Worse, 50)]);
        assert_eq!(reference_score(&sample("x"), &r, &all_loss, &opts).unwrap().value, 0.0);
        // 20 * 3 + 10 * 1 + 20 * 0
        let mixed = scripted(&[(Label::Better, 20), (Label::Tie, 10), (Label::Worse, 20)]);
        assert_eq!(reference_score(&sample("x"), &r, &mixed, &opts).unwrap().value, 70.0);
    }

    #[test]
    fn reference_score_errors() {
        let opts = ReferenceOptions::default();
        assert!(matches!(
            reference_score(&sample("x"), &[], &LexicalJudge, &opts),
            Err(ScoringError::NoReferences)
        ));
        let short = scripted(&[(Label::Better, 3)]);
        assert!(matches!(
            reference_score(&sample("x"), &refs(5), &short, &opts),
            Err(ScoringError::Judge { .. })
        ));
    }

    #[test]
    fn reference_score_ignores_reference_order() {
        let opts = ReferenceOptions::default();
        let mut r = refs(20);
        let s = sample("ref text 12");
        let before = reference_score(&s, &r, &LexicalJudge, &opts).unwrap().value;
        r.reverse();
        assert_eq!(reference_score(&s, &r, &LexicalJudge, &opts).unwrap().value, before);
    }

    #[test]
    fn model_averages() {
        let opts = ReferenceOptions::default();
        let r = refs(50);
        let samples = vec![sample("a"), sample("b")];
        let all_win = scripted(&[(Label::Better, 100)]);
        let m = model_score_avg_reference("m", &samples, &r, &all_win, &opts).unwrap();
        assert_eq!(m.value, 150.0);
        assert!(model_score_avg_reference("m", &[], &r, &all_win, &opts).is_err());

        let groups = BTreeMap::from([("x".to_string(), vec![1400.0, 1600.0]), ("y".to_string(), vec![1720.0])]);
        let scores = model_score_avg_sample_rating(&groups).unwrap();
        assert_eq!(scores[0].value, 1500.0);
        assert_eq!(scores[1].value, 1720.0);
        let empty = BTreeMap::from([("z".to_string(), vec![])]);
        assert!(matches!(
            model_score_avg_sample_rating(&empty),
            Err(ScoringError::EmptyGroup(_))
        ));
    }

    #[test]
    fn select_references_uses_generated_only() {
        let mut pool = refs(80);
        pool.push(Sample::human("h", "c", "human"));
        let picked = select_references(&pool, 50, 3);
        assert_eq!(picked.len(), 50);
        assert!(picked.iter().all(|s| s.origin == Origin::Model));
        let mut reversed = pool.clone();
        reversed.reverse();
        assert_eq!(select_references(&reversed, 50, 3), picked);
    }

    #[test]
    fn sample_rating_examples() {
        let rc = RatingConfig::default();
        let cfg = TournamentConfig {
            seed: 2,
            ..Default::default()
        };
        let two = vec![
            Sample::human("a", "c", "zz better"),
            Sample::human("b", "c", "aa worse"),
        ];
        let ratings = sample_skill_rating(&two, &LexicalJudge, 200, &cfg, &rc).unwrap();
        assert!(ratings["a"] > ratings["b"]);

        let same: Vec<_> = (0..4).map(|i| Sample::human(format!("s{i}"), "c", "same")).collect();
        let ratings = sample_skill_rating(&same, &LexicalJudge, 300, &cfg, &rc).unwrap();
        for r in ratings.values() {
            assert!((r - 1500.0).abs() < 1e-6);
        }
    }

    #[test]
    fn pearson_examples() {
        let x: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let r = pearson(&x, &y).unwrap();
        assert!((r.coefficient - 1.0).abs() < 1e-12);
        assert!(r.p_value < 0.001);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap().coefficient + 1.0).abs() < 1e-12);

        let r = pearson(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 1.0, 4.0, 3.0, 5.0]).unwrap();
        // sum of centered products 8 over sqrt(10 * 10)
        assert!((r.coefficient - 0.8).abs() < 1e-12);
        // t = 0.8 * sqrt(3 / 0.36) = 2.3094, two-sided with 3 df
        assert!((r.p_value - 0.104088).abs() < 1e-5, "{}", r.p_value);
    }

    #[test]
    fn correlation_errors() {
        assert_eq!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(CorrelationError::ConstantInput)
        );
        assert_eq!(
            pearson(&[1.0, 2.0], &[1.0, 2.0]),
            Err(CorrelationError::TooFewPoints(2))
        );
        assert_eq!(
            spearman(&[1.0, 2.0, 3.0], &[1.0]),
            Err(CorrelationError::LengthMismatch(3, 1))
        );
        assert_eq!(
            pearson(&[1.0, f64::NAN, 3.0], &[1.0, 2.0, 3.0]),
            Err(CorrelationError::NonFinite)
        );
    }

    #[test]
    fn spearman_examples() {
        let r = spearman(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap();
        assert!((r.coefficient + 0.5).abs() < 1e-12);
        let x = [0.1, 0.5, 2.0, 3.0, 9.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| v.exp()).collect();
        assert_eq!(spearman(&x, &y).unwrap().coefficient, 1.0);
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    proptest! {
        #[test]
        fn spearman_is_rank_invariant(x in prop::collection::vec(-100.0..100.0f64, 5..30), seed in any::<u64>()) {
            let mut y = x.clone();
            y.shuffle(&mut seed::stream(seed, "t", 0));
            prop_assume!(pearson(&x, &y).is_ok());
            let gx: Vec<f64> = x.iter().map(|v| v.powi(3) + 2.0 * v).collect();
            prop_assert_eq!(spearman(&x, &y).unwrap().coefficient, spearman(&gx, &y).unwrap().coefficient);
        }

        #[test]
        fn pearson_is_affine_equivariant(
            x in prop::collection::vec(-10.0..10.0f64, 5..30),
            a in prop_oneof![-5.0..-0.1f64, 0.1..5.0f64],
            b in -10.0..10.0f64,
            seed in any::<u64>(),
        ) {
            let mut y = x.clone();
            y.shuffle(&mut seed::stream(seed, "t", 0));
            prop_assume!(pearson(&x, &y).is_ok());
            let ax: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let r = pearson(&x, &y).unwrap().coefficient;
            let r2 = pearson(&ax, &y).unwrap().coefficient;
            prop_assert!((r2 - a.signum() * r).abs() < 1e-12);
        }

        #[test]
        fn reference_points_are_bounded(n in 1usize..20, text in "[a-z]{1,8}") {
            let r = refs(n);
            let s = sample(&text);
            let v = reference_score(&s, &r, &LexicalJudge, &ReferenceOptions::default()).unwrap().value;
            prop_assert!(v >= 0.0 && v <= 3.0 * n as f64);
        }
    }
}
