//! Synthetic validation: oracle players with known qualities, rated by the
//! tournament, checked against the truth.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use skillrank_core::judge::{OracleJudge, OracleJudgeConfig};
use skillrank_core::rating::RatingConfig;
use skillrank_core::scoring::spearman;
use skillrank_core::seed;
use skillrank_core::tournament::{self, Context, ContextPool, Player, SyntheticSampler, TournamentConfig};
use tracing::info;

use crate::commands::Outcome;
use crate::config::{RunConfig, SimulateConfig, FORMAT_VERSION};
use crate::error::CliError;
use crate::io::OutputSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub run: usize,
    pub seed: u64,
    /// Leaderboard order equals latent order; `None` when qualities repeat.
    pub recovered: Option<bool>,
    /// Spearman between final rating and latent quality; `None` when undefined.
    pub spearman: Option<f64>,
    pub converged: bool,
    pub matches: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub min: u64,
    pub median: f64,
    pub mean: f64,
    pub max: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub format_version: u32,
    pub config_hash: String,
    pub qualities: Vec<f64>,
    pub runs: usize,
    /// Two or more players share a quality, so exact recovery is undefined.
    pub degenerate: bool,
    pub recovery_rate: Option<f64>,
    pub spearman_min: Option<f64>,
    pub spearman_mean: Option<f64>,
    pub converged_runs: usize,
    /// Matches played by the runs that converged.
    pub matches_to_convergence: Option<Distribution>,
    pub per_run: Vec<RunOutcome>,
}

pub fn player_id(i: usize) -> String {
    format!("p{i}")
}

/// One seeded tournament among synthetic players with the given qualities.
pub fn simulate_run(
    qualities: &[f64],
    sim: &SimulateConfig,
    tournament: &TournamentConfig,
    rating: &RatingConfig,
    run: usize,
    seed: u64,
) -> Result<RunOutcome, CliError> {
    let mut oracle = OracleJudgeConfig::new(qualities.iter().enumerate().map(|(i, q)| (player_id(i), *q)).collect());
    oracle.sample_noise = sim.sample_noise;
    oracle.tie_band = sim.tie_band;
    oracle.flip_prob = sim.flip_prob;
    oracle.seed = seed::derive_seed(seed, "oracle", 0);
    let judge = OracleJudge::new(oracle)?;

    let players = (0..qualities.len())
        .map(|i| {
            let id = player_id(i);
            Player::model(
                id.clone(),
                Arc::new(SyntheticSampler { name: id }),
                rating.initial_state(),
            )
        })
        .collect();
    let contexts = ContextPool::new(
        (0..sim.contexts)
            .map(|c| Context::new(format!("c{c}"), format!("synthetic context {c}")))
            .collect(),
    );
    let tcfg = TournamentConfig {
        seed: seed::derive_seed(seed, "tournament", 0),
        ..tournament.clone()
    };
    let result = tournament::run(players, &judge, &contexts, &tcfg, rating)?;

    let degenerate = has_duplicates(qualities);
    let recovered = (!degenerate).then(|| {
        let mut truth: Vec<usize> = (0..qualities.len()).collect();
        truth.sort_by(|&a, &b| qualities[b].total_cmp(&qualities[a]));
        let truth: Vec<String> = truth.into_iter().map(player_id).collect();
        result.leaderboard.iter().map(|s| &s.id).eq(truth.iter())
    });
    let ratings: Vec<f64> = (0..qualities.len())
        .map(|i| result.rating_of(&player_id(i)).expect("every player is rated"))
        .collect();
    Ok(RunOutcome {
        run,
        seed,
        recovered,
        spearman: spearman(&ratings, qualities).ok().map(|r| r.coefficient),
        converged: result.converged,
        matches: result.matches_played,
    })
}

fn has_duplicates(values: &[f64]) -> bool {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.windows(2).any(|w| w[0] == w[1])
}

fn distribution(mut values: Vec<u64>) -> Option<Distribution> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable();
    let n = values.len();
    let median = if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        (values[n / 2 - 1] + values[n / 2]) as f64 / 2.0
    };
    Some(Distribution {
        min: values[0],
        median,
        mean: values.iter().sum::<u64>() as f64 / n as f64,
        max: values[n - 1],
    })
}

pub fn summarize(config: &RunConfig, qualities: Vec<f64>, per_run: Vec<RunOutcome>) -> SimulationReport {
    let degenerate = has_duplicates(&qualities);
    let runs = per_run.len();
    let recovery_rate =
        (!degenerate).then(|| per_run.iter().filter(|r| r.recovered == Some(true)).count() as f64 / runs as f64);
    let rhos: Vec<f64> = per_run.iter().filter_map(|r| r.spearman).collect();
    let (spearman_min, spearman_mean) = if rhos.len() == runs && runs > 0 {
        (
            Some(rhos.iter().copied().fold(f64::INFINITY, f64::min)),
            Some(rhos.iter().sum::<f64>() / runs as f64),
        )
    } else {
        (None, None)
    };
    let converged: Vec<u64> = per_run.iter().filter(|r| r.converged).map(|r| r.matches).collect();
    SimulationReport {
        format_version: FORMAT_VERSION,
        config_hash: config.hash(),
        qualities,
        runs,
        degenerate,
        recovery_rate,
        spearman_min,
        spearman_mean,
        converged_runs: converged.len(),
        matches_to_convergence: distribution(converged),
        per_run,
    }
}

pub fn cmd_simulate(config: &RunConfig) -> Result<(Outcome, SimulationReport), CliError> {
    config.validate()?;
    let sim = &config.simulate;
    let qualities = sim.latent_qualities();
    let mut per_run = Vec::with_capacity(sim.runs);
    for run in 0..sim.runs {
        let seed = seed::derive_seed(config.seed, "simulate", run as u64);
        per_run.push(simulate_run(
            &qualities,
            sim,
            &config.tournament,
            &config.rating,
            run,
            seed,
        )?);
    }
    let report = summarize(config, qualities, per_run);
    if report.degenerate {
        info!("latent qualities repeat; ranking recovery is undefined");
    }
    let mut out = OutputSet::new(config.out_dir(), "simulate");
    out.put_json("simulate.json", &report)?;
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
