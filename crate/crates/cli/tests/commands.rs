mod common;

use std::path::Path;
use std::process::Command;

use common::*;
use skillrank_cli::commands::{Level, MetricRow};
use skillrank_cli::{cmd_build_pairs, cmd_correlate, cmd_monitor, cmd_rate, cmd_score, cmd_simulate, CliError};
use skillrank_core::judge::Label;
use skillrank_core::monitor::checkpoint_key;
use skillrank_core::supervision::{HumanScore, PairRecord, Provenance, Sample};

#[test]
fn build_pairs_counts_match_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let config = config_with(dir.path(), &strong_fixture(3, 2, 2), None);
    let (outcome, manifest) = cmd_build_pairs(&config).unwrap();
    assert_eq!(manifest.strong.pairs, 6 * 3);
    assert_eq!(manifest.strong.rows, 2 * 6 * 3);
    assert_eq!(manifest.weak.pairs, 0);
    assert_eq!(manifest.warnings.len(), 1);
    let rows: Vec<PairRecord> = skillrank_cli::io::read_jsonl(&outcome.out_dir.join("strong.jsonl")).unwrap();
    assert_eq!(rows.len(), 36);
    assert!(rows.iter().all(|r| r.provenance == Provenance::Strong));
    for file in ["weak.jsonl", "human.jsonl", "pairs.json", "run.json", "meta.json"] {
        assert!(outcome.out_dir.join(file).exists(), "{file}");
    }
}

#[test]
fn build_pairs_weak_and_human() {
    let dir = tempfile::tempdir().unwrap();
    let samples = checkpoint_fixture();
    let mut config = config_with(dir.path(), &samples, None);
    let scores: Vec<HumanScore> = ["h0-0", "h0-1", "alpha-0-0"]
        .iter()
        .zip([5, 2, 4])
        .map(|(id, score)| HumanScore {
            sample_id: id.to_string(),
            score,
            annotator: "a1".into(),
        })
        .collect();
    let human_path = dir.path().join("human.jsonl");
    write_jsonl(&human_path, &scores);
    config.paths.human_scores = Some(human_path);

    let (outcome, manifest) = cmd_build_pairs(&config).unwrap();
    assert!(manifest.warnings.is_empty());
    // Six checkpoints give 15 step pairs; (900, 1000) sits in the final 20%.
    assert_eq!(manifest.weak.pairs, 14 * 3);
    assert_eq!(manifest.curriculum.len(), 3);
    assert_eq!(manifest.curriculum.last().unwrap().weak_rows_end, manifest.weak.rows);
    let margins: Vec<u64> = manifest.curriculum.iter().map(|s| s.min_margin.unwrap()).collect();
    assert!(margins.windows(2).all(|w| w[0] >= w[1]), "{margins:?}");
    // All three scored samples share a context and differ in score.
    assert_eq!(manifest.human.pairs, 3);

    let weak: Vec<PairRecord> = skillrank_cli::io::read_jsonl(&outcome.out_dir.join("weak.jsonl")).unwrap();
    let row_margins: Vec<u64> = weak.iter().map(|r| r.margin.unwrap()).collect();
    assert!(row_margins.iter().all(|m| *m >= 100));
    let first_stage = manifest.curriculum[0].weak_rows_end;
    assert!(row_margins[..first_stage].iter().min() >= row_margins[first_stage..].iter().max());
}

#[test]
fn truncation_applies_before_pairing() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = config_with(dir.path(), &strong_fixture(1, 1, 1), None);
    config.pairs.max_words = Some(5);
    let (outcome, _) = cmd_build_pairs(&config).unwrap();
    let rows: Vec<PairRecord> = skillrank_cli::io::read_jsonl(&outcome.out_dir.join("strong.jsonl")).unwrap();
    assert!(rows.iter().all(|r| r.first.split_whitespace().count() <= 5));
    assert!(rows.iter().any(|r| r.first == "Human story 0 for 0."));
}

#[test]
fn malformed_sample_line_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = config_with(dir.path(), &strong_fixture(1, 1, 1), None);
    let path = config.paths.samples.clone().unwrap();
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push_str("{\"id\": \"broken\"\n");
    std::fs::write(&path, text).unwrap();
    let err = cmd_build_pairs(&config).unwrap_err();
    assert!(
        matches!(err, CliError::Input(ref m) if m.contains("samples.jsonl:3")),
        "{err}"
    );
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn rate_orders_models_by_quality() {
    let dir = tempfile::tempdir().unwrap();
    let judge = oracle(&[("alpha", 3.0), ("beta", 2.0), ("gamma", 1.0), ("m", 0.0)]);
    let config = config_with(dir.path(), &checkpoint_fixture(), Some(judge));
    let (outcome, summary) = cmd_rate(&config).unwrap();
    assert!(outcome.converged);
    assert_eq!(summary.order, ["alpha", "beta", "gamma", "m"]);
    let board: serde_json::Value = serde_json::from_slice(&read(outcome.out_dir.join("leaderboard.json"))).unwrap();
    let keys: Vec<&String> = board.as_object().unwrap().keys().collect();
    assert_eq!(keys, ["alpha", "beta", "gamma", "m"]);
    for entry in board.as_object().unwrap().values() {
        for field in ["rating", "deviation", "volatility", "games"] {
            assert!(entry.get(field).is_some(), "{field}");
        }
    }
    let log = String::from_utf8(read(outcome.out_dir.join("matches.jsonl"))).unwrap();
    assert_eq!(log.lines().count() as u64, summary.matches_played);
}

#[test]
fn rate_reports_non_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = config_with(
        dir.path(),
        &checkpoint_fixture(),
        Some(oracle(&[("alpha", 3.0), ("beta", 2.0), ("gamma", 1.0), ("m", 0.0)])),
    );
    config.tournament.max_matches = 20;
    let (outcome, summary) = cmd_rate(&config).unwrap();
    assert!(!outcome.converged);
    assert_eq!(summary.matches_played, 20);
    assert!(outcome.out_dir.join("leaderboard.json").exists());
}

#[test]
fn score_with_scripted_judge_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let samples: Vec<Sample> = (0..4)
        .map(|i| {
            Sample::generated(
                format!("s{i}"),
                "ctx",
                format!("text {i}"),
                if i < 2 { "a" } else { "b" },
                1,
                None,
            )
        })
        .collect();
    // 4 samples x 4 references: a's samples win everything, b's draw and lose.
    let mut labels = vec![Label::Better; 8];
    labels.extend([
        Label::Tie,
        Label::Tie,
        Label::Worse,
        Label::Worse,
        Label::Worse,
        Label::Worse,
        Label::Worse,
        Label::Tie,
    ]);
    let mut config = config_with(dir.path(), &samples, Some(scripted(labels)));
    config.score.references = 4;
    config.score.sample_rating = false;
    config.score.model_rating = false;
    let (_, report) = cmd_score(&config).unwrap();
    let values: Vec<f64> = report.samples.iter().map(|s| s.value).collect();
    assert_eq!(values, [12.0, 12.0, 2.0, 1.0]);
    let models: Vec<(String, f64)> = report.models.iter().map(|m| (m.model_id.clone(), m.value)).collect();
    assert_eq!(models, [("a".to_string(), 12.0), ("b".to_string(), 1.5)]);
}

#[test]
fn score_then_correlate() {
    let dir = tempfile::tempdir().unwrap();
    let samples: Vec<Sample> = (0..6)
        .map(|i| {
            Sample::generated(
                format!("s{i}"),
                "ctx",
                format!("text {i}"),
                format!("m{}", i / 2),
                1,
                None,
            )
        })
        .collect();
    let mut qualities: Vec<(String, f64)> = (0..6).map(|i| (format!("s{i}"), i as f64)).collect();
    qualities.extend((0..3).map(|m| (format!("m{m}"), m as f64)));
    let q: Vec<(&str, f64)> = qualities.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    let mut judge = oracle(&q);
    judge.oracle.as_mut().unwrap().flip_prob = 0.0;
    let mut config = config_with(dir.path(), &samples, Some(judge));
    config.score.references = 6;
    config.score.sample_budget = 2000;
    let (outcome, report) = cmd_score(&config).unwrap();
    assert!(report.model_rating_converged.unwrap());
    assert_eq!(report.references.len(), 6);

    let human: Vec<HumanScore> = (0..6)
        .map(|i| HumanScore {
            sample_id: format!("s{i}"),
            score: 1 + (i as i64 * 4) / 5,
            annotator: "x".into(),
        })
        .collect();
    let human_path = dir.path().join("human.jsonl");
    write_jsonl(&human_path, &human);
    config.paths.human_scores = Some(human_path);
    config.paths.metrics = Some(outcome.out_dir.join("metrics.jsonl"));
    config.paths.out = Some(dir.path().join("corr"));
    let (_, corr) = cmd_correlate(&config).unwrap();
    let keys: Vec<&String> = corr.sample_level.keys().collect();
    assert_eq!(keys, ["reference_points", "skill_rating"]);
    for c in corr.sample_level.values() {
        assert_eq!(c.n, 6);
        assert!(c.spearman.coefficient > 0.8, "{c:?}");
    }
    assert_eq!(corr.model_level.len(), 3);
}

#[test]
fn correlate_rejects_short_joins() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = config_with(dir.path(), &[], None);
    let metrics = vec![
        MetricRow {
            level: Level::Sample,
            id: "a".into(),
            metric: "bleu".into(),
            value: 0.1,
        },
        MetricRow {
            level: Level::Sample,
            id: "b".into(),
            metric: "bleu".into(),
            value: 0.2,
        },
    ];
    let human: Vec<HumanScore> = ["a", "b"]
        .iter()
        .map(|id| HumanScore {
            sample_id: id.to_string(),
            score: 3,
            annotator: "x".into(),
        })
        .collect();
    write_jsonl(&dir.path().join("m.jsonl"), &metrics);
    write_jsonl(&dir.path().join("h.jsonl"), &human);
    config.paths.metrics = Some(dir.path().join("m.jsonl"));
    config.paths.human_scores = Some(dir.path().join("h.jsonl"));
    let err = cmd_correlate(&config).unwrap_err();
    assert_eq!(err.exit_code(), 3, "{err}");
}

fn write_checkpoints(dir: &Path, steps: &[u64]) {
    for (i, step) in steps.iter().enumerate() {
        let samples: Vec<Sample> = (0..5)
            .map(|c| {
                Sample::generated(
                    format!("{step}-{c}"),
                    format!("c{c}"),
                    format!("text {step} {c}"),
                    "m",
                    *step,
                    None,
                )
            })
            .collect();
        if i % 2 == 0 {
            write_jsonl(&dir.join(format!("{step}.jsonl")), &samples);
        } else {
            write_jsonl(&dir.join(step.to_string()).join("part.jsonl"), &samples);
        }
    }
}

#[test]
fn monitor_stops_after_decline() {
    let dir = tempfile::tempdir().unwrap();
    let steps: Vec<u64> = (1..=14).map(|t| t * 10).collect();
    let ckpt = dir.path().join("ckpt");
    write_checkpoints(&ckpt, &steps);
    std::fs::write(ckpt.join("README.txt"), "ignored").unwrap();
    let quality: Vec<(String, f64)> = steps
        .iter()
        .map(|s| (checkpoint_key(*s), if *s <= 50 { *s as f64 } else { 100.0 - *s as f64 }))
        .collect();
    let q: Vec<(&str, f64)> = quality.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    let mut config = config_with(dir.path(), &[], Some(oracle(&q)));
    config.paths.checkpoints = Some(ckpt);
    config.monitor.n_comparisons = 100;
    let (outcome, summary) = cmd_monitor(&config).unwrap();
    assert!(summary.stopped);
    // Checkpoint 60 is the first decline; it is evaluated in round 3.
    assert_eq!(summary.streak_start_round, Some(3));
    assert_eq!(summary.stop_round, Some(7));
    assert_eq!(summary.stop_step, Some(100));
    assert_eq!(summary.last_good_step, Some(50));
    let log = String::from_utf8(read(outcome.out_dir.join("monitor.jsonl"))).unwrap();
    assert_eq!(log.lines().count(), 8);
    let first: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    let keys: Vec<&String> = first.as_object().unwrap().keys().collect();
    assert_eq!(keys, ["losses", "round", "stop", "ties", "wins"]);
}

#[test]
fn simulate_reports_recovery() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = config_with(dir.path(), &[], None);
    config.simulate.runs = 5;
    let (_, report) = cmd_simulate(&config).unwrap();
    assert_eq!(report.runs, 5);
    assert!(report.recovery_rate.unwrap() >= 0.8);
    assert!(report.matches_to_convergence.is_some());
}

fn skillrank(dir: &Path, config: &str, args: &[&str]) -> std::process::Output {
    let path = dir.join("run.toml");
    std::fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_skillrank"))
        .args(args)
        .arg("--config")
        .arg(&path)
        .env_remove("SKILLRANK_JUDGE_ENDPOINT")
        .output()
        .unwrap()
}

const ORACLE_RUN: &str = r#"
seed = 5

[paths]
samples = "samples.jsonl"
out = "out"

[judge]
kind = "oracle"

[judge.oracle]
latent_quality = { alpha = 3.0, beta = 2.0, gamma = 1.0 }
flip_prob = 0.1
"#;

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let samples: Vec<Sample> = checkpoint_fixture()
        .into_iter()
        .filter(|s| s.model_id.as_deref() != Some("m"))
        .collect();
    write_jsonl(&dir.path().join("samples.jsonl"), &samples);

    let ok = skillrank(dir.path(), ORACLE_RUN, &["rate"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(dir.path().join("out/leaderboard.json").exists());

    let bad_config = skillrank(dir.path(), &format!("{ORACLE_RUN}\n[rating]\ntau = -2.0\n"), &["rate"]);
    assert_eq!(bad_config.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad_config.stderr).contains("rating"));

    let missing_input = skillrank(
        dir.path(),
        &ORACLE_RUN.replace("samples.jsonl", "nope.jsonl"),
        &["rate"],
    );
    assert_eq!(missing_input.status.code(), Some(3));

    let budget = skillrank(
        dir.path(),
        &format!("{ORACLE_RUN}\n[tournament]\nmax_matches = 10\n"),
        &["rate"],
    );
    assert_eq!(budget.status.code(), Some(5));
    assert!(dir.path().join("out/matches.jsonl").exists());

    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let remote = skillrank(
        dir.path(),
        &format!(
            "{ORACLE_RUN}\n[judge.remote]\nendpoint = \"http://127.0.0.1:{port}\"\ntimeout_ms = 200\nretries = 0\n"
        ),
        &["rate", "--judge", "remote"],
    );
    assert_eq!(
        remote.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&remote.stderr)
    );

    let no_judge = skillrank(dir.path(), "[paths]\nsamples = \"samples.jsonl\"\n", &["rate"]);
    assert_eq!(no_judge.status.code(), Some(2));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    write_jsonl(&dir.path().join("samples.jsonl"), &checkpoint_fixture());
    let cfg = ORACLE_RUN.replace("gamma = 1.0", "gamma = 1.0, m = 0.0");
    let run = |seed: &str, out: &str| {
        let o = skillrank(
            dir.path(),
            &cfg,
            &["rate", "--seed", seed, "--out", dir.path().join(out).to_str().unwrap()],
        );
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        read(dir.path().join(out).join("matches.jsonl"))
    };
    assert_eq!(run("1", "a"), run("1", "b"));
    assert_ne!(run("1", "a"), run("2", "c"));
}
