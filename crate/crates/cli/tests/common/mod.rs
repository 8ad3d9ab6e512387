#![allow(dead_code)]

use std::path::{Path, PathBuf};

use skillrank_cli::config::{JudgeKind, JudgeSpec, Paths, ScriptedJudgeSpec};
use skillrank_cli::RunConfig;
use skillrank_core::judge::{DecisionRule, Label, OracleJudgeConfig};
use skillrank_core::supervision::Sample;

pub fn write_jsonl<T: serde::Serialize>(path: &Path, rows: &[T]) {
    let mut text = String::new();
    for r in rows {
        text.push_str(&serde_json::to_string(r).unwrap());
        text.push('\n');
    }
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(path, text).unwrap();
}

/// `real` human and `generated` model samples for each of `contexts` contexts.
pub fn strong_fixture(contexts: usize, real: usize, generated: usize) -> Vec<Sample> {
    let mut out = Vec::new();
    for c in 0..contexts {
        for r in 0..real {
            out.push(Sample::human(
                format!("h{c}-{r}"),
                format!("prompt {c}"),
                format!("Human story {r} for {c}. It ends well."),
            ));
        }
        for g in 0..generated {
            out.push(Sample::generated(
                format!("g{c}-{g}"),
                format!("prompt {c}"),
                format!("Model story {g} for {c}. It rambles on."),
                "m",
                1000,
                None,
            ));
        }
    }
    out
}

/// Samples of one model at several checkpoints plus two rival models.
pub fn checkpoint_fixture() -> Vec<Sample> {
    let mut out = strong_fixture(3, 2, 0);
    for c in 0..3 {
        for step in [100u64, 300, 500, 700, 900, 1000] {
            out.push(Sample::generated(
                format!("ck{step}-{c}"),
                format!("prompt {c}"),
                format!("Checkpoint {step} writes about {c}."),
                "m",
                step,
                Some(1000),
            ));
        }
        for model in ["alpha", "beta", "gamma"] {
            for k in 0..2 {
                out.push(Sample::generated(
                    format!("{model}-{c}-{k}"),
                    format!("prompt {c}"),
                    format!("{model} variant {k} on {c}."),
                    model,
                    1000,
                    None,
                ));
            }
        }
    }
    out
}

pub fn oracle(qualities: &[(&str, f64)]) -> JudgeSpec {
    let mut cfg = OracleJudgeConfig::new(qualities.iter().map(|(k, v)| (k.to_string(), *v)).collect());
    cfg.sample_noise = 0.1;
    cfg.tie_band = 0.05;
    cfg.flip_prob = 0.1;
    JudgeSpec {
        kind: JudgeKind::Oracle,
        allow_tie: true,
        decision_rule: DecisionRule::Argmax,
        oracle: Some(cfg),
        remote: None,
        scripted: None,
    }
}

pub fn scripted(labels: Vec<Label>) -> JudgeSpec {
    JudgeSpec {
        kind: JudgeKind::Scripted,
        allow_tie: true,
        decision_rule: DecisionRule::Argmax,
        oracle: None,
        remote: None,
        scripted: Some(ScriptedJudgeSpec { labels }),
    }
}

pub fn config_with(dir: &Path, samples: &[Sample], judge: Option<JudgeSpec>) -> RunConfig {
    let sample_path = dir.join("samples.jsonl");
    write_jsonl(&sample_path, samples);
    RunConfig {
        seed: 17,
        judge,
        paths: Paths {
            samples: Some(sample_path),
            out: Some(dir.join("out")),
            ..Default::default()
        },
        ..Default::default()
    }
}

pub fn read(path: PathBuf) -> Vec<u8> {
    std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}
