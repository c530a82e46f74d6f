use std::path::Path;
use std::process::Command;

use rlur::approx::Checkpoint;
use rlur::harness::{compare, run, Algorithm, ExperimentConfig, LossRow, Registry};
use rlur::mdp::{ActionVector, TransitionSample};
use rlur::simenv::{run_episode, EpisodeMetrics, FnPolicy, SimConfig};
use rlur::{Error, Result};

/// A few short episodes with training switched on early.
fn quick(algorithm: &str, seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig {
        algorithm: algorithm.into(),
        seed,
        episodes: 3,
        eval_window: 2,
        ..Default::default()
    };
    c.sim.population = 12;
    c.rlur.min_fill = 64;
    c.rlur.batch_size = 32;
    c.td3.min_fill = 64;
    c.td3.batch_size = 32;
    c.cem.population = 4;
    c
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn every_builtin_runs_and_repeats_bitwise() {
    let registry = Registry::builtin();
    let dir = tempfile::tempdir().unwrap();
    for name in registry.names() {
        let mut a = quick(name, 3);
        a.output_dir = Some(dir.path().join(format!("{name}-a")));
        let mut b = a.clone();
        b.output_dir = Some(dir.path().join(format!("{name}-b")));
        let ra = run(&a, &registry).unwrap();
        let rb = run(&b, &registry).unwrap();
        assert!(ra.row.same_outcome(&rb.row), "{name}");
        assert_eq!(ra.episodes.len(), 3);
        let (da, db) = (a.output_dir.unwrap(), b.output_dir.unwrap());
        assert_eq!(read(&da.join("metrics.csv")), read(&db.join("metrics.csv")), "{name}");
        assert_eq!(read(&da.join("losses.csv")), read(&db.join("losses.csv")), "{name}");
        assert_eq!(read(&da.join("checkpoint.txt")), read(&db.join("checkpoint.txt")), "{name}");
        let snapshot = ExperimentConfig::load(&da.join("config.toml")).unwrap();
        assert_eq!(snapshot.algorithm, name);
        assert!(Checkpoint::load(&da.join("checkpoint.txt")).is_ok());
        assert!(read(&da.join("metrics.csv")).starts_with("episode,avg_return_day,day1_retention"));
    }
}

#[test]
fn result_row_averages_the_final_window() {
    let registry = Registry::builtin();
    let mut c = quick("cem", 4);
    c.eval_window = 3;
    let r = run(&c, &registry).unwrap();
    let mean = r.episodes.iter().map(|e| e.avg_return_day).sum::<f64>() / 3.0;
    assert!((r.row.avg_returning_day - mean).abs() < 1e-12);
    c.eval_window = 1;
    let r = run(&c, &registry).unwrap();
    assert_eq!(r.row.avg_returning_day, r.episodes[2].avg_return_day);
}

#[test]
fn different_seeds_train_differently() {
    let registry = Registry::builtin();
    let a = run(&quick("td3", 1), &registry).unwrap();
    let b = run(&quick("td3", 2), &registry).unwrap();
    assert!(!a.row.same_outcome(&b.row));
}

#[test]
fn comparison_summarizes_each_algorithm_once() {
    let registry = Registry::builtin();
    let mut configs = Vec::new();
    for name in registry.names() {
        for seed in [1, 2] {
            let mut c = quick(name, seed);
            c.episodes = 1;
            c.eval_window = 1;
            configs.push(c);
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let cmp = compare(&configs, &registry).unwrap();
    assert_eq!(cmp.rows.len(), 10);
    assert_eq!(cmp.summary.len(), 5);
    assert!(!cmp.partial);
    let algs: Vec<&str> = cmp.summary.iter().map(|s| s.algorithm.as_str()).collect();
    assert_eq!(algs, registry.names());
    let mut ranks: Vec<usize> = cmp.summary.iter().map(|s| s.rank_returning_day).collect();
    ranks.sort_unstable();
    assert_eq!(ranks, vec![1, 2, 3, 4, 5]);
    for s in &cmp.summary {
        assert_eq!(s.runs, 2);
    }
    rlur::harness::write_comparison(dir.path(), &cmp).unwrap();
    assert_eq!(read(&dir.path().join("results.csv")).lines().count(), 11);
    assert!(compare(&configs[..1], &registry).is_err());
}

#[test]
fn bad_configs_fail_before_training() {
    let registry = Registry::builtin();
    let mut c = quick("rlur", 1);
    c.eval_window = 4;
    assert!(matches!(run(&c, &registry), Err(Error::InvalidConfig(_))));
    let mut c = quick("rlur", 1);
    c.rlur.gamma = 1.0;
    assert!(matches!(run(&c, &registry), Err(Error::InvalidConfig(_))));
    let c = quick("sac", 1);
    assert!(matches!(run(&c, &registry), Err(Error::UnknownAlgorithm(_))));
    assert!(ExperimentConfig::from_toml("episodes = \"many\"").is_err());
    assert!(ExperimentConfig::from_toml("no_such_field = 1").is_err());
    let mut c = ExperimentConfig::default();
    assert!(c.set("rlur.no_such_field=1").is_err());
    assert!(c.set("rlur.gamma").is_err());
    c.set("rlur.gamma=0.5").unwrap();
    assert_eq!(c.rlur.gamma, 0.5);
    // names are matched case- and separator-insensitively
    assert_eq!(registry.canonical("RLUR_Naive_G09").unwrap(), "rlur-naive-g09");
}

/// Trains nothing and blows up in its second episode.
struct Exploding {
    episodes: usize,
}

impl Algorithm for Exploding {
    fn name(&self) -> &str {
        "exploding"
    }

    fn train_episode(&mut self, _sim: &SimConfig, _seed: u64) -> Result<()> {
        self.episodes += 1;
        if self.episodes == 2 {
            return Err(Error::GradientBlowUp("test critic loss".into()));
        }
        Ok(())
    }

    fn evaluate(&mut self, sim: &SimConfig, seed: u64) -> Result<EpisodeMetrics> {
        let mut p = FnPolicy(|_: &_, _: &_| ActionVector::constant(vec![1.0; sim.num_scores], 0.1));
        Ok(run_episode(&mut p, sim, seed)?.metrics)
    }

    fn loss_header(&self) -> Vec<&'static str> {
        vec!["step", "loss"]
    }

    fn drain_losses(&mut self) -> Vec<LossRow> {
        vec![LossRow {
            step: self.episodes as u64,
            values: vec![Some(0.5)],
        }]
    }

    fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.push("episodes", vec![1], vec![self.episodes as f64]);
        ck
    }

    fn take_failed_batch(&mut self) -> Option<Vec<TransitionSample>> {
        Some(Vec::new())
    }
}

#[test]
fn registered_strategy_failure_leaves_a_diagnostics_bundle() {
    let mut registry = Registry::builtin();
    registry.register("exploding", |_| Ok(Box::new(Exploding { episodes: 0 })));
    assert_eq!(registry.names().len(), 6);
    let dir = tempfile::tempdir().unwrap();
    let mut c = quick("exploding", 1);
    c.output_dir = Some(dir.path().to_path_buf());
    let err = run(&c, &registry).unwrap_err();
    assert!(matches!(err, Error::GradientBlowUp(_)));
    assert_eq!(err.exit_code(), 3);
    let diag = dir.path().join("diagnostics");
    assert!(read(&diag.join("error.txt")).starts_with("episode 1:"));
    assert_eq!(read(&diag.join("failed_batch.json")), "[]");
    assert!(Checkpoint::load(&diag.join("checkpoint.txt")).is_ok());
    // the episode that finished is still on disk
    assert_eq!(read(&dir.path().join("metrics.csv")).lines().count(), 2);

    // a comparison records the failure and keeps going
    let mut ok = quick("cem", 1);
    ok.episodes = 1;
    ok.eval_window = 1;
    let cmp = compare(&[quick("exploding", 1), ok], &registry).unwrap();
    assert!(cmp.partial);
    assert_eq!(cmp.failures.len(), 1);
    assert_eq!(cmp.rows.len(), 1);
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_rlur"))
        .args(args)
        .env_remove("RLUR_OUTPUT_ROOT")
        .output()
        .unwrap()
}

#[test]
fn cli_reports_errors_through_exit_codes() {
    let out = cli(&["train", "--algorithm", "nope"]);
    assert_eq!(out.status.code(), Some(2));
    let out = cli(&["train", "--set", "rlur.gamma=1.5"]);
    assert_eq!(out.status.code(), Some(2));
    let out = cli(&["train", "--episodes", "2", "--eval-window", "5"]);
    assert_eq!(out.status.code(), Some(2));
    let out = cli(&["toy-check", "--gamma", "1.0"]);
    assert_eq!(out.status.code(), Some(2));
    let out = cli(&["train", "--config", "/nonexistent/config.toml"]);
    assert_eq!(out.status.code(), Some(1));
    let out = cli(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cli_trains_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("quick.toml");
    std::fs::write(&cfg, quick("td3", 5).to_toml().unwrap()).unwrap();
    let out_dir = dir.path().join("run");
    let out = cli(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--episodes",
        "2",
        "--eval-window",
        "1",
        "--output-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let row: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(row["algorithm"], "td3");
    assert_eq!(row["episodes"], 2);
    for f in ["config.toml", "metrics.csv", "losses.csv", "checkpoint.txt", "result.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }

    let out = cli(&["toy-check", "--gamma", "0.9"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));
}
