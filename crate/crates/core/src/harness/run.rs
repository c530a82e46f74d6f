use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::algorithms::{Algorithm, LossRow, Registry};
use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::seeding;
use crate::simenv::EpisodeMetrics;

/// One line of `metrics.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub episode: usize,
    pub avg_return_day: f64,
    pub day1_retention: f64,
    pub mean_immediate_reward: f64,
    pub sessions: usize,
}

impl EpisodeRow {
    pub fn new(episode: usize, m: &EpisodeMetrics) -> Self {
        Self {
            episode,
            avg_return_day: m.avg_return_day,
            day1_retention: m.day1_retention,
            mean_immediate_reward: m.mean_immediate_reward,
            sessions: m.sessions,
        }
    }
}

/// Final-window averages of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub algorithm: String,
    pub seed: u64,
    pub avg_returning_day: f64,
    pub day1_retention: f64,
    pub episodes: usize,
    pub wall_clock_s: f64,
}

impl ResultRow {
    /// Equality of everything except the wall-clock time.
    pub fn same_outcome(&self, other: &ResultRow) -> bool {
        self.algorithm == other.algorithm
            && self.seed == other.seed
            && self.episodes == other.episodes
            && self.avg_returning_day.to_bits() == other.avg_returning_day.to_bits()
            && self.day1_retention.to_bits() == other.day1_retention.to_bits()
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub row: ResultRow,
    pub episodes: Vec<EpisodeRow>,
}

/// Seed of training episode `episode` of a run.
pub fn train_env_seed(seed: u64, episode: usize) -> u64 {
    seeding::derive(seed, "train-env", episode as u64)
}

/// Seed of evaluation episode `episode`; independent of the run seed so all
/// runs are scored on the same users.
pub fn eval_env_seed(eval_seed: u64, episode: usize) -> u64 {
    seeding::derive(eval_seed, "eval-env", episode as u64)
}

/// Averages the last `window` episodes.
pub fn window_average(rows: &[EpisodeRow], window: usize) -> (f64, f64) {
    let tail = &rows[rows.len().saturating_sub(window)..];
    let n = tail.len().max(1) as f64;
    (
        tail.iter().map(|r| r.avg_return_day).sum::<f64>() / n,
        tail.iter().map(|r| r.day1_retention).sum::<f64>() / n,
    )
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_metrics_csv(path: &Path, rows: &[EpisodeRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

struct LossLog {
    writer: csv::Writer<fs::File>,
}

impl LossLog {
    fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(header)?;
        Ok(Self { writer })
    }

    fn append(&mut self, rows: &[LossRow]) -> Result<()> {
        for r in rows {
            let mut rec = vec![r.step.to_string()];
            rec.extend(r.values.iter().map(|v| v.map_or(String::new(), |x| x.to_string())));
            self.writer.write_record(&rec)?;
        }
        Ok(())
    }
}

/// Trains `config.algorithm` for `config.episodes` episodes, evaluating the
/// greedy policy after each, and averages the final window.
///
/// With an output directory the run writes `config.toml`, `metrics.csv`,
/// `losses.csv` and `checkpoint.txt`; a failed run leaves a `diagnostics/`
/// bundle with the error, the offending minibatch and the last parameters.
pub fn run(config: &ExperimentConfig, registry: &Registry) -> Result<RunReport> {
    config.validate()?;
    let mut config = config.clone();
    config.algorithm = registry.canonical(&config.algorithm)?.to_string();
    let mut alg = registry.create(&config)?;
    let out = config.resolved_output_dir();
    let mut loss_log = None;
    if let Some(dir) = &out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_text(&dir.join("config.toml"), &config.to_toml()?)?;
        loss_log = Some(LossLog::create(&dir.join("losses.csv"), &alg.loss_header())?);
    }

    let start = Instant::now();
    let mut rows = Vec::with_capacity(config.episodes);
    for ep in 0..config.episodes {
        let step = train_and_evaluate(alg.as_mut(), &config, ep);
        if let Some(log) = &mut loss_log {
            log.append(&alg.drain_losses())?;
        } else {
            alg.drain_losses();
        }
        match step {
            Ok(m) => {
                log::info!(
                    "{} seed {} episode {ep}: avg return day {:.4}, day-1 retention {:.4}",
                    config.algorithm,
                    config.seed,
                    m.avg_return_day,
                    m.day1_retention
                );
                rows.push(EpisodeRow::new(ep, &m));
            }
            Err(e) => {
                if let Some(dir) = &out {
                    write_metrics_csv(&dir.join("metrics.csv"), &rows)?;
                    write_diagnostics(&dir.join("diagnostics"), alg.as_mut(), ep, &e)?;
                }
                return Err(e);
            }
        }
    }
    let (avg, d1) = window_average(&rows, config.eval_window);
    let row = ResultRow {
        algorithm: config.algorithm.clone(),
        seed: config.seed,
        avg_returning_day: avg,
        day1_retention: d1,
        episodes: config.episodes,
        wall_clock_s: start.elapsed().as_secs_f64(),
    };
    if let Some(dir) = &out {
        write_metrics_csv(&dir.join("metrics.csv"), &rows)?;
        if config.checkpoint {
            alg.checkpoint().save(&dir.join("checkpoint.txt"))?;
        }
        write_text(&dir.join("result.json"), &serde_json::to_string_pretty(&row)?)?;
    }
    Ok(RunReport { row, episodes: rows })
}

fn train_and_evaluate(alg: &mut dyn Algorithm, config: &ExperimentConfig, ep: usize) -> Result<EpisodeMetrics> {
    alg.train_episode(&config.sim, train_env_seed(config.seed, ep))?;
    alg.evaluate(&config.sim, eval_env_seed(config.eval_seed, ep))
}

fn write_diagnostics(dir: &Path, alg: &mut dyn Algorithm, episode: usize, err: &Error) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_text(&dir.join("error.txt"), &format!("episode {episode}: {err}\n"))?;
    if let Some(batch) = alg.take_failed_batch() {
        write_text(&dir.join("failed_batch.json"), &serde_json::to_string(&batch)?)?;
    }
    alg.checkpoint().save(&dir.join("checkpoint.txt"))
}
