use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::algorithms::Registry;
use super::config::ExperimentConfig;
use super::run::{run, ResultRow};
use crate::error::{Error, Result};

/// Per-algorithm aggregate over seeds. Ranks are 1-based; rank 1 is the
/// shortest returning day and the highest day-1 retention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub runs: usize,
    pub avg_returning_day_mean: f64,
    pub avg_returning_day_std: f64,
    pub day1_retention_mean: f64,
    pub day1_retention_std: f64,
    pub rank_returning_day: usize,
    pub rank_day1_retention: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRun {
    pub algorithm: String,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    pub failures: Vec<FailedRun>,
    /// Set when any run failed; the summary then covers the surviving runs.
    pub partial: bool,
}

impl Comparison {
    pub fn summary_for(&self, algorithm: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|s| s.algorithm == algorithm)
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// 1-based ranks of `values` (ascending when `lower_is_better`); ties keep
/// input order.
fn ranks(values: &[f64], lower_is_better: bool) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let o = values[a].total_cmp(&values[b]);
        if lower_is_better {
            o
        } else {
            o.reverse()
        }
    });
    let mut out = vec![0; values.len()];
    for (rank, i) in order.into_iter().enumerate() {
        out[i] = rank + 1;
    }
    out
}

/// Groups rows by algorithm (first-appearance order) and ranks the groups.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut names: Vec<&str> = Vec::new();
    for r in rows {
        if !names.contains(&r.algorithm.as_str()) {
            names.push(&r.algorithm);
        }
    }
    let mut summary: Vec<SummaryRow> = names
        .iter()
        .map(|name| {
            let group: Vec<&ResultRow> = rows.iter().filter(|r| r.algorithm == *name).collect();
            let ret: Vec<f64> = group.iter().map(|r| r.avg_returning_day).collect();
            let d1: Vec<f64> = group.iter().map(|r| r.day1_retention).collect();
            let (rm, rs) = mean_std(&ret);
            let (dm, ds) = mean_std(&d1);
            SummaryRow {
                algorithm: name.to_string(),
                runs: group.len(),
                avg_returning_day_mean: rm,
                avg_returning_day_std: rs,
                day1_retention_mean: dm,
                day1_retention_std: ds,
                rank_returning_day: 0,
                rank_day1_retention: 0,
            }
        })
        .collect();
    let r1 = ranks(&summary.iter().map(|s| s.avg_returning_day_mean).collect::<Vec<_>>(), true);
    let r2 = ranks(&summary.iter().map(|s| s.day1_retention_mean).collect::<Vec<_>>(), false);
    for (i, s) in summary.iter_mut().enumerate() {
        s.rank_returning_day = r1[i];
        s.rank_day1_retention = r2[i];
    }
    summary
}

/// Runs every config in order. A failed run is recorded and the comparison
/// continues; the result is then flagged partial.
pub fn compare(configs: &[ExperimentConfig], registry: &Registry) -> Result<Comparison> {
    if configs.len() < 2 {
        return Err(Error::InvalidConfig("a comparison needs at least two runs".into()));
    }
    for c in configs {
        c.validate()?;
        registry.canonical(&c.algorithm)?;
    }
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for c in configs {
        match run(c, registry) {
            Ok(report) => {
                log::info!(
                    "{} seed {}: {:.4} days, day-1 retention {:.4} ({:.0}s)",
                    report.row.algorithm,
                    report.row.seed,
                    report.row.avg_returning_day,
                    report.row.day1_retention,
                    report.row.wall_clock_s
                );
                rows.push(report.row);
            }
            Err(e) => {
                log::error!("{} seed {} failed: {e}", c.algorithm, c.seed);
                failures.push(FailedRun {
                    algorithm: registry.canonical(&c.algorithm)?.to_string(),
                    seed: c.seed,
                    error: e.to_string(),
                });
            }
        }
    }
    Ok(Comparison {
        summary: summarize(&rows),
        partial: !failures.is_empty(),
        rows,
        failures,
    })
}

/// Writes `results.csv` (one row per run) and `summary.json`.
pub fn write_comparison(dir: &Path, cmp: &Comparison) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("results.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for r in &cmp.rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    let path = dir.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(cmp)?).map_err(|e| Error::io(&path, e))
}

/// The qualitative ordering on mean returning day: RLUR first, naive γ=0.9
/// ahead of naive γ=0, TD3 ahead of CEM. Returns the violated relations.
pub fn ordering_violations(cmp: &Comparison) -> Vec<String> {
    let get = |n: &str| cmp.summary_for(n).map(|s| s.avg_returning_day_mean);
    let pairs = [
        ("rlur", "rlur-naive-g09"),
        ("rlur-naive-g09", "rlur-naive-g0"),
        ("rlur", "td3"),
        ("td3", "cem"),
    ];
    let mut out = Vec::new();
    for (better, worse) in pairs {
        match (get(better), get(worse)) {
            (Some(a), Some(b)) if a < b => {}
            (Some(a), Some(b)) => out.push(format!("{better} ({a:.4}) is not below {worse} ({b:.4})")),
            _ => out.push(format!("missing {better} or {worse}")),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(alg: &str, seed: u64, ret: f64, d1: f64) -> ResultRow {
        ResultRow {
            algorithm: alg.into(),
            seed,
            avg_returning_day: ret,
            day1_retention: d1,
            episodes: 1,
            wall_clock_s: 0.0,
        }
    }

    #[test]
    fn groups_and_ranks() {
        let rows = vec![
            row("cem", 1, 2.0, 0.4),
            row("rlur", 1, 1.8, 0.5),
            row("cem", 2, 2.2, 0.4),
            row("rlur", 2, 1.8, 0.6),
        ];
        let s = summarize(&rows);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].algorithm, "cem");
        assert_eq!(s[0].runs, 2);
        assert!((s[0].avg_returning_day_mean - 2.1).abs() < 1e-12);
        assert!((s[0].avg_returning_day_std - 0.02f64.sqrt()).abs() < 1e-12);
        assert_eq!(s[1].avg_returning_day_std, 0.0);
        assert_eq!((s[0].rank_returning_day, s[1].rank_returning_day), (2, 1));
        assert_eq!((s[0].rank_day1_retention, s[1].rank_day1_retention), (2, 1));
    }

    #[test]
    fn ranking_is_a_function_of_rows() {
        let rows = vec![row("a", 1, 1.0, 0.1), row("b", 1, 1.0, 0.1), row("c", 1, 0.5, 0.9)];
        assert_eq!(summarize(&rows), summarize(&rows));
        let s = summarize(&rows);
        assert_eq!(s.iter().map(|r| r.rank_returning_day).collect::<Vec<_>>(), [2, 3, 1]);
    }

    #[test]
    fn needs_two_configs() {
        let r = Registry::builtin();
        assert!(compare(&[ExperimentConfig::default()], &r).is_err());
    }

    #[test]
    fn ordering_check_reports_violations() {
        let names = ["cem", "td3", "rlur-naive-g0", "rlur-naive-g09", "rlur"];
        let good: Vec<ResultRow> = names
            .iter()
            .zip([2.1, 2.0, 1.99, 1.95, 1.9])
            .map(|(n, v)| row(n, 1, v, 0.5))
            .collect();
        let cmp = Comparison {
            summary: summarize(&good),
            rows: good,
            failures: vec![],
            partial: false,
        };
        assert!(ordering_violations(&cmp).is_empty());
        let mut bad = cmp.clone();
        bad.summary[1].avg_returning_day_mean = 2.2;
        assert_eq!(ordering_violations(&bad).len(), 1);
    }
}
