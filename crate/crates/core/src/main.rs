use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rlur::harness::{
    compare, ordering_violations, run, toy_mdp_check, write_comparison, ExperimentConfig, Registry, OUTPUT_ROOT_ENV,
};
use rlur::logs::read_session_log;
use rlur::simenv::calibrate_from_logs;
use rlur::{Error, Result};

#[derive(Parser)]
#[command(name = "rlur", version, about = "Retention-oriented ranking-weight learning on a simulated user population")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one algorithm with one seed.
    Train(RunArgs),
    /// Train several algorithms over several seeds and summarize.
    Compare(CompareArgs),
    /// Fit the retention critic on the two-session toy MDP.
    ToyCheck {
        #[arg(long, value_delimiter = ',', default_value = "0,0.9,0.95")]
        gamma: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fit leave and return curves to a session log and print the overrides.
    Calibrate {
        /// CSV with header user_id,session_id,request_idx,timestamp_s,watch_time_s,interactions,return_gap_days
        logs: PathBuf,
        /// Base config whose `sim` section the fit overrides.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the calibrated experiment config here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

/// Flags shared by `train` and `compare`. Precedence: defaults, then the
/// config file, then `--set`, then the dedicated flags.
#[derive(Args)]
struct CommonArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `dotted.key=value` override, e.g. `rlur.gamma=0.9`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    eval_window: Option<usize>,
    #[arg(long)]
    eval_seed: Option<u64>,
    #[arg(long)]
    population: Option<usize>,
    /// Output directory (defaults under the output root).
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long, env = OUTPUT_ROOT_ENV)]
    output_root: Option<PathBuf>,
}

impl CommonArgs {
    fn build(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        for o in &self.overrides {
            cfg.set(o)?;
        }
        if let Some(v) = self.episodes {
            cfg.episodes = v;
        }
        if let Some(v) = self.eval_window {
            cfg.eval_window = v;
        }
        if let Some(v) = self.eval_seed {
            cfg.eval_seed = v;
        }
        if let Some(v) = self.population {
            cfg.sim.population = v;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    algorithm: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_delimiter = ',', default_value = "cem,td3,rlur-naive-g0,rlur-naive-g09,rlur")]
    algorithms: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    seeds: Vec<u64>,
    /// Exit with the acceptance code unless the returning-day ordering holds.
    #[arg(long)]
    check_ordering: bool,
}

fn train(args: RunArgs, registry: &Registry) -> Result<()> {
    let mut cfg = args.common.build()?;
    if let Some(a) = args.algorithm {
        cfg.algorithm = a;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.algorithm = registry.canonical(&cfg.algorithm)?.to_string();
    cfg.output_dir = args.common.output_dir.clone().or_else(|| {
        args.common
            .output_root
            .as_ref()
            .map(|r| r.join(format!("{}-seed{}", cfg.algorithm, cfg.seed)))
    });
    let report = run(&cfg, registry)?;
    println!("{}", serde_json::to_string_pretty(&report.row)?);
    Ok(())
}

fn compare_cmd(args: CompareArgs, registry: &Registry) -> Result<()> {
    let base = args.common.build()?;
    let root = args.common.output_dir.clone().or(args.common.output_root.clone());
    let mut configs = Vec::new();
    for alg in &args.algorithms {
        let name = registry.canonical(alg)?;
        for &seed in &args.seeds {
            let mut c = base.clone();
            c.algorithm = name.to_string();
            c.seed = seed;
            c.output_dir = root.as_ref().map(|r| r.join(format!("{name}-seed{seed}")));
            configs.push(c);
        }
    }
    let cmp = compare(&configs, registry)?;
    if let Some(r) = &root {
        write_comparison(r, &cmp)?;
    }
    for s in &cmp.summary {
        println!(
            "{:<16} runs {}  returning day {:.4} ± {:.4} (rank {})  day-1 retention {:.4} ± {:.4} (rank {})",
            s.algorithm,
            s.runs,
            s.avg_returning_day_mean,
            s.avg_returning_day_std,
            s.rank_returning_day,
            s.day1_retention_mean,
            s.day1_retention_std,
            s.rank_day1_retention
        );
    }
    if cmp.partial {
        eprintln!("partial table: {} run(s) failed", cmp.failures.len());
    }
    if args.check_ordering {
        let v = ordering_violations(&cmp);
        if !v.is_empty() {
            return Err(Error::AcceptanceFailed(v.join("; ")));
        }
    }
    Ok(())
}

fn toy_check(gammas: &[f64], seed: u64) -> Result<()> {
    let mut failed = Vec::new();
    for &g in gammas {
        if !(0.0..1.0).contains(&g) {
            return Err(Error::InvalidConfig(format!("gamma must be in [0, 1), got {g}")));
        }
        let r = toy_mdp_check(g, seed)?;
        println!(
            "gamma {:.2}: Q_T {:.5}, expected {:.5}, {} steps: {}",
            r.gamma,
            r.estimate,
            r.expected,
            r.steps,
            if r.passed { "PASS" } else { "FAIL" }
        );
        if !r.passed {
            failed.push(g.to_string());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::AcceptanceFailed(format!("toy MDP off for gamma {}", failed.join(", "))))
    }
}

fn calibrate(logs: PathBuf, config: Option<PathBuf>, output: Option<PathBuf>) -> Result<()> {
    let mut cfg = match config {
        Some(p) => ExperimentConfig::load(&p)?,
        None => ExperimentConfig::default(),
    };
    let sessions = read_session_log(&logs)?;
    let fit = calibrate_from_logs(&sessions, &cfg.sim)?;
    eprintln!(
        "leave log-likelihood {:.4} per request, return log-likelihood {:.4} per session",
        fit.leave_log_likelihood, fit.return_log_likelihood
    );
    cfg.sim = fit.config;
    let text = cfg.to_toml()?;
    match output {
        Some(p) => std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let registry = Registry::builtin();
    let result = match cli.command {
        Command::Train(a) => train(a, &registry),
        Command::Compare(a) => compare_cmd(a, &registry),
        Command::ToyCheck { gamma, seed } => toy_check(&gamma, seed),
        Command::Calibrate { logs, config, output } => calibrate(logs, config, output),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
