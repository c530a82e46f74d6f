//! Experiment runner: configs, the algorithm registry, single runs,
//! multi-seed comparisons and the toy-MDP value check.

mod algorithms;
mod compare;
mod config;
mod run;
mod toy;

pub use algorithms::{normalize_name, Algorithm, CemAlgorithm, Factory, LossRow, Registry, RlurAlgorithm, Td3Algorithm};
pub use compare::{compare, ordering_violations, summarize, write_comparison, Comparison, FailedRun, SummaryRow};
pub use config::{ExperimentConfig, OUTPUT_ROOT_ENV};
pub use run::{
    eval_env_seed, run, train_env_seed, window_average, write_metrics_csv, EpisodeRow, ResultRow, RunReport,
};
pub use toy::{toy_layout, toy_mdp_check, toy_state, toy_transitions, ToyReport, TOY_T1, TOY_T2, TOY_TOLERANCE};
