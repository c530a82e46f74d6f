//! Simulated short-video users: immediate feedback, session leave and
//! return-day modules, a two-group population and the episode loop.

mod calibrate;
mod config;
mod episode;
mod user;

pub use calibrate::{calibrate_from_logs, fit_logistic, Calibration};
pub use config::{
    channel, Carryover, FeedbackModel, LeaveCurve, ReturnCurve, SimConfig, TasteModel, AGE_BUCKETS, GENDERS,
    HISTORY_REQUESTS,
};
pub use episode::{reset, run_episode, EpisodeMetrics, EpisodeOutcome, FnPolicy, Policy, RequestContext};
pub use user::{leave_probability, return_day_distribution, softmax, EnvStep, SimUser};
