pub mod approx;
pub mod baselines;
pub mod error;
pub mod harness;
pub mod logs;
pub mod mdp;
pub mod ranking;
pub mod replay;
pub mod rlur;
pub mod rollout;
pub mod seeding;
pub mod simenv;

pub use error::{Error, Result};
