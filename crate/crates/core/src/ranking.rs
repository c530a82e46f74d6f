//! Linear ensemble ranking and top-k slate selection.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::mdp::CandidateVideo;

pub const DEFAULT_SLATE_SIZE: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct Slate {
    pub video_ids: Vec<u64>,
    pub ranking_scores: Vec<f64>,
    /// Positions of the chosen videos in the candidate list.
    pub positions: Vec<usize>,
}

/// `sum_k weights[k] * scores[k]`.
pub fn ranking_score(weights: &[f64], candidate: &CandidateVideo) -> Result<f64> {
    if weights.len() != candidate.scores.len() {
        return Err(Error::DimensionMismatch {
            context: "ranking score",
            expected: weights.len(),
            got: candidate.scores.len(),
        });
    }
    Ok(weights
        .iter()
        .zip(&candidate.scores)
        .map(|(a, x)| a * x)
        .sum())
}

/// The `k` highest-scoring candidates, ties broken by ascending video id.
pub fn select_slate(weights: &[f64], candidates: &[CandidateVideo], k: usize) -> Result<Slate> {
    if candidates.len() < k {
        return Err(Error::InsufficientSamples {
            requested: k,
            available: candidates.len(),
        });
    }
    let mut scored = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| ranking_score(weights, c).map(|s| (s, c.video_id, i)))
        .collect::<Result<Vec<_>>>()?;
    let order = |a: &(f64, u64, usize), b: &(f64, u64, usize)| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.cmp(&b.1))
    };
    if k < scored.len() && k > 0 {
        scored.select_nth_unstable_by(k - 1, order);
        scored.truncate(k);
    }
    scored.sort_unstable_by(order);
    scored.truncate(k);
    Ok(Slate {
        video_ids: scored.iter().map(|s| s.1).collect(),
        ranking_scores: scored.iter().map(|s| s.0).collect(),
        positions: scored.iter().map(|s| s.2).collect(),
    })
}
