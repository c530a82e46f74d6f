//! Maximum-likelihood fit of the leave and return modules to session logs.

use std::collections::BTreeMap;

use super::config::SimConfig;
use crate::error::{Error, Result};
use crate::logs::LoggedSession;
use crate::mdp::UserGroup;

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    /// `base` with the fitted leave intercept/slope and return logits.
    pub config: SimConfig,
    /// Mean Bernoulli log-likelihood per logged request.
    pub leave_log_likelihood: f64,
    /// Mean log-likelihood per session with a known return gap.
    pub return_log_likelihood: f64,
    /// Users assigned to the high-activity group.
    pub high_active_users: usize,
}

/// Logistic regression of `y` on `[1, x]` by Newton iterations.
/// Returns `(intercept, slope, mean log-likelihood)`.
pub fn fit_logistic(x: &[f64], y: &[bool]) -> Result<(f64, f64, f64)> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::EmptyInput("leave observations"));
    }
    let (mut a, mut b) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let (mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&xi, &yi) in x.iter().zip(y) {
            let p = 1.0 / (1.0 + (-(a + b * xi)).exp());
            let r = f64::from(u8::from(yi)) - p;
            let w = p * (1.0 - p);
            g0 += r;
            g1 += r * xi;
            h00 += w;
            h01 += w * xi;
            h11 += w * xi * xi;
        }
        let det = h00 * h11 - h01 * h01;
        if !(det.abs() > 1e-12) {
            return Err(Error::InvalidConfig("leave fit is degenerate (no depth variation or separable data)".into()));
        }
        let da = (h11 * g0 - h01 * g1) / det;
        let db = (h00 * g1 - h01 * g0) / det;
        a += da;
        b += db;
        if da.abs() < 1e-10 && db.abs() < 1e-10 {
            break;
        }
    }
    let ll = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let z = a + b * xi;
            // log sigmoid(±z), computed stably
            let s = if yi { z } else { -z };
            -(1.0 + (-s).exp()).ln()
        })
        .sum::<f64>()
        / x.len() as f64;
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidConfig("leave fit diverged".into()));
    }
    Ok((a, b, ll))
}

/// Splits users in half by mean return gap: the shorter half is high-active.
fn assign_groups(sessions: &[LoggedSession]) -> BTreeMap<u64, UserGroup> {
    let mut per_user: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for s in sessions {
        let e = per_user.entry(s.user_id).or_insert((0.0, 0));
        if let Some(g) = s.return_gap_days {
            e.0 += g;
            e.1 += 1;
        }
    }
    let mut users: Vec<(u64, f64)> = per_user
        .into_iter()
        .map(|(u, (sum, n))| (u, if n > 0 { sum / n as f64 } else { f64::INFINITY }))
        .collect();
    users.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let n_high = users.len().div_ceil(2);
    users
        .into_iter()
        .enumerate()
        .map(|(i, (u, _))| (u, if i < n_high { UserGroup::HighActive } else { UserGroup::LowActive }))
        .collect()
}

/// Fits `leave.base` and `leave.depth_slope` (satisfaction is not logged, so
/// `satisfaction_slope` is kept) and per-group return logits equal to the
/// smoothed empirical return-day distribution at zero satisfaction.
pub fn calibrate_from_logs(sessions: &[LoggedSession], base: &SimConfig) -> Result<Calibration> {
    if sessions.is_empty() {
        return Err(Error::EmptyInput("session log"));
    }
    let mut depth = Vec::new();
    let mut left = Vec::new();
    for s in sessions {
        for k in 0..s.len() {
            depth.push((k + 1) as f64);
            left.push(k + 1 == s.len());
        }
    }
    let (intercept, slope, leave_ll) = fit_logistic(&depth, &left)?;

    let groups = assign_groups(sessions);
    let k_max = base.max_return_days;
    let mut config = base.clone();
    config.leave.base = intercept;
    config.leave.depth_slope = slope;
    let mut return_ll = 0.0;
    let mut labelled = 0usize;
    for group in UserGroup::ALL {
        let mut counts = vec![0.0; k_max];
        for s in sessions.iter().filter(|s| groups[&s.user_id] == group) {
            if let Some(g) = s.return_gap_days {
                let day = (g.round() as usize).clamp(1, k_max);
                counts[day - 1] += 1.0;
            }
        }
        let n: f64 = counts.iter().sum();
        if n == 0.0 {
            return Err(Error::EmptyInput("return gaps for an activity group"));
        }
        let probs: Vec<f64> = counts.iter().map(|c| (c + 0.5) / (n + 0.5 * k_max as f64)).collect();
        return_ll += counts.iter().zip(&probs).map(|(c, p)| c * p.ln()).sum::<f64>();
        labelled += n as usize;
        let offset = config.returns.offset(group);
        let logits: Vec<f64> = probs
            .iter()
            .enumerate()
            .map(|(k, p)| p.ln() - k as f64 * offset)
            .collect();
        match group {
            UserGroup::HighActive => config.returns.high_logits = logits,
            UserGroup::LowActive => config.returns.low_logits = logits,
        }
    }
    let high = groups.values().filter(|g| **g == UserGroup::HighActive).count();
    config.high_active_fraction = high as f64 / groups.len() as f64;
    config.validate()?;
    Ok(Calibration {
        config,
        leave_log_likelihood: leave_ll,
        return_log_likelihood: return_ll / labelled as f64,
        high_active_users: high,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simenv::return_day_distribution;

    fn session(user: u64, id: u64, len: usize, gap: Option<f64>) -> LoggedSession {
        LoggedSession {
            user_id: user,
            session_id: id,
            start_s: 0.0,
            watch_time_s: vec![1.0; len],
            interactions: vec![0; len],
            return_gap_days: gap,
        }
    }

    #[test]
    fn day_three_point_mass() {
        let sessions: Vec<_> = (0..400)
            .map(|i| session(i % 20, i / 20, 1 + (i as usize % 7), Some(3.0)))
            .collect();
        let fit = calibrate_from_logs(&sessions, &SimConfig::default()).unwrap();
        for group in UserGroup::ALL {
            let p = return_day_distribution(&fit.config, group, 0.0);
            assert!(p[2] > 0.95, "{group:?}: {p:?}");
        }
    }

    #[test]
    fn logistic_recovers_known_coefficients() {
        // deterministic design with exact expected frequencies
        let (a, b) = (-1.0, 0.3);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for d in 1..=10 {
            let p: f64 = 1.0 / (1.0 + (-(a + b * d as f64)).exp());
            let ones = (p * 10_000.0).round() as usize;
            for i in 0..10_000 {
                x.push(d as f64);
                y.push(i < ones);
            }
        }
        let (fa, fb, _) = fit_logistic(&x, &y).unwrap();
        assert!((fa - a).abs() < 1e-3 && (fb - b).abs() < 1e-3, "{fa} {fb}");
    }

    #[test]
    fn single_length_sessions_cannot_identify_the_slope() {
        let sessions: Vec<_> = (0..10).map(|i| session(i, 0, 1, Some(1.0))).collect();
        assert!(calibrate_from_logs(&sessions, &SimConfig::default()).is_err());
        assert!(calibrate_from_logs(&[], &SimConfig::default()).is_err());
    }
}
