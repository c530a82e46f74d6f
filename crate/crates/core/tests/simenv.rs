use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rlur::mdp::{ActionVector, UserGroup};
use rlur::simenv::{leave_probability, reset, run_episode, FnPolicy, SimConfig, SimUser};

fn constant(values: Vec<f64>) -> ActionVector {
    ActionVector::constant(values, 0.1)
}

/// One finished session of a user driven directly, without the day loop.
struct Session {
    group: UserGroup,
    requests: usize,
    returning_time: f64,
    satisfaction: f64,
}

fn simulate_sessions<F>(cfg: &SimConfig, seed: u64, per_user: usize, mut action: F) -> Vec<Session>
where
    F: FnMut(&mut SimUser) -> ActionVector,
{
    let mut out = Vec::new();
    for mut user in reset(cfg, seed).unwrap() {
        for _ in 0..per_user {
            user.open_session(cfg);
            let mut requests = 0;
            loop {
                let a = action(&mut user);
                let step = user.step(&a, cfg).unwrap();
                requests += 1;
                assert_eq!(step.session_ended, step.returning_time.is_some());
                if let Some(t) = step.returning_time {
                    out.push(Session {
                        group: user.group,
                        requests,
                        returning_time: t,
                        satisfaction: step.satisfaction,
                    });
                    break;
                }
            }
        }
    }
    out
}

fn short_sessions() -> SimConfig {
    let mut cfg = SimConfig::default();
    cfg.leave.base = 6.0;
    cfg.leave.depth_slope = 0.0;
    cfg.leave.satisfaction_slope = 0.0;
    cfg
}

#[test]
fn population_split_is_exact() {
    let cfg = SimConfig::default();
    let users = reset(&cfg, 1).unwrap();
    assert_eq!(users.len(), 100);
    assert_eq!(users.iter().filter(|u| u.group == UserGroup::HighActive).count(), 50);
    let odd = SimConfig {
        population: 7,
        ..SimConfig::default()
    };
    assert_eq!(reset(&odd, 1).unwrap().iter().filter(|u| u.group == UserGroup::HighActive).count(), 4);
    let none = SimConfig {
        high_active_fraction: 0.0,
        ..SimConfig::default()
    };
    assert!(reset(&none, 2).unwrap().iter().all(|u| u.group == UserGroup::LowActive));
    for u in &users {
        assert!(u.interest.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn population_is_a_function_of_the_seed() {
    let cfg = SimConfig::default();
    let key = |seed| {
        reset(&cfg, seed)
            .unwrap()
            .into_iter()
            .map(|u| (u.group, u.age, u.gender, u.interest, u.taste))
            .collect::<Vec<_>>()
    };
    assert_eq!(key(5), key(5));
    assert_ne!(key(5), key(6));
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = [
        SimConfig {
            max_return_days: 0,
            ..SimConfig::default()
        },
        SimConfig {
            candidates_per_request: 3,
            slate_size: 6,
            ..SimConfig::default()
        },
        SimConfig {
            high_active_fraction: 1.5,
            ..SimConfig::default()
        },
    ];
    for cfg in bad {
        assert!(reset(&cfg, 0).is_err());
    }
}

#[test]
fn stepping_a_closed_session_fails() {
    let cfg = short_sessions();
    let mut user = reset(&cfg, 3).unwrap().remove(0);
    let a = constant(vec![1.0; cfg.num_scores]);
    assert!(user.step(&a, &cfg).is_err());
    user.open_session(&cfg);
    while !user.step(&a, &cfg).unwrap().session_ended {}
    assert!(user.step(&a, &cfg).is_err());
}

#[test]
fn degenerate_leave_curve_ignores_depth_and_satisfaction() {
    let mut cfg = SimConfig::default();
    cfg.leave.depth_slope = 0.0;
    cfg.leave.satisfaction_slope = 0.0;
    let p = 1.0 / (1.0 + (-cfg.leave.base).exp());
    for depth in [1, 5, 50] {
        for s in [-3.0, 0.0, 3.0] {
            assert_eq!(leave_probability(&cfg, depth, s), p);
        }
    }
    // geometric session lengths with that leave probability, for any actions
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let sessions = simulate_sessions(&cfg, 4, 40, |_| {
        constant((0..8).map(|_| rng.random_range(0.0..4.0)).collect())
    });
    let mean = sessions.iter().map(|s| s.requests as f64).sum::<f64>() / sessions.len() as f64;
    assert!((mean - 1.0 / p).abs() < 0.05 / p, "mean length {mean}, expected {}", 1.0 / p);
}

fn softmax_mean(logits: &[f64], tilt: f64) -> f64 {
    let w: Vec<f64> = logits.iter().enumerate().map(|(k, l)| (l + k as f64 * tilt).exp()).collect();
    let z: f64 = w.iter().sum();
    w.iter().enumerate().map(|(k, x)| (k + 1) as f64 * x / z).sum()
}

#[test]
fn return_days_match_the_softmax_mean_without_satisfaction() {
    let mut cfg = short_sessions();
    cfg.returns.satisfaction_weight = 0.0;
    cfg.population = 1000;
    let sessions = simulate_sessions(&cfg, 5, 100, |_| constant(vec![2.0; 8]));
    assert!(sessions.len() >= 100_000);
    for group in UserGroup::ALL {
        let days: Vec<f64> = sessions
            .iter()
            .filter(|s| s.group == group)
            .map(|s| s.returning_time)
            .collect();
        let mean = days.iter().sum::<f64>() / days.len() as f64;
        let expected = softmax_mean(cfg.returns.logits(group), cfg.returns.offset(group));
        assert!((mean - expected).abs() < 0.02 * expected, "{group:?}: {mean} vs {expected}");
    }
    assert!(sessions
        .iter()
        .all(|s| s.returning_time >= 1.0 && s.returning_time <= 10.0 && s.returning_time.fract() == 0.0));
}

fn decile_means(sessions: &mut [Session]) -> (f64, f64) {
    sessions.sort_by(|a, b| a.satisfaction.total_cmp(&b.satisfaction));
    let n = sessions.len() / 10;
    let mean = |s: &[Session]| s.iter().map(|x| x.returning_time).sum::<f64>() / s.len() as f64;
    (mean(&sessions[..n]), mean(&sessions[sessions.len() - n..]))
}

#[test]
fn satisfied_sessions_return_sooner() {
    let cfg = SimConfig {
        population: 1000,
        ..SimConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut sessions = simulate_sessions(&cfg, 6, 100, |_| {
        constant((0..8).map(|_| rng.random_range(0.0..4.0)).collect())
    });
    assert!(sessions.len() >= 100_000);
    assert!(sessions.iter().all(|s| s.requests >= 1));
    let (low, high) = decile_means(&mut sessions);
    assert!(high < low, "top decile {high}, bottom decile {low}");
}

#[test]
fn stronger_satisfaction_weight_never_delays_satisfied_users() {
    let base = SimConfig {
        population: 500,
        ..SimConfig::default()
    };
    let mut stronger = base.clone();
    stronger.returns.satisfaction_weight *= 2.0;
    let policy = |u: &mut SimUser| constant(u.taste.iter().map(|t| 2.0 + t).collect());
    let a = simulate_sessions(&base, 7, 20, policy);
    let b = simulate_sessions(&stronger, 7, 20, policy);
    assert_eq!(a.len(), b.len());
    let (mut sum_a, mut sum_b, mut n) = (0.0, 0.0, 0);
    for (x, y) in a.iter().zip(&b) {
        // the return draw does not feed back into the user's random stream
        assert_eq!(x.satisfaction, y.satisfaction);
        if x.satisfaction > 0.0 {
            assert!(y.returning_time <= x.returning_time);
            sum_a += x.returning_time;
            sum_b += y.returning_time;
            n += 1;
        }
    }
    assert!(n > 100);
    assert!(sum_b <= sum_a);
}

#[test]
fn informative_ranking_beats_uninformative_ranking_on_satisfaction() {
    for seed in 0..5 {
        let cfg = SimConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let random = simulate_sessions(&cfg, seed, 10, |_| {
            constant((0..8).map(|_| rng.random_range(0.0..4.0)).collect())
        });
        let zero = simulate_sessions(&cfg, seed, 10, |_| constant(vec![0.0; 8]));
        let mean = |s: &[Session]| s.iter().map(|x| x.satisfaction).sum::<f64>() / s.len() as f64;
        assert!(mean(&random) >= mean(&zero), "seed {seed}: {} < {}", mean(&random), mean(&zero));
    }
}

#[test]
fn forced_next_day_returns_give_perfect_metrics() {
    let mut cfg = SimConfig::default();
    cfg.leave.base = 50.0;
    cfg.leave.depth_slope = 0.0;
    cfg.leave.satisfaction_slope = 0.0;
    cfg.returns.satisfaction_weight = 0.0;
    cfg.returns.high_offset = 0.0;
    cfg.returns.low_offset = 0.0;
    let mut forced = vec![-60.0; cfg.max_return_days];
    forced[0] = 60.0;
    cfg.returns.high_logits = forced.clone();
    cfg.returns.low_logits = forced;
    let out = run_episode(&mut FnPolicy(|_: &_, _: &_| constant(vec![1.0; 8])), &cfg, 8).unwrap();
    assert_eq!(out.metrics.avg_return_day, 1.0);
    assert_eq!(out.metrics.day1_retention, 1.0);
    // every user opens one single-request session per day
    assert_eq!(out.metrics.sessions, cfg.population * cfg.episode_days);
    assert_eq!(out.metrics.requests, out.metrics.sessions);
}

#[test]
fn episodes_are_reproducible_and_clip_out_of_range_actions() {
    let cfg = SimConfig {
        population: 30,
        ..SimConfig::default()
    };
    let run = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut policy = FnPolicy(move |_: &_, _: &_| constant((0..8).map(|_| rng.random_range(-1.0..5.0)).collect()));
        run_episode(&mut policy, &cfg, seed).unwrap()
    };
    let (a, b) = (run(10), run(10));
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.sessions, b.sessions);
    assert!(a.metrics.clipped_actions > 0);
    assert_ne!(run(11).metrics, a.metrics);
    let days: f64 = a.sessions.iter().map(|s| s.returning_time.unwrap()).sum();
    assert_eq!(a.metrics.avg_return_day, days / a.sessions.len() as f64);
    assert!(a.sessions.iter().all(|s| !s.requests.is_empty()));
}
