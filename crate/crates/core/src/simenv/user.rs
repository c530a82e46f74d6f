//! A simulated user: immediate-feedback, leave and return modules.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::{channel, SimConfig, AGE_BUCKETS, GENDERS, HISTORY_REQUESTS};
use crate::error::{Error, Result};
use crate::mdp::{ActionVector, CandidateVideo, ImmediateFeedback, UserGroup, UserState};
use crate::ranking::select_slate;

/// Liked and disliked channels per (group, age bucket).
const ARCHETYPES: [[([usize; 2], [usize; 2]); AGE_BUCKETS]; 2] = [
    [
        ([channel::WATCH, channel::LIKE], [channel::LONGVIEW, channel::COMMENT]),
        ([channel::LONGVIEW, channel::PROFILE], [channel::WATCH, channel::FORWARD]),
        ([channel::FORWARD, channel::COMMENT], [channel::LIKE, channel::PROFILE]),
    ],
    [
        ([channel::LONGVIEW, channel::COMMENT], [channel::WATCH, channel::LIKE]),
        ([channel::WATCH, channel::FORWARD], [channel::PROFILE, channel::COMMENT]),
        ([channel::LIKE, channel::PROFILE], [channel::LONGVIEW, channel::FORWARD]),
    ],
];
const GENDER_CHANNEL: [usize; GENDERS] = [channel::LIKE, channel::LONGVIEW];

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Probability of returning on day `k = 1..=K`.
pub fn return_day_distribution(cfg: &SimConfig, group: UserGroup, satisfaction: f64) -> Vec<f64> {
    let tilt = cfg.returns.offset(group) - cfg.returns.satisfaction_weight * satisfaction;
    let logits: Vec<f64> = cfg
        .returns
        .logits(group)
        .iter()
        .enumerate()
        .map(|(k, l)| l + k as f64 * tilt)
        .collect();
    softmax(&logits)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn leave_probability(cfg: &SimConfig, depth: usize, satisfaction: f64) -> f64 {
    logistic(
        cfg.leave.base + depth as f64 * cfg.leave.depth_slope
            - satisfaction * cfg.leave.satisfaction_slope,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub feedback: ImmediateFeedback,
    pub next_state: UserState,
    pub session_ended: bool,
    /// Present iff `session_ended`.
    pub returning_time: Option<f64>,
    /// Session satisfaction after this request.
    pub satisfaction: f64,
}

#[derive(Debug, Clone)]
pub struct SimUser {
    pub user_id: u64,
    pub group: UserGroup,
    pub age: usize,
    pub gender: usize,
    /// Per-channel propensity bias, each in `[0, 1]`.
    pub interest: Vec<f64>,
    /// Per-channel utility weights the user actually responds to.
    pub taste: Vec<f64>,
    pub satisfaction: f64,
    pub base_return_logits: Vec<f64>,
    pub fatigue: f64,
    pub attachment: f64,
    history: VecDeque<(f64, f64)>,
    session_open: bool,
    depth: usize,
    time_of_day: f64,
    candidates: Vec<CandidateVideo>,
    next_video: u64,
    session_shortview: f64,
    session_videos: usize,
    session_follow: f64,
    rng: ChaCha8Rng,
}

impl SimUser {
    pub fn new(user_id: u64, group: UserGroup, cfg: &SimConfig, mut rng: ChaCha8Rng) -> Self {
        let age = rng.random_range(0..AGE_BUCKETS);
        let gender = rng.random_range(0..GENDERS);
        let interest = (0..cfg.num_scores)
            .map(|_| rng.random_range(0.3..0.7))
            .collect();
        let gi = match group {
            UserGroup::HighActive => 0,
            UserGroup::LowActive => 1,
        };
        let tm = &cfg.tastes;
        let mut taste = vec![tm.base; cfg.num_scores];
        taste[channel::SHORTVIEW] = 0.0;
        let (liked, disliked) = ARCHETYPES[gi][age];
        for c in liked {
            taste[c] += tm.liked;
        }
        for c in disliked {
            taste[c] += tm.disliked;
        }
        taste[GENDER_CHANNEL[gender]] += tm.gender;
        for (k, t) in taste.iter_mut().enumerate() {
            if k != channel::SHORTVIEW && tm.jitter > 0.0 {
                *t += rng.random_range(-tm.jitter..tm.jitter);
            }
        }
        let mut user = Self {
            user_id,
            group,
            age,
            gender,
            interest,
            taste,
            satisfaction: 0.0,
            base_return_logits: cfg.returns.logits(group).to_vec(),
            fatigue: 0.0,
            attachment: 0.0,
            history: VecDeque::from(vec![(0.0, 0.0); HISTORY_REQUESTS]),
            session_open: false,
            depth: 1,
            time_of_day: 0.0,
            candidates: Vec::new(),
            next_video: 0,
            session_shortview: 0.0,
            session_videos: 0,
            session_follow: 0.0,
            rng,
        };
        user.prepare_opening(cfg);
        user
    }

    pub fn session_open(&self) -> bool {
        self.session_open
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn candidates(&self) -> &[CandidateVideo] {
        &self.candidates
    }

    /// Engagement of a candidate for this user, in `[0, 1]`: the taste-weighted
    /// score rescaled so the worst possible candidate maps to 0 and the best to 1.
    pub fn engagement(&self, scores: &[f64]) -> f64 {
        let total: f64 = self.taste.iter().map(|t| t.abs()).sum();
        if total <= 0.0 {
            return 0.0;
        }
        let floor: f64 = self.taste.iter().filter(|t| **t < 0.0).sum();
        (self.taste.iter().zip(scores).map(|(t, x)| t * x).sum::<f64>() - floor) / total
    }

    fn generate_candidates(&mut self, cfg: &SimConfig) {
        let noise = cfg.feedback.candidate_noise;
        self.candidates.clear();
        for _ in 0..cfg.candidates_per_request {
            let scores = self
                .interest
                .iter()
                .map(|&b| {
                    let z: f64 = StandardNormal.sample(&mut self.rng);
                    (b + noise * z).clamp(0.0, 1.0)
                })
                .collect();
            self.candidates.push(CandidateVideo {
                video_id: (self.user_id << 32) | self.next_video,
                scores,
            });
            self.next_video += 1;
        }
    }

    /// Draws the context and candidates of the next session's first request.
    fn prepare_opening(&mut self, cfg: &SimConfig) {
        self.depth = 1;
        self.time_of_day = self.rng.random_range(0.0..1.0);
        self.generate_candidates(cfg);
    }

    pub fn state(&self) -> UserState {
        let mut profile = vec![0.0; 1 + AGE_BUCKETS + GENDERS];
        profile[0] = self.group.flag();
        profile[1 + self.age] = 1.0;
        profile[1 + AGE_BUCKETS + self.gender] = 1.0;

        let mut history = Vec::with_capacity(2 * HISTORY_REQUESTS + 2);
        for &(interactions, watch) in &self.history {
            history.push(interactions / 6.0);
            history.push(watch / 60.0);
        }
        history.push(self.fatigue);
        history.push(self.attachment);

        let n = self.interest.len();
        let mut mean = vec![0.0; n];
        let mut max = vec![0.0f64; n];
        for c in &self.candidates {
            for (k, &x) in c.scores.iter().enumerate() {
                mean[k] += x;
                max[k] = max[k].max(x);
            }
        }
        let m = self.candidates.len().max(1) as f64;
        mean.iter_mut().for_each(|v| *v /= m);
        mean.extend(max);

        UserState {
            profile,
            history,
            context: vec![self.depth as f64, self.time_of_day],
            candidate_summary: mean,
        }
    }

    /// Starts a session; satisfaction restarts from the carried-over baseline.
    pub fn open_session(&mut self, cfg: &SimConfig) -> UserState {
        let c = &cfg.carryover;
        let bound = cfg.feedback.max_satisfaction;
        self.satisfaction = (c.attachment_bonus * self.attachment - c.fatigue_penalty * self.fatigue)
            .clamp(-bound, bound);
        self.session_open = true;
        self.session_shortview = 0.0;
        self.session_videos = 0;
        self.session_follow = 0.0;
        self.state()
    }

    pub fn step(&mut self, action: &ActionVector, cfg: &SimConfig) -> Result<EnvStep> {
        if !self.session_open {
            return Err(Error::SessionClosed(self.user_id));
        }
        let slate = select_slate(&action.values, &self.candidates, cfg.slate_size)?;
        let f = &cfg.feedback;
        let mut feedback = ImmediateFeedback::default();
        for &pos in &slate.positions {
            let scores = &self.candidates[pos].scores;
            let e = self.engagement(scores);
            let z: f64 = StandardNormal.sample(&mut self.rng);
            let watch = (f.watch_base_s.ln() + f.watch_alignment * (e - f.reference_engagement)
                + f.watch_sigma * z)
                .exp();
            feedback.watch_time_s += watch;
            for &c in &channel::INTERACTIONS {
                let p = (f.interaction_rate * scores[c] * 2.0 * e).clamp(0.0, 1.0);
                if self.rng.random_bool(p) {
                    feedback.interactions += 1;
                }
            }
            let shortview = scores[channel::SHORTVIEW];
            let inc = (f.satisfaction_gain * (e - f.reference_engagement)
                + f.shortview_thrill * (shortview - 0.5))
                .clamp(-f.max_increment, f.max_increment);
            self.satisfaction =
                (self.satisfaction + inc).clamp(-f.max_satisfaction, f.max_satisfaction);
            self.session_shortview += shortview;
            self.session_follow += scores[channel::FOLLOW];
            self.session_videos += 1;
        }
        self.history.pop_front();
        self.history
            .push_back((f64::from(feedback.interactions), feedback.watch_time_s));

        let p_leave = leave_probability(cfg, self.depth, self.satisfaction);
        if self.rng.random_bool(p_leave) {
            let probs = return_day_distribution(cfg, self.group, self.satisfaction);
            let u: f64 = self.rng.random_range(0.0..1.0);
            let mut acc = 0.0;
            let mut day = probs.len();
            for (k, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    day = k + 1;
                    break;
                }
            }
            let c = &cfg.carryover;
            let videos = self.session_videos.max(1) as f64;
            let mean_shortview = self.session_shortview / videos;
            let mean_follow = self.session_follow / videos;
            self.fatigue =
                c.fatigue_decay * self.fatigue + c.fatigue_gain * (mean_shortview - 0.5).max(0.0);
            self.attachment =
                c.attachment_decay * self.attachment + c.attachment_gain * (mean_follow - 0.5);
            self.session_open = false;
            let satisfaction = self.satisfaction;
            self.prepare_opening(cfg);
            Ok(EnvStep {
                feedback,
                next_state: self.state(),
                session_ended: true,
                returning_time: Some(day as f64),
                satisfaction,
            })
        } else {
            self.depth += 1;
            self.time_of_day = (self.time_of_day + 0.003).fract();
            self.generate_candidates(cfg);
            Ok(EnvStep {
                feedback,
                next_state: self.state(),
                session_ended: false,
                returning_time: None,
                satisfaction: self.satisfaction,
            })
        }
    }
}
