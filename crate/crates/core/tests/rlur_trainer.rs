mod common;

use common::random_samples;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rlur::approx::Checkpoint;
use rlur::mdp::{TransitionSample, UserGroup};
use rlur::rlur::{
    classifier_batch_loss, critic_values, encode_state, rnd_intrinsic, rnd_loss, ReturnClassifier, RlurHyper,
    RlurTrainer, RndPair, TrainBatch, Variant,
};
use rlur::rollout::Rollout;
use rlur::simenv::{run_episode, SimConfig};

fn sim() -> SimConfig {
    SimConfig {
        population: 20,
        ..Default::default()
    }
}

fn trainer(variant: Variant, hyper: RlurHyper, seed: u64) -> RlurTrainer {
    let s = sim();
    RlurTrainer::new(variant, hyper, s.state_layout(), s.num_scores, s.action_max, seed).unwrap()
}

fn small_hyper() -> RlurHyper {
    RlurHyper {
        batch_size: 32,
        min_fill: 64,
        train_every: 4,
        ..Default::default()
    }
}

fn batch_of(samples: &[TransitionSample]) -> TrainBatch {
    let refs: Vec<&TransitionSample> = samples.iter().collect();
    TrainBatch::from_samples(&refs)
}

fn params(ck: &Checkpoint, prefix: &str) -> Vec<u64> {
    ck.tensors()
        .iter()
        .filter(|t| t.name.starts_with(prefix))
        .flat_map(|t| t.data.iter().map(|v| v.to_bits()))
        .collect()
}

#[test]
fn greedy_action_is_the_mean_and_samples_stay_in_the_box() {
    let mut t = trainer(Variant::Full, RlurHyper::default(), 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let layout = sim().state_layout();
    for i in 0..50 {
        let s = common::random_state(&mut rng, layout);
        let g = if i % 2 == 0 { UserGroup::HighActive } else { UserGroup::LowActive };
        let greedy = t.act(&s, g, false).unwrap();
        assert_eq!(greedy.values, greedy.behavior_mu);
        let noisy = t.act(&s, g, true).unwrap();
        assert!(noisy.values.iter().all(|v| (0.0..=4.0).contains(v)));
        assert_eq!(noisy.behavior_mu, greedy.behavior_mu);
        assert!(noisy.behavior_sigma.iter().all(|&v| v > 0.0));
    }
}

#[test]
fn vanishing_sigma_samples_the_mean() {
    let hyper = RlurHyper {
        sigma_init: 1.0001e-3,
        sigma_floor: 1e-3,
        ..Default::default()
    };
    let mut t = trainer(Variant::Naive, hyper, 3);
    let s = common::random_state(&mut ChaCha8Rng::seed_from_u64(4), sim().state_layout());
    let a = t.act(&s, UserGroup::LowActive, true).unwrap();
    for (v, m) in a.values.iter().zip(&a.behavior_mu) {
        assert!((v - m).abs() < 0.01);
    }
}

#[test]
fn each_group_reads_only_its_own_actor() {
    let mut t = trainer(Variant::Full, RlurHyper::default(), 5);
    let s = common::random_state(&mut ChaCha8Rng::seed_from_u64(6), sim().state_layout());
    let high = t.act(&s, UserGroup::HighActive, false).unwrap();
    let low = t.act(&s, UserGroup::LowActive, false).unwrap();
    for p in t.actors_mut()[1].inner.net.params_mut() {
        *p += 0.3;
    }
    assert_eq!(t.act(&s, UserGroup::HighActive, false).unwrap(), high);
    assert_ne!(t.act(&s, UserGroup::LowActive, false).unwrap(), low);
    for p in t.actors_mut()[0].inner.net.params_mut() {
        *p -= 0.3;
    }
    assert_ne!(t.act(&s, UserGroup::HighActive, false).unwrap(), high);
}

#[test]
fn updating_one_actor_leaves_the_other_bitwise_unchanged() {
    let mut t = trainer(Variant::Full, RlurHyper::default(), 7);
    let layout = sim().state_layout();
    let samples = random_samples(&mut ChaCha8Rng::seed_from_u64(8), layout, 8, 40);
    let batch = batch_of(&samples);
    let high = batch.select(&batch.group_rows(UserGroup::HighActive));
    let low = batch.select(&batch.group_rows(UserGroup::LowActive));
    let before = t.to_checkpoint();
    t.actor_update(0, &high).unwrap();
    let mid = t.to_checkpoint();
    assert_eq!(params(&before, "actor_low"), params(&mid, "actor_low"));
    assert_ne!(params(&before, "actor_high"), params(&mid, "actor_high"));
    t.actor_update(1, &low).unwrap();
    let after = t.to_checkpoint();
    assert_eq!(params(&mid, "actor_high"), params(&after, "actor_high"));
    assert_ne!(params(&mid, "actor_low"), params(&after, "actor_low"));
}

#[test]
fn mixed_batch_targets_follow_the_per_sample_discount() {
    let hyper = RlurHyper {
        gamma: 0.9,
        ..Default::default()
    };
    for variant in [Variant::Full, Variant::Naive] {
        let t = trainer(variant, hyper.clone(), 9);
        let samples = random_samples(&mut ChaCha8Rng::seed_from_u64(10), sim().state_layout(), 8, 30);
        let batch = batch_of(&samples);
        let means = t.policy_means(batch.next_states.view(), &batch.groups).unwrap();
        let next_q = critic_values(t.retention_critic().target.net(), batch.next_states.view(), means.view()).unwrap();
        let targets = t.retention_td_targets(&batch).unwrap();
        for (i, s) in samples.iter().enumerate() {
            let expected = if s.terminal {
                s.retention_reward + 0.9 * next_q[i]
            } else {
                next_q[i]
            };
            assert_eq!(targets[i], expected, "sample {i}");
        }
    }
}

#[test]
fn bootstrap_uses_the_sample_groups_actor() {
    let t = trainer(Variant::Full, RlurHyper::default(), 11);
    let samples = random_samples(&mut ChaCha8Rng::seed_from_u64(12), sim().state_layout(), 8, 6);
    let batch = batch_of(&samples);
    let means = t.policy_means(batch.next_states.view(), &batch.groups).unwrap();
    for (i, s) in samples.iter().enumerate() {
        let actor = &t.actors()[t.actor_index(s.user_group)];
        let (mu, _) = actor.mean_sigma(&encode_state(&s.next_state)).unwrap();
        for (a, b) in mu.iter().zip(means.row(i)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn myopic_immediate_critic_regresses_to_the_reward() {
    let hyper = RlurHyper {
        gamma: 0.0,
        critic_lr: 3e-3,
        ..Default::default()
    };
    let mut t = trainer(Variant::Full, hyper, 13);
    let samples = random_samples(&mut ChaCha8Rng::seed_from_u64(14), sim().state_layout(), 8, 32);
    let batch = batch_of(&samples);
    let targets = t.immediate_td_targets(&batch).unwrap();
    let intrinsic = t.intrinsic_rewards(batch.history.view()).unwrap();
    for i in 0..batch.len() {
        let expected = batch.immediate[i] * t.hyper().immediate_scale + intrinsic[i];
        assert!((targets[i] - expected).abs() < 1e-12);
    }
    let q_i = t.immediate_critic_mut().unwrap();
    for _ in 0..3000 {
        q_i.fit(batch.states.view(), batch.actions.view(), &targets, "immediate critic")
            .unwrap();
    }
    let fitted = q_i.values(batch.states.view(), batch.actions.view()).unwrap();
    let mse = fitted.iter().zip(&targets).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / targets.len() as f64;
    assert!(mse < 1e-3, "mse {mse}");
}

#[test]
fn retention_only_actor_descends_the_retention_critic() {
    let hyper = RlurHyper {
        lambda_i: 0.0,
        actor_lr: 1e-3,
        ..Default::default()
    };
    let mut t = trainer(Variant::Full, hyper, 15);
    let samples = random_samples(&mut ChaCha8Rng::seed_from_u64(16), sim().state_layout(), 8, 64);
    let probe = batch_of(&samples).select(&batch_of(&samples).group_rows(UserGroup::HighActive));
    let q_at_mean = |t: &RlurTrainer| {
        let means = t.actors()[0].means(probe.states.view()).unwrap();
        let q = t.retention_critic().values(probe.states.view(), means.view()).unwrap();
        q.iter().sum::<f64>() / q.len() as f64
    };
    let start = q_at_mean(&t);
    for _ in 0..500 {
        t.actor_update(0, &probe).unwrap();
    }
    let end = q_at_mean(&t);
    assert!(end < start, "Q_T at the mean action went from {start} to {end}");
}

fn warm_run(t: &mut RlurTrainer, seed: u64) -> Vec<rlur::rlur::StepLosses> {
    run_episode(&mut Rollout::training(t), &sim(), seed).unwrap();
    t.drain_losses()
}

#[test]
fn zero_learning_rates_leave_parameters_unchanged() {
    let hyper = RlurHyper {
        critic_lr: 0.0,
        actor_lr: 0.0,
        ..small_hyper()
    };
    let mut t = trainer(Variant::Full, hyper, 17);
    let before = t.to_checkpoint();
    let losses = warm_run(&mut t, 18);
    assert!(losses.len() > 10);
    assert!(losses.iter().any(|l| l.loss_cls.is_some()));
    let after = t.to_checkpoint();
    // target copies are re-averaged with an identical source, which can move the last bit
    for name in before.names() {
        let (a, b) = (&before.get(name).unwrap().data, &after.get(name).unwrap().data);
        if name.contains("target") {
            assert!(a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(1.0)), "{name}");
        } else {
            assert_eq!(a, b, "{name}");
        }
    }
}

#[test]
fn identical_seeds_give_identical_loss_traces() {
    for variant in [Variant::Full, Variant::Naive] {
        let mut a = trainer(variant, small_hyper(), 19);
        let mut b = trainer(variant, small_hyper(), 19);
        let la = warm_run(&mut a, 20);
        let lb = warm_run(&mut b, 20);
        assert!(!la.is_empty());
        assert_eq!(la, lb);
        assert_eq!(a.to_checkpoint().to_text(), b.to_checkpoint().to_text());
    }
}

#[test]
fn checkpoint_round_trip_restores_behavior() {
    let mut a = trainer(Variant::Full, small_hyper(), 21);
    warm_run(&mut a, 22);
    let mut b = trainer(Variant::Full, small_hyper(), 99);
    b.load_checkpoint(&Checkpoint::parse(&a.to_checkpoint().to_text()).unwrap())
        .unwrap();
    assert_eq!(a.t_beta(), b.t_beta());
    let s = common::random_state(&mut ChaCha8Rng::seed_from_u64(23), sim().state_layout());
    for g in UserGroup::ALL {
        assert_eq!(a.act(&s, g, false).unwrap(), b.act(&s, g, false).unwrap());
    }
}

#[test]
fn naive_trainer_builds_only_the_retention_parts() {
    let hyper = RlurHyper {
        reward_normalization: false,
        ..small_hyper()
    };
    let mut t = trainer(Variant::Naive, hyper, 24);
    assert!(t.immediate_critic().is_none() && t.rnd().is_none() && t.classifier().is_none());
    assert_eq!(t.actors().len(), 1);
    let losses = warm_run(&mut t, 25);
    assert!(losses.iter().all(|l| l.loss_i.is_none() && l.loss_rnd.is_none() && l.loss_cls.is_none()));
    assert!(losses.iter().all(|l| l.mean_w == Some(1.0)));
    // raw days on terminal samples
    for s in t.buffer().samples().filter(|s| s.terminal) {
        assert_eq!(Some(s.retention_reward), s.returning_time);
    }
}

#[test]
fn normalized_rewards_stay_within_the_clip() {
    let mut t = trainer(Variant::Full, small_hyper(), 26);
    warm_run(&mut t, 27);
    let alpha = t.hyper().alpha;
    let terminal: Vec<f64> = t
        .buffer()
        .samples()
        .filter(|s| s.terminal)
        .map(|s| s.retention_reward)
        .collect();
    assert!(!terminal.is_empty());
    assert!(terminal.iter().all(|r| (0.0..=alpha).contains(r)));
    assert!(t.t_beta().unwrap() >= 1.0);
}

#[test]
fn shuffled_labels_are_not_learnable() {
    let layout = sim().state_layout();
    let dim = rlur::rlur::session_feature_dim(layout.profile);
    let mut rng = ChaCha8Rng::seed_from_u64(28);
    let mut cls = ReturnClassifier::new(dim, &[64, 64], 1e-3, &mut rng).unwrap();
    let draw = |rng: &mut ChaCha8Rng, n: usize| {
        let x = ndarray::Array2::from_shape_fn((n, dim), |_| rng.random_range(0.0..1.0));
        let y: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random_bool(0.5)))).collect();
        (x, y)
    };
    for _ in 0..2000 {
        let (x, y) = draw(&mut rng, 64);
        let (_, g) = classifier_batch_loss(&cls.inner.net, x.view(), &y).unwrap();
        cls.inner.apply(&g, "classifier").unwrap();
    }
    let (x, y) = draw(&mut rng, 4000);
    let (loss, _) = classifier_batch_loss(&cls.inner.net, x.view(), &y).unwrap();
    assert!(loss >= std::f64::consts::LN_2 - 0.05, "held-out loss {loss}");
    for i in 0..100 {
        let p = cls.predict(x.row(i).as_slice().unwrap()).unwrap();
        assert!(p > 0.0 && p < 1.0);
    }
}

#[test]
fn novelty_on_a_trained_point_does_not_increase() {
    let mut a = ChaCha8Rng::seed_from_u64(29);
    let mut b = ChaCha8Rng::seed_from_u64(30);
    let hd = sim().state_layout().history;
    let mut rnd = RndPair::new(hd, &[64, 64], 16, 1e-4, &mut a, &mut b).unwrap();
    let u = ndarray::Array2::from_shape_fn((1, hd), |(_, j)| 0.1 * j as f64);
    let fixed = rnd.fixed.clone();
    let mut prev = rnd_intrinsic(&rnd.trainable.net, &fixed, u.view()).unwrap()[0];
    let first = prev;
    for step in 0..1000 {
        let (_, g) = rnd_loss(&rnd.trainable.net, &fixed, u.view()).unwrap();
        rnd.trainable.apply(&g, "novelty").unwrap();
        let now = rnd_intrinsic(&rnd.trainable.net, &fixed, u.view()).unwrap()[0];
        assert!(now <= prev + 1e-9 * first, "step {step}: {prev} -> {now}");
        prev = now;
    }
    assert_eq!(rnd.fixed, fixed);
    assert!(prev < 0.5 * first, "{first} -> {prev}");
}
