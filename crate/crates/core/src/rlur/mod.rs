//! Retention-oriented actor-critic trainer: a retention critic with the
//! session-aware discount, an immediate critic with novelty bonuses, a
//! returning-time classifier for reward normalization, one actor per activity
//! group and a density-ratio weight on the actor loss.

mod batch;
mod features;
mod hyper;
mod losses;
mod nets;
mod returns;
mod trainer;

pub use batch::TrainBatch;
pub use features::{encode_state, encode_state_into, session_feature_dim, session_features, DEPTH_SCALE};
pub use hyper::RlurHyper;
pub use losses::{
    actor_loss, classifier_batch_loss, classifier_loss, critic_input, critic_values, immediate_targets, mse_loss,
    normalized_retention_reward, percentile_t_beta, retention_targets, rnd_intrinsic, rnd_loss,
    short_return_label, soft_reg_weight, CriticTerm, SoftRegDirection, CLASSIFIER_EPS,
};
pub use nets::{Critic, GaussianActor, Learnable, ReturnClassifier, RndPair};
pub use returns::ReturnWindow;
pub use trainer::{RlurTrainer, StepLosses, Variant};
