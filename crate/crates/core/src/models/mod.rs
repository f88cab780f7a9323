//! Trainable predictive models and the alpha-weighted empirical risk
//! trainer.
//!
//! All learners honor the weighted objective
//! `(1 - alpha) * R_s + alpha * R_t + Omega(theta)`: gradient models through
//! per-sample loss weights, trees and k-NN through per-sample weights in
//! their split criteria and votes.

mod feature;
mod forest;
mod knn;
mod linear;
mod matrix;
mod net;
mod params;
mod train;

pub use feature::{one_hot_view, split_view, training_labels, OneHotView, SplitView};
pub use forest::{ForestConfig, ForestModel};
pub use knn::{KnnConfig, KnnModel};
pub use linear::LinearModel;
pub use net::{
    infer as net_infer, initial_bn_states, loss_and_grad as net_loss_and_grad, sigmoid,
    trunk_features, BnState, HeadKind, HeadTargets, NetConfig, NetInputs,
};
pub use params::{ModelParams, ParamLayout, Segment};
pub use train::{
    gradient, predict, sample_weights, train, weighted_erm_loss, LearnerSpec, LinearConfig,
    MlpConfig, MlpModel, OptimizerConfig, RegularizerKind, RegularizerSpec, RiskValues,
    TrainConfig, TrainedModel,
};

