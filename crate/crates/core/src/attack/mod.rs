//! Membership inference: user features, labeled data generation, the MLP
//! attack model and the unsupervised and aggregation baselines.

mod dataset;
mod features;
mod kmeans;
mod mlp;

pub use dataset::{
    generate_labeled_dataset, restore_held_out, serve_profiles, AttackDataset, LabeledFeature, NonMemberPath,
    Provenance, RecSource, UserProfile,
};
pub use features::{
    baseline_feature, center_vector, make_weights, method_feature, user_feature, vectorize_items, FeatureMethod,
    WeightScheme,
};
pub use kmeans::{kmeans_attack, KMeansOutcome};
pub use mlp::{infer_membership, train_mlp, AttackMlp, MlpTrainConfig};

use crate::metrics::auc;
use crate::{Error, Result};

/// Train an attack model on a shadow dataset.
pub fn train_attack(shadow: &AttackDataset, cfg: &MlpTrainConfig) -> Result<AttackMlp> {
    if shadow.provenance != Provenance::ShadowTrain {
        return Err(Error::config("attack models are trained on shadow data only"));
    }
    train_mlp(&shadow.as_pairs(), cfg)
}

/// `(P(member), is_member)` for every sample.
pub fn score_dataset(model: &AttackMlp, data: &AttackDataset) -> Result<Vec<(f64, bool)>> {
    data.samples
        .iter()
        .map(|s| infer_membership(model, &s.z).map(|(_, b)| (b, s.member)))
        .collect()
}

/// AUC of `model` on labeled target data.
pub fn attack_auc(model: &AttackMlp, target: &AttackDataset) -> Result<f64> {
    auc(&score_dataset(model, target)?)
}

/// AUC of the K-Means baseline on labeled target data.
pub fn kmeans_auc(target: &AttackDataset, seed_value: u64) -> Result<f64> {
    let out = kmeans_attack(&target.features(), seed_value)?;
    let pairs: Vec<(f64, bool)> = out
        .scores
        .into_iter()
        .zip(target.samples.iter().map(|s| s.member))
        .collect();
    auc(&pairs)
}
