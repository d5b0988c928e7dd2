//! The RaGSECo network: relation-aware embedding learning on the interaction
//! graph, propagation over the similarity graphs, three pair views with
//! co-contrastive supervision, fusion and the softmax decoder.

mod config;
mod contrastive;
mod network;
mod params;

pub use config::{HyperParams, Variant};
pub use contrastive::{
    contrastive_losses, cosine, discriminator_scores, interaction_characteristics, pair_characteristics,
    select_contrastive_pairs, ContrastivePairs,
};
pub use network::{
    fuse_pair, mixup, ragsel_forward, ragsep_forward, Bound, GraphInputs, LossTerms, MixPlan, Model, ModelDims,
    PairViews,
};
pub use params::{xavier, Checkpoint, ParamStore};

/// `λ · L_ce + ℓ_ss1 + ℓ_ss2`.
pub fn total_loss(ce: f64, ss1: f64, ss2: f64, lambda: f64) -> f64 {
    lambda * ce + ss1 + ss2
}
