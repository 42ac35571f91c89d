//! The trainable fluency/prosody scorer and its optimizer.

pub mod adam;
pub mod attention;
pub mod checkpoint;
pub mod lstm;
pub mod model;
pub mod params;

pub use adam::{Adam, AdamConfig};
pub use attention::cross_attention;
pub use model::{
    batch_loss, cross_entropy, loss, FeatureScaler, Labels, LossWeights, ModelInput, ScoreDistribution,
    ScoringModel,
};
pub use params::{ModelDims, Params, NUM_CLASSES};
