//! TabNet encoder: sequential attentive feature selection with sparsemax
//! masks, a relaxation prior, and GLU feature transformers.

mod blocks;
mod config;
mod forward;
mod params;
mod sparsity;

pub use blocks::{
    attentive_transform, attentive_transform_backward, feature_transform, feature_transform_backward,
    update_prior, AttentionCache, FeatureCache,
};
pub(crate) use blocks::{glu_block_backward, glu_stack, BlockCache};
pub use config::EncoderConfig;
pub use forward::{
    encoder_backward, encoder_forward, encoder_forward_cached, EncoderCache, EncoderGrad, EncoderOutput,
    StepState,
};
pub(crate) use params::new_bn;
pub use params::{Parameters, StepParams, TabnetParams};
pub use sparsity::sparsity_loss;
