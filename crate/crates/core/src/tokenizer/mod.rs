//! Trajectory tokenizer: a convolutional VQ-VAE.

mod codebook;
mod model;
mod train;

pub use codebook::{nearest_ids, quantize, Codebook, TrajTokenSeq};
pub use model::{
    vq_terms, Normalizer, StopGradients, TokenizerConfig, TokenizerLoss, TokenizerModel, CHECKPOINT_KIND, DOWNSAMPLE, FEATURES,
};
pub use train::{codebook_usage, reconstruction_translation_mse, train_tokenizer, EpochLog, TokenizerTrainLog};
