//! Paired image/text encoders projecting into a shared embedding space.

mod checkpoint;
mod linalg;
mod toy;

pub use self::checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, ClassifierMeta, ParamShape, CHECKPOINT_MAGIC,
};
pub use self::linalg::Matrix;
pub use self::toy::{ToyEncoder, IMAGE_FEATURES, TEXT_BUCKETS, TEXT_FEATURES};

use std::path::PathBuf;

use image::DynamicImage;

/// Environment variable naming the checkpoint directory.
pub const MODEL_DIR_ENV: &str = "MAPSTORY_MODEL_DIR";

#[derive(Debug, thiserror::Error)]
pub enum EncoderError {
    #[error("text to encode is empty")]
    EmptyText,
    #[error("encoder failure: {0}")]
    Failure(String),
}

/// Embeddings are returned unnormalized; callers normalize as needed.
pub trait VisionTextEncoder: Send + Sync {
    fn name(&self) -> &str;
    fn embed_dim(&self) -> usize;
    fn encode_image(&self, image: &DynamicImage) -> Result<Vec<f32>, EncoderError>;
    fn encode_text(&self, text: &str) -> Result<Vec<f32>, EncoderError>;
}

impl<T: VisionTextEncoder + ?Sized> VisionTextEncoder for std::sync::Arc<T> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn embed_dim(&self) -> usize {
        (**self).embed_dim()
    }
    fn encode_image(&self, image: &DynamicImage) -> Result<Vec<f32>, EncoderError> {
        (**self).encode_image(image)
    }
    fn encode_text(&self, text: &str) -> Result<Vec<f32>, EncoderError> {
        (**self).encode_text(text)
    }
}

/// Checkpoint directory: explicit override, then `MAPSTORY_MODEL_DIR`, then `./models`.
pub fn model_dir(explicit: Option<PathBuf>) -> PathBuf {
    explicit
        .or_else(|| std::env::var_os(MODEL_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("models"))
}
