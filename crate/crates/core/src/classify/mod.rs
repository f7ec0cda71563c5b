//! Per-category classification by image/text embedding similarity, and
//! contrastive fine-tuning of the toy encoder.

mod loss;
mod mock;
mod train;

pub use self::loss::{contrastive_loss, contrastive_loss_and_grad, LossAndGrad};
pub use self::mock::{MockMode, MockPredictor};
pub use self::train::{fine_tune, EpochRecord, LabeledImage, TrainingConfig, TrainingLog};

use image::DynamicImage;
use serde::Serialize;

use crate::encoder::{EncoderError, VisionTextEncoder};
use crate::taxonomy::{CaptionCategory, ClassVocabulary, KeywordCaption};

#[derive(Debug, thiserror::Error)]
pub enum ClassifyError {
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error("label {label:?} is not in the {category} vocabulary")]
    UnknownLabel {
        label: String,
        category: CaptionCategory,
    },
    #[error("vocabulary for {0} is empty")]
    EmptyVocabulary(CaptionCategory),
    #[error("insufficient training data: {0}")]
    InsufficientData(String),
    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}

/// A prediction with the full score distribution in vocabulary order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub caption: KeywordCaption,
    pub scores: Vec<(String, f64)>,
}

/// Anything that can assign one label of its category to an image.
pub trait KeywordPredictor: Send + Sync {
    fn category(&self) -> CaptionCategory;
    fn vocabulary(&self) -> &ClassVocabulary;
    fn predict(&self, image: &DynamicImage) -> Result<Prediction, ClassifyError>;
}

/// Text fed to the text encoder for `label`: the bare label unless a
/// template containing `{label}` is given.
pub fn prompt_for(
    label: &str,
    vocabulary: &ClassVocabulary,
    template: Option<&str>,
) -> Result<String, ClassifyError> {
    let idx = vocabulary
        .index_of(label)
        .ok_or_else(|| ClassifyError::UnknownLabel {
            label: label.to_string(),
            category: vocabulary.category,
        })?;
    let canonical = &vocabulary.labels()[idx];
    Ok(match template {
        Some(t) => t.replace("{label}", canonical),
        None => canonical.clone(),
    })
}

pub(crate) fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (*x as f64, *y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

/// Softmax (temperature 1) over cosine similarities, plus the index of the
/// first maximal similarity.
pub fn zero_shot_scores(
    image_embedding: &[f32],
    text_embeddings: &[Vec<f32>],
) -> (usize, Vec<f64>) {
    let sims: Vec<f64> = text_embeddings
        .iter()
        .map(|t| cosine(image_embedding, t))
        .collect();
    let mut best = 0usize;
    for (i, s) in sims.iter().enumerate() {
        if *s > sims[best] {
            best = i;
        }
    }
    let max = sims.get(best).copied().unwrap_or(0.0);
    let exps: Vec<f64> = sims.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    (best, exps.into_iter().map(|e| e / z).collect())
}

/// One category's encoder together with the cached embeddings of its
/// class prompts.
#[derive(Debug, Clone)]
pub struct CategoryClassifier<E> {
    category: CaptionCategory,
    encoder: E,
    vocabulary: ClassVocabulary,
    prompts: Vec<String>,
    text_embeddings: Vec<Vec<f32>>,
}

impl<E: VisionTextEncoder> CategoryClassifier<E> {
    pub fn new(
        encoder: E,
        vocabulary: ClassVocabulary,
        template: Option<&str>,
    ) -> Result<Self, ClassifyError> {
        let prompts = vocabulary
            .labels()
            .iter()
            .map(|l| prompt_for(l, &vocabulary, template))
            .collect::<Result<Vec<_>, _>>()?;
        Self::with_prompts(encoder, vocabulary, prompts)
    }

    pub fn with_prompts(
        encoder: E,
        vocabulary: ClassVocabulary,
        prompts: Vec<String>,
    ) -> Result<Self, ClassifyError> {
        if vocabulary.is_empty() {
            return Err(ClassifyError::EmptyVocabulary(vocabulary.category));
        }
        if prompts.len() != vocabulary.len() {
            return Err(ClassifyError::InvalidConfig(format!(
                "{} prompts for {} labels",
                prompts.len(),
                vocabulary.len()
            )));
        }
        let text_embeddings = prompts
            .iter()
            .map(|p| encoder.encode_text(p))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(CategoryClassifier {
            category: vocabulary.category,
            encoder,
            vocabulary,
            prompts,
            text_embeddings,
        })
    }

    pub fn encoder(&self) -> &E {
        &self.encoder
    }

    pub fn prompts(&self) -> &[String] {
        &self.prompts
    }

    pub fn into_encoder(self) -> E {
        self.encoder
    }

    /// Prediction for an already-computed image embedding.
    pub fn predict_embedding(&self, image_embedding: &[f32]) -> Prediction {
        let (best, scores) = zero_shot_scores(image_embedding, &self.text_embeddings);
        let labels = self.vocabulary.labels();
        Prediction {
            caption: KeywordCaption {
                category: self.category,
                label: labels[best].clone(),
                confidence: scores[best],
            },
            scores: labels.iter().cloned().zip(scores).collect(),
        }
    }
}

impl<E: VisionTextEncoder> KeywordPredictor for CategoryClassifier<E> {
    fn category(&self) -> CaptionCategory {
        self.category
    }

    fn vocabulary(&self) -> &ClassVocabulary {
        &self.vocabulary
    }

    fn predict(&self, image: &DynamicImage) -> Result<Prediction, ClassifyError> {
        let emb = self.encoder.encode_image(image)?;
        Ok(self.predict_embedding(&emb))
    }
}
