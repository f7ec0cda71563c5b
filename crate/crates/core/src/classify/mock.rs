use std::sync::atomic::{AtomicUsize, Ordering};

use image::DynamicImage;

use super::{ClassifyError, KeywordPredictor, Prediction};
use crate::taxonomy::{ClassVocabulary, KeywordCaption};

#[derive(Debug, Clone, PartialEq)]
pub enum MockMode {
    /// Always the given label.
    Fixed(String),
    /// Label chosen by a hash of the decoded pixels.
    ContentHash,
}

/// Deterministic stand-in predictor that counts its invocations.
#[derive(Debug)]
pub struct MockPredictor {
    vocabulary: ClassVocabulary,
    mode: MockMode,
    calls: AtomicUsize,
}

impl MockPredictor {
    pub fn fixed(vocabulary: ClassVocabulary, label: &str) -> Result<Self, ClassifyError> {
        let idx = vocabulary
            .index_of(label)
            .ok_or_else(|| ClassifyError::UnknownLabel {
                label: label.to_string(),
                category: vocabulary.category,
            })?;
        let label = vocabulary.labels()[idx].clone();
        Ok(MockPredictor {
            vocabulary,
            mode: MockMode::Fixed(label),
            calls: AtomicUsize::new(0),
        })
    }

    pub fn content_hash(vocabulary: ClassVocabulary) -> Result<Self, ClassifyError> {
        if vocabulary.is_empty() {
            return Err(ClassifyError::EmptyVocabulary(vocabulary.category));
        }
        Ok(MockPredictor {
            vocabulary,
            mode: MockMode::ContentHash,
            calls: AtomicUsize::new(0),
        })
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn distribution(&self, winner: usize) -> Vec<f64> {
        // Winner gets twice the weight of each other label.
        let n = self.vocabulary.len() as f64;
        let z = n + 1.0;
        (0..self.vocabulary.len())
            .map(|i| if i == winner { 2.0 / z } else { 1.0 / z })
            .collect()
    }
}

fn pixel_hash(image: &DynamicImage) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let rgb = image.to_rgb8();
    for b in rgb
        .width()
        .to_le_bytes()
        .into_iter()
        .chain(rgb.height().to_le_bytes())
        .chain(rgb.as_raw().iter().copied())
    {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl KeywordPredictor for MockPredictor {
    fn category(&self) -> crate::taxonomy::CaptionCategory {
        self.vocabulary.category
    }

    fn vocabulary(&self) -> &ClassVocabulary {
        &self.vocabulary
    }

    fn predict(&self, image: &DynamicImage) -> Result<Prediction, ClassifyError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let winner = match &self.mode {
            MockMode::Fixed(label) => self
                .vocabulary
                .index_of(label)
                .expect("validated at construction"),
            MockMode::ContentHash => (pixel_hash(image) % self.vocabulary.len() as u64) as usize,
        };
        let scores = self.distribution(winner);
        let labels = self.vocabulary.labels();
        Ok(Prediction {
            caption: KeywordCaption {
                category: self.vocabulary.category,
                label: labels[winner].clone(),
                confidence: scores[winner],
            },
            scores: labels.iter().cloned().zip(scores).collect(),
        })
    }
}
