//! A tiny deterministic encoder: fixed hand-crafted features followed by one
//! trainable linear projection per modality.

use image::imageops::FilterType;
use image::DynamicImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EncoderError, Matrix, VisionTextEncoder};
use crate::taxonomy::normalize_label;

const HIST_BINS: usize = 8;
const THUMB_SIDE: u32 = 8;
/// 3 channel histograms, an 8x8 intensity thumbnail, and a bias term.
pub const IMAGE_FEATURES: usize = 3 * HIST_BINS + (THUMB_SIDE * THUMB_SIDE) as usize + 1;
pub const TEXT_BUCKETS: usize = 256;
pub const TEXT_FEATURES: usize = TEXT_BUCKETS + 1;

pub const TOY_ARCH: &str = "toy-v1";

#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoder {
    name: String,
    image_projection: Matrix,
    text_projection: Matrix,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl ToyEncoder {
    pub const DEFAULT_EMBED_DIM: usize = 64;

    /// Randomly initialized projections, deterministic in `seed`.
    pub fn new(embed_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = |cols: usize| {
            let bound = 1.0 / (cols as f32).sqrt();
            let data = (0..embed_dim * cols)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            Matrix::from_vec(embed_dim, cols, data).expect("shape")
        };
        let image_projection = init(IMAGE_FEATURES);
        let text_projection = init(TEXT_FEATURES);
        ToyEncoder {
            name: format!("toy-{embed_dim}-seed{seed}"),
            image_projection,
            text_projection,
        }
    }

    pub fn from_parts(
        name: impl Into<String>,
        image_projection: Matrix,
        text_projection: Matrix,
    ) -> Result<Self, EncoderError> {
        if image_projection.cols() != IMAGE_FEATURES
            || text_projection.cols() != TEXT_FEATURES
            || image_projection.rows() != text_projection.rows()
            || image_projection.rows() == 0
        {
            return Err(EncoderError::Failure(format!(
                "projection shapes {}x{} / {}x{} do not fit the toy featurizers",
                image_projection.rows(),
                image_projection.cols(),
                text_projection.rows(),
                text_projection.cols()
            )));
        }
        let all_finite = image_projection
            .as_slice()
            .iter()
            .chain(text_projection.as_slice())
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(EncoderError::Failure("non-finite parameter".into()));
        }
        Ok(ToyEncoder {
            name: name.into(),
            image_projection,
            text_projection,
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn image_projection(&self) -> &Matrix {
        &self.image_projection
    }

    pub fn text_projection(&self) -> &Matrix {
        &self.text_projection
    }

    pub fn image_projection_mut(&mut self) -> &mut Matrix {
        &mut self.image_projection
    }

    pub fn text_projection_mut(&mut self) -> &mut Matrix {
        &mut self.text_projection
    }

    /// Channel histograms, thumbnail intensities, and a trailing 1.
    pub fn image_features(image: &DynamicImage) -> Vec<f32> {
        let rgb = image.to_rgb8();
        let mut feats = vec![0.0f32; IMAGE_FEATURES];
        let pixels = (rgb.width() as usize * rgb.height() as usize).max(1) as f32;
        for p in rgb.pixels() {
            for c in 0..3 {
                let bin = p.0[c] as usize * HIST_BINS / 256;
                feats[c * HIST_BINS + bin] += 1.0;
            }
        }
        for f in &mut feats[..3 * HIST_BINS] {
            *f /= pixels;
        }
        if rgb.width() > 0 && rgb.height() > 0 {
            let gray = image::imageops::grayscale(&rgb);
            let thumb =
                image::imageops::resize(&gray, THUMB_SIDE, THUMB_SIDE, FilterType::Triangle);
            for (i, p) in thumb.pixels().enumerate() {
                feats[3 * HIST_BINS + i] = p.0[0] as f32 / 255.0;
            }
        }
        feats[IMAGE_FEATURES - 1] = 1.0;
        feats
    }

    /// Hashed character 1- to 3-gram counts (L2-normalized) and a trailing 1.
    pub fn text_features(text: &str) -> Result<Vec<f32>, EncoderError> {
        let norm = normalize_label(text);
        if norm.is_empty() {
            return Err(EncoderError::EmptyText);
        }
        let chars: Vec<char> = std::iter::once('^')
            .chain(norm.chars())
            .chain(std::iter::once('$'))
            .collect();
        let mut feats = vec![0.0f32; TEXT_FEATURES];
        let mut buf = String::new();
        for n in 1..=3 {
            for gram in chars.windows(n) {
                buf.clear();
                buf.extend(gram);
                feats[(fnv1a(buf.as_bytes()) % TEXT_BUCKETS as u64) as usize] += 1.0;
            }
        }
        let norm2 = feats[..TEXT_BUCKETS]
            .iter()
            .map(|v| v * v)
            .sum::<f32>()
            .sqrt();
        for f in &mut feats[..TEXT_BUCKETS] {
            *f /= norm2;
        }
        feats[TEXT_BUCKETS] = 1.0;
        Ok(feats)
    }

    pub fn project_image(&self, features: &[f32]) -> Vec<f32> {
        self.image_projection.matvec(features)
    }

    pub fn project_text(&self, features: &[f32]) -> Vec<f32> {
        self.text_projection.matvec(features)
    }
}

impl VisionTextEncoder for ToyEncoder {
    fn name(&self) -> &str {
        &self.name
    }

    fn embed_dim(&self) -> usize {
        self.image_projection.rows()
    }

    fn encode_image(&self, image: &DynamicImage) -> Result<Vec<f32>, EncoderError> {
        Ok(self.project_image(&Self::image_features(image)))
    }

    fn encode_text(&self, text: &str) -> Result<Vec<f32>, EncoderError> {
        Ok(self.project_text(&Self::text_features(text)?))
    }
}
