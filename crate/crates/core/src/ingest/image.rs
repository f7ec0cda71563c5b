use image::imageops::FilterType;
use image::DynamicImage;
use serde::{Deserialize, Serialize};

use super::IngestError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub max_side_px: u32,
    pub upscale: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            max_side_px: 768,
            upscale: false,
        }
    }
}

/// Output dimensions: longest side clamped to `max_side_px`, aspect ratio
/// kept to the nearest pixel.
pub fn target_dims(width: u32, height: u32, config: &PreprocessConfig) -> (u32, u32) {
    let max_side = config.max_side_px.max(1);
    let longest = width.max(height);
    if longest == 0 || (longest <= max_side && !config.upscale) || longest == max_side {
        return (width, height);
    }
    let scale = max_side as f64 / longest as f64;
    let fit = |d: u32| {
        if d == longest {
            max_side
        } else {
            ((d as f64 * scale).round() as u32).clamp(1, max_side)
        }
    };
    (fit(width), fit(height))
}

pub fn preprocess_image(image: &DynamicImage, config: &PreprocessConfig) -> DynamicImage {
    let (w, h) = target_dims(image.width(), image.height(), config);
    if (w, h) == (image.width(), image.height()) {
        return image.clone();
    }
    image.resize_exact(w, h, FilterType::Lanczos3)
}

pub fn decode_image(bytes: &[u8]) -> Result<DynamicImage, IngestError> {
    image::load_from_memory(bytes).map_err(|e| IngestError::Decode(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const CFG: PreprocessConfig = PreprocessConfig {
        max_side_px: 768,
        upscale: false,
    };

    #[test]
    fn dims_examples() {
        assert_eq!(target_dims(1536, 768, &CFG), (768, 384));
        assert_eq!(target_dims(500, 400, &CFG), (500, 400));
        // Pillow's Image.thumbnail((768, 768)) on 1000x333 gives (768, 256).
        assert_eq!(target_dims(1000, 333, &CFG), (768, 256));
        assert_eq!(target_dims(333, 1000, &CFG), (256, 768));
    }

    #[test]
    fn upscale_when_enabled() {
        let cfg = PreprocessConfig {
            max_side_px: 768,
            upscale: true,
        };
        assert_eq!(target_dims(384, 192, &cfg), (768, 384));
    }

    #[test]
    fn resize_pixels() {
        let img = DynamicImage::new_rgb8(1536, 768);
        let out = preprocess_image(&img, &CFG);
        assert_eq!((out.width(), out.height()), (768, 384));
        let small = DynamicImage::new_rgb8(50, 40);
        assert_eq!(preprocess_image(&small, &CFG).as_bytes(), small.as_bytes());
    }

    #[test]
    fn decode_garbage_fails() {
        assert!(matches!(
            decode_image(b"not an image"),
            Err(IngestError::Decode(_))
        ));
    }

    proptest! {
        #[test]
        fn idempotent_and_bounded(w in 1u32..5000, h in 1u32..5000, max in 1u32..2000) {
            let cfg = PreprocessConfig { max_side_px: max, upscale: false };
            let once = target_dims(w, h, &cfg);
            prop_assert!(once.0.max(once.1) <= max.max(w.max(h).min(max)));
            prop_assert_eq!(target_dims(once.0, once.1, &cfg), once);
            // Aspect ratio within one pixel of rounding.
            if w >= h {
                let exact = h as f64 * once.0 as f64 / w as f64;
                prop_assert!((once.1 as f64 - exact).abs() <= 1.0);
            }
        }
    }
}
