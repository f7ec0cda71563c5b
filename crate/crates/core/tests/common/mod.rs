#![allow(dead_code)]

use std::io::Cursor;
use std::path::PathBuf;

use image::{DynamicImage, ImageFormat, Rgb, RgbImage};
use mapstory::classify::LabeledImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("fixtures")
}

/// `base` colour with per-pixel jitter of up to `jitter` on each channel.
pub fn noisy_image(base: [u8; 3], jitter: i16, width: u32, height: u32, seed: u64) -> DynamicImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let img = RgbImage::from_fn(width, height, |_, _| {
        let mut px = [0u8; 3];
        for (p, b) in px.iter_mut().zip(base) {
            let v = b as i16 + rng.random_range(-jitter..=jitter);
            *p = v.clamp(0, 255) as u8;
        }
        Rgb(px)
    });
    DynamicImage::ImageRgb8(img)
}

pub fn random_image(rng: &mut ChaCha8Rng, width: u32, height: u32) -> DynamicImage {
    let img = RgbImage::from_fn(width, height, |_, _| {
        Rgb([rng.random(), rng.random(), rng.random()])
    });
    DynamicImage::ImageRgb8(img)
}

pub fn png_bytes(image: &DynamicImage) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    image
        .write_to(&mut out, ImageFormat::Png)
        .expect("png encode");
    out.into_inner()
}

/// The 2-class, 20-sample toy set: reddish images are pictorial maps,
/// bluish ones topographic maps.
pub fn red_blue_set() -> Vec<LabeledImage> {
    (0..20u64)
        .map(|i| {
            let (base, label) = if i % 2 == 0 {
                ([200, 60, 50], "pictorial map")
            } else {
                ([50, 80, 190], "topographic map")
            };
            LabeledImage {
                image: noisy_image(base, 40, 24, 24, 1000 + i),
                label: label.to_string(),
            }
        })
        .collect()
}

/// Perceptron over raw features. Returns true when it finds a separating
/// hyperplane, which shows a linear model can reach accuracy 1.0.
pub fn linearly_separable(features: &[Vec<f32>], positive: &[bool], max_epochs: usize) -> bool {
    let dim = features[0].len();
    let mut w = vec![0.0f64; dim];
    for _ in 0..max_epochs {
        let mut mistakes = 0;
        for (x, &y) in features.iter().zip(positive) {
            let t = if y { 1.0 } else { -1.0 };
            let s: f64 = w.iter().zip(x).map(|(a, b)| a * *b as f64).sum();
            if s * t <= 0.0 {
                mistakes += 1;
                for (a, b) in w.iter_mut().zip(x) {
                    *a += t * *b as f64;
                }
            }
        }
        if mistakes == 0 {
            return true;
        }
    }
    false
}

pub const BOUNDARY: &str = "mapstory-test-boundary";

pub enum Part<'a> {
    Text(&'a str, &'a str),
    File(&'a str, &'a [u8]),
}

/// A multipart/form-data body and its content type.
pub fn multipart(parts: &[Part]) -> (String, Vec<u8>) {
    let mut body = Vec::new();
    for part in parts {
        body.extend_from_slice(format!("--{BOUNDARY}\r\n").as_bytes());
        match part {
            Part::Text(name, value) => {
                body.extend_from_slice(
                    format!("Content-Disposition: form-data; name=\"{name}\"\r\n\r\n").as_bytes(),
                );
                body.extend_from_slice(value.as_bytes());
            }
            Part::File(name, bytes) => {
                body.extend_from_slice(
                    format!("Content-Disposition: form-data; name=\"{name}\"; filename=\"map.png\"\r\nContent-Type: image/png\r\n\r\n")
                        .as_bytes(),
                );
                body.extend_from_slice(bytes);
            }
        }
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    (format!("multipart/form-data; boundary={BOUNDARY}"), body)
}

/// Straightforward re-derivation of the symmetric contrastive loss, used as
/// the finite-difference target.
pub fn reference_loss(
    image_w: &[f64],
    text_w: &[f64],
    dim: usize,
    image_x: &[Vec<f64>],
    text_x: &[Vec<f64>],
    scale: f64,
) -> f64 {
    let embed = |w: &[f64], x: &[f64]| -> Vec<f64> {
        let cols = x.len();
        let e: Vec<f64> = (0..dim)
            .map(|r| (0..cols).map(|c| w[r * cols + c] * x[c]).sum())
            .collect();
        let n = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        e.into_iter().map(|v| v / n).collect()
    };
    let u: Vec<Vec<f64>> = image_x.iter().map(|x| embed(image_w, x)).collect();
    let v: Vec<Vec<f64>> = text_x.iter().map(|x| embed(text_w, x)).collect();
    let n = u.len();
    let s = |i: usize, j: usize| scale * u[i].iter().zip(&v[j]).map(|(a, b)| a * b).sum::<f64>();
    let mut total = 0.0;
    for i in 0..n {
        let lse_row = (0..n).map(|j| s(i, j).exp()).sum::<f64>().ln();
        let lse_col = (0..n).map(|j| s(j, i).exp()).sum::<f64>().ln();
        total += (lse_row - s(i, i)) + (lse_col - s(i, i));
    }
    total / (2.0 * n as f64)
}

/// Norm-wise relative error between the analytic gradient and central
/// differences of [`reference_loss`], on `probes` random coordinates of
/// each projection of a 4-sample batch at the toy encoder's real sizes.
pub fn gradient_check(seed: u64, probes: usize) -> f64 {
    use mapstory::classify::contrastive_loss_and_grad;
    use mapstory::encoder::{ToyEncoder, VisionTextEncoder};

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let enc = ToyEncoder::new(ToyEncoder::DEFAULT_EMBED_DIM, seed);
    let dim = enc.embed_dim();
    let to64 = |v: Vec<f32>| v.into_iter().map(f64::from).collect::<Vec<f64>>();
    let image_x: Vec<Vec<f64>> = (0..4)
        .map(|_| to64(ToyEncoder::image_features(&random_image(&mut rng, 16, 12))))
        .collect();
    let prompts = [
        "pictorial map",
        "topographic map",
        "a map of france",
        "flight network",
    ];
    let text_x: Vec<Vec<f64>> = prompts
        .iter()
        .map(|p| to64(ToyEncoder::text_features(p).unwrap()))
        .collect();
    let mut wi = to64(enc.image_projection().as_slice().to_vec());
    let mut wt = to64(enc.text_projection().as_slice().to_vec());
    let scale = 1.0 / 0.07;
    let analytic = contrastive_loss_and_grad(&wi, &wt, dim, &image_x, &text_x, scale);

    let h = 1e-5;
    let (mut diff, mut norm_a, mut norm_n) = (0.0f64, 0.0f64, 0.0f64);
    for which in 0..2 {
        for _ in 0..probes {
            let len = if which == 0 { wi.len() } else { wt.len() };
            let k = rng.random_range(0..len);
            let w = if which == 0 { &mut wi } else { &mut wt };
            let orig = w[k];
            w[k] = orig + h;
            let plus = reference_loss(&wi, &wt, dim, &image_x, &text_x, scale);
            let w = if which == 0 { &mut wi } else { &mut wt };
            w[k] = orig - h;
            let minus = reference_loss(&wi, &wt, dim, &image_x, &text_x, scale);
            let w = if which == 0 { &mut wi } else { &mut wt };
            w[k] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = if which == 0 {
                analytic.image_grad[k]
            } else {
                analytic.text_grad[k]
            };
            diff += (a - numeric).powi(2);
            norm_a += a * a;
            norm_n += numeric * numeric;
        }
    }
    diff.sqrt() / (norm_a.sqrt() + norm_n.sqrt()).max(1e-300)
}

/// One randomized routing trial: a random valid tree (parsed from TOML),
/// fixed-label root mock, counting child mocks. Returns a description of
/// the first violated invariant.
pub fn routing_trial(rng: &mut ChaCha8Rng) -> Result<(), String> {
    use std::collections::HashMap;
    use std::sync::Arc;

    use mapstory::classify::MockPredictor;
    use mapstory::taxonomy::{CaptionCategory, ClassVocabulary, VocabularySource};
    use mapstory::tree::{infer, load_tree, Predictors};
    use rand::seq::SliceRandom;

    let mut root_labels = vec!["pictorial map".to_string(), "topographic map".to_string()];
    for i in 0..rng.random_range(0..3) {
        root_labels.push(format!("extra map {i}"));
    }
    let root_vocab = ClassVocabulary::new(
        CaptionCategory::MapType,
        &root_labels,
        VocabularySource::Builtin,
    )
    .unwrap();
    let mut toml = String::from("root = \"map_type\"\n\n[branches]\n");
    for label in &root_labels {
        let mut cats: Vec<CaptionCategory> = CaptionCategory::ALL[1..].to_vec();
        cats.shuffle(rng);
        cats.truncate(rng.random_range(0..=cats.len()));
        let ids: Vec<String> = cats.iter().map(|c| format!("{:?}", c.id())).collect();
        toml.push_str(&format!("{label:?} = [{}]\n", ids.join(", ")));
    }
    let spec = load_tree(&toml, &root_vocab)
        .map_err(|e| format!("generated tree rejected: {e}\n{toml}"))?;

    let chosen = root_labels[rng.random_range(0..root_labels.len())].clone();
    let root = Arc::new(MockPredictor::fixed(root_vocab, &chosen).unwrap());
    let mut children: HashMap<CaptionCategory, Arc<MockPredictor>> = HashMap::new();
    let mut predictors: Predictors = HashMap::new();
    predictors.insert(CaptionCategory::MapType, root.clone());
    for c in &CaptionCategory::ALL[1..] {
        let vocab = ClassVocabulary::new(
            *c,
            [format!("{} a", c.id()), format!("{} b", c.id())],
            VocabularySource::Builtin,
        )
        .unwrap();
        let mock = Arc::new(MockPredictor::content_hash(vocab).unwrap());
        children.insert(*c, mock.clone());
        predictors.insert(*c, mock);
    }

    let image = random_image(rng, 6, 6);
    let bundle = infer(&image, &spec, &predictors).map_err(|e| e.to_string())?;
    let branch = spec.branch(&chosen).unwrap().to_vec();
    let total: usize = root.calls() + children.values().map(|m| m.calls()).sum::<usize>();
    if root.calls() != 1 {
        return Err(format!("root called {} times", root.calls()));
    }
    if total != 1 + branch.len() {
        return Err(format!("{total} calls for a branch of {}", branch.len()));
    }
    for (c, mock) in &children {
        let expected = usize::from(branch.contains(c));
        if mock.calls() != expected {
            return Err(format!(
                "{c} called {} times, expected {expected}",
                mock.calls()
            ));
        }
    }
    let order: Vec<CaptionCategory> = bundle.children.iter().map(|k| k.category).collect();
    if order != branch {
        return Err(format!("children order {order:?} != branch {branch:?}"));
    }
    if bundle.map_type.label != chosen {
        return Err(format!("map type {} != {chosen}", bundle.map_type.label));
    }
    Ok(())
}

/// The two published accuracy rows, in report column order.
pub const BASE_ROW: [f64; 6] = [0.43, 0.28, 0.29, 0.40, 0.96, 0.47];
pub const FINETUNED_ROW: [f64; 6] = [0.96, 0.78, 0.75, 0.76, 0.93, 0.67];

pub fn published_report() -> mapstory::eval::EvaluationReport {
    use mapstory::taxonomy::CaptionCategory;
    let mut report = mapstory::eval::EvaluationReport::default();
    for (name, row) in [("Base", BASE_ROW), ("Fine-tuned", FINETUNED_ROW)] {
        report.add_row(name, CaptionCategory::ALL.into_iter().zip(row).collect());
    }
    report
}

/// Last `|`-separated cell of the report line starting with `name`.
pub fn average_cell(report: &str, name: &str) -> String {
    report
        .lines()
        .find(|l| l.starts_with(name) && l[name.len()..].starts_with(' '))
        .and_then(|l| l.rsplit('|').next())
        .map(|c| c.trim().to_string())
        .unwrap_or_default()
}
