use std::fmt::Write as _;

use image::DynamicImage;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{contrastive_loss_and_grad, CategoryClassifier, ClassifyError, KeywordPredictor};
use crate::encoder::{Matrix, ToyEncoder, VisionTextEncoder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Fixed multiplier on the cosine logits inside the training loss.
    pub logit_scale: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            batch_size: 10,
            learning_rate: 1e-5,
            optimizer: Optimizer::Adam,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 30,
            seed: 0,
            logit_scale: 1.0 / 0.07,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), ClassifyError> {
        if self.batch_size < 2 {
            return Err(ClassifyError::InvalidConfig(
                "batch_size must be at least 2".into(),
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(ClassifyError::InvalidConfig(
                "learning_rate must be finite and >= 0".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0
        {
            return Err(ClassifyError::InvalidConfig(
                "bad Adam hyperparameters".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LabeledImage {
    pub image: DynamicImage,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned (0 = untouched input).
    pub selected_epoch: usize,
}

impl TrainingLog {
    /// One tab-separated line per epoch: epoch, loss, train_acc, val_acc.
    pub fn to_text(&self) -> String {
        let mut out = String::from("epoch\tloss\ttrain_acc\tval_acc\n");
        for r in &self.epochs {
            let val = r
                .val_acc
                .map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
            let _ = writeln!(
                out,
                "{}\t{:.6}\t{:.4}\t{}",
                r.epoch, r.loss, r.train_acc, val
            );
        }
        out
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], cfg: &TrainingConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
}

fn to_f64(m: &Matrix) -> Vec<f64> {
    m.as_slice().iter().map(|v| *v as f64).collect()
}

fn to_matrix(rows: usize, cols: usize, v: &[f64]) -> Matrix {
    Matrix::from_vec(rows, cols, v.iter().map(|x| *x as f32).collect()).expect("shape")
}

fn rebuild(
    base: &CategoryClassifier<ToyEncoder>,
    image_w: &[f64],
    text_w: &[f64],
) -> Result<CategoryClassifier<ToyEncoder>, ClassifyError> {
    let enc = base.encoder();
    let (ri, ci) = (enc.image_projection().rows(), enc.image_projection().cols());
    let (rt, ct) = (enc.text_projection().rows(), enc.text_projection().cols());
    let encoder = ToyEncoder::from_parts(
        enc.name(),
        to_matrix(ri, ci, image_w),
        to_matrix(rt, ct, text_w),
    )?;
    CategoryClassifier::with_prompts(encoder, base.vocabulary().clone(), base.prompts().to_vec())
}

fn accuracy(
    classifier: &CategoryClassifier<ToyEncoder>,
    features: &[Vec<f32>],
    labels: &[usize],
) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let correct = features
        .iter()
        .zip(labels)
        .filter(|(f, l)| {
            let emb = classifier.encoder().project_image(f);
            classifier
                .vocabulary()
                .index_of(&classifier.predict_embedding(&emb).caption.label)
                == Some(**l)
        })
        .count();
    correct as f64 / labels.len() as f64
}

fn encode_set(
    classifier: &CategoryClassifier<ToyEncoder>,
    set: &[LabeledImage],
) -> Result<(Vec<Vec<f32>>, Vec<usize>), ClassifyError> {
    let mut feats = Vec::with_capacity(set.len());
    let mut labels = Vec::with_capacity(set.len());
    for s in set {
        let idx = classifier.vocabulary().index_of(&s.label).ok_or_else(|| {
            ClassifyError::UnknownLabel {
                label: s.label.clone(),
                category: classifier.category(),
            }
        })?;
        feats.push(ToyEncoder::image_features(&s.image));
        labels.push(idx);
    }
    Ok((feats, labels))
}

/// Contrastive fine-tuning of both projections with Adam. The input
/// classifier is left untouched; the returned one carries the parameters of
/// the best validation epoch when `validation` is given, else the last.
pub fn fine_tune(
    classifier: &CategoryClassifier<ToyEncoder>,
    train: &[LabeledImage],
    config: &TrainingConfig,
    validation: Option<&[LabeledImage]>,
) -> Result<(CategoryClassifier<ToyEncoder>, TrainingLog), ClassifyError> {
    config.validate()?;
    if train.len() < config.batch_size {
        return Err(ClassifyError::InsufficientData(format!(
            "{} samples for batch size {}",
            train.len(),
            config.batch_size
        )));
    }
    let (train_feats, train_labels) = encode_set(classifier, train)?;
    let mut distinct = train_labels.clone();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(ClassifyError::InsufficientData(
            "need at least two distinct labels".into(),
        ));
    }
    let val = validation.map(|v| encode_set(classifier, v)).transpose()?;

    let text_feats: Vec<Vec<f64>> = classifier
        .prompts()
        .iter()
        .map(|p| ToyEncoder::text_features(p).map(|f| f.iter().map(|x| *x as f64).collect()))
        .collect::<Result<_, _>>()?;
    let image_feats: Vec<Vec<f64>> = train_feats
        .iter()
        .map(|f| f.iter().map(|x| *x as f64).collect())
        .collect();

    let embed_dim = classifier.encoder().embed_dim();
    let mut image_w = to_f64(classifier.encoder().image_projection());
    let mut text_w = to_f64(classifier.encoder().text_projection());
    let mut adam_image = Adam::new(image_w.len());
    let mut adam_text = Adam::new(text_w.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut log = TrainingLog::default();
    let mut best: Option<(f64, usize, Vec<f64>, Vec<f64>)> = None;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            if batch.len() < 2 {
                continue;
            }
            let xi: Vec<Vec<f64>> = batch.iter().map(|&i| image_feats[i].clone()).collect();
            let xt: Vec<Vec<f64>> = batch
                .iter()
                .map(|&i| text_feats[train_labels[i]].clone())
                .collect();
            let step = contrastive_loss_and_grad(
                &image_w,
                &text_w,
                embed_dim,
                &xi,
                &xt,
                config.logit_scale,
            );
            let grads_finite = step
                .image_grad
                .iter()
                .chain(&step.text_grad)
                .all(|g| g.is_finite());
            if !step.loss.is_finite() || !grads_finite {
                return Err(ClassifyError::NonFiniteLoss { epoch, batch: b });
            }
            adam_image.step(&mut image_w, &step.image_grad, config);
            adam_text.step(&mut text_w, &step.text_grad, config);
            loss_sum += step.loss;
            batches += 1;
        }
        let current = rebuild(classifier, &image_w, &text_w)?;
        let train_acc = accuracy(&current, &train_feats, &train_labels);
        let val_acc = val.as_ref().map(|(f, l)| accuracy(&current, f, l));
        log.epochs.push(EpochRecord {
            epoch,
            loss: loss_sum / batches.max(1) as f64,
            train_acc,
            val_acc,
        });
        if let Some(acc) = val_acc {
            if best.as_ref().is_none_or(|(b, ..)| acc > *b) {
                best = Some((acc, epoch, image_w.clone(), text_w.clone()));
            }
        }
    }

    let result = match best {
        Some((_, epoch, wi, wt)) => {
            log.selected_epoch = epoch;
            rebuild(classifier, &wi, &wt)?
        }
        None => {
            log.selected_epoch = log.epochs.len();
            rebuild(classifier, &image_w, &text_w)?
        }
    };
    Ok((result, log))
}
