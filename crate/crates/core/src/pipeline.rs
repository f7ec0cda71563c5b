//! End-to-end wiring: classifier backends, the decision tree, and story
//! generation behind one handle.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use image::DynamicImage;
use serde::{Deserialize, Serialize};

use crate::classify::{CategoryClassifier, ClassifyError, MockPredictor, Prediction};
use crate::encoder::{load_checkpoint, model_dir, EncoderError, ToyEncoder};
use crate::story::{
    generate_story, select_captions, HttpTextGenerator, LlmBackend, StoryRequest, StorySource,
    TextGenClientConfig, TextGenError,
};
use crate::taxonomy::{Aspect, CaptionCategory, ClassVocabulary, TaxonomyError, VocabularySet};
use crate::tree::{default_tree, infer, load_tree_file, DecisionTreeSpec, Predictors, TreeError};

pub const BASE_CHECKPOINT: &str = "base.ckpt";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    TextGen(#[from] TextGenError),
    #[error("no vocabulary configured for {0}")]
    MissingVocabulary(CaptionCategory),
    #[error("checkpoint {path} is for {found}, expected {expected}")]
    CheckpointMismatch {
        path: String,
        found: String,
        expected: String,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("no classifier loaded for {0}")]
    UnknownCategory(CaptionCategory),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// One shared base encoder, class names as prompts.
    Zeroshot,
    /// One fine-tuned checkpoint per category.
    Finetuned,
    /// Deterministic content-hash predictors; no checkpoints needed.
    Mock,
}

impl FromStr for BackendKind {
    type Err = PipelineError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zeroshot" => Ok(BackendKind::Zeroshot),
            "finetuned" => Ok(BackendKind::Finetuned),
            "mock" => Ok(BackendKind::Mock),
            other => Err(PipelineError::Config(format!("unknown backend {other:?}"))),
        }
    }
}

pub fn checkpoint_path(model_dir: &Path, category: CaptionCategory) -> PathBuf {
    model_dir.join(format!("{}.ckpt", category.id()))
}

/// Loads one predictor per requested category.
pub fn load_predictors(
    kind: BackendKind,
    vocabularies: &VocabularySet,
    categories: &[CaptionCategory],
    model_dir: &Path,
) -> Result<Predictors, PipelineError> {
    let vocab = |c: CaptionCategory| {
        vocabularies
            .get(c)
            .cloned()
            .ok_or(PipelineError::MissingVocabulary(c))
    };
    let mut predictors: Predictors = HashMap::new();
    match kind {
        BackendKind::Mock => {
            for &c in categories {
                predictors.insert(c, Arc::new(MockPredictor::content_hash(vocab(c)?)?));
            }
        }
        BackendKind::Zeroshot => {
            let base = Arc::new(load_checkpoint(&model_dir.join(BASE_CHECKPOINT))?.encoder);
            for &c in categories {
                let clf =
                    CategoryClassifier::new(base.clone(), vocab(c)?, vocabularies.template(c))?;
                predictors.insert(c, Arc::new(clf));
            }
        }
        BackendKind::Finetuned => {
            for &c in categories {
                let path = checkpoint_path(model_dir, c);
                let ck = load_checkpoint(&path)?;
                let configured = vocab(c)?;
                let clf = match ck.classifier {
                    Some(meta) => {
                        if meta.category != c || meta.labels != configured.labels() {
                            return Err(PipelineError::CheckpointMismatch {
                                path: path.display().to_string(),
                                found: format!("{} {:?}", meta.category, meta.labels),
                                expected: format!("{c} {:?}", configured.labels()),
                            });
                        }
                        CategoryClassifier::with_prompts(ck.encoder, configured, meta.prompts)?
                    }
                    None => {
                        CategoryClassifier::new(ck.encoder, configured, vocabularies.template(c))?
                    }
                };
                predictors.insert(c, Arc::new(clf));
            }
        }
    }
    Ok(predictors)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeywordOut {
    pub category: CaptionCategory,
    pub label: String,
    pub confidence: f64,
}

/// Body of a story response.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoryResponse {
    pub map_type: String,
    pub keywords: Vec<KeywordOut>,
    pub prompt: String,
    pub narrative: String,
    pub source: StorySource,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreOut {
    pub label: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictResponse {
    pub label: String,
    pub scores: Vec<ScoreOut>,
}

impl From<Prediction> for PredictResponse {
    fn from(p: Prediction) -> Self {
        PredictResponse {
            label: p.caption.label,
            scores: p
                .scores
                .into_iter()
                .map(|(label, score)| ScoreOut { label, score })
                .collect(),
        }
    }
}

pub struct Pipeline {
    vocabularies: VocabularySet,
    tree: DecisionTreeSpec,
    predictors: Predictors,
    llm: Option<LlmBackend>,
}

impl Pipeline {
    pub fn new(
        vocabularies: VocabularySet,
        tree: DecisionTreeSpec,
        predictors: Predictors,
        llm: Option<LlmBackend>,
    ) -> Result<Self, PipelineError> {
        for c in tree.reachable() {
            if !predictors.contains_key(&c) {
                return Err(TreeError::MissingClassifier(c).into());
            }
        }
        Ok(Pipeline {
            vocabularies,
            tree,
            predictors,
            llm,
        })
    }

    /// Mock classifiers, built-in tree, no text generation.
    pub fn mock(vocabularies: VocabularySet) -> Result<Self, PipelineError> {
        let tree = default_tree();
        let predictors = load_predictors(
            BackendKind::Mock,
            &vocabularies,
            &tree.reachable(),
            Path::new("."),
        )?;
        Self::new(vocabularies, tree, predictors, None)
    }

    pub fn tree(&self) -> &DecisionTreeSpec {
        &self.tree
    }

    pub fn vocabularies(&self) -> &VocabularySet {
        &self.vocabularies
    }

    pub fn predict(
        &self,
        category: CaptionCategory,
        image: &DynamicImage,
    ) -> Result<Prediction, PipelineError> {
        let p = self
            .predictors
            .get(&category)
            .ok_or(PipelineError::UnknownCategory(category))?;
        Ok(p.predict(image)?)
    }

    /// One tree inference plus one story generation.
    pub fn story(
        &self,
        image: &DynamicImage,
        aspects: &[Aspect],
    ) -> Result<StoryResponse, PipelineError> {
        let bundle = infer(image, &self.tree, &self.predictors)?;
        let request =
            StoryRequest::new(bundle, aspects).map_err(|e| PipelineError::Config(e.to_string()))?;
        let keywords = select_captions(&request.bundle, request.aspects())
            .into_iter()
            .map(|k| KeywordOut {
                category: k.category,
                label: k.label.clone(),
                confidence: k.confidence,
            })
            .collect();
        let story = generate_story(&request, self.llm.as_ref());
        Ok(StoryResponse {
            map_type: request.bundle.map_type.label.clone(),
            keywords,
            prompt: story.prompt,
            narrative: story.narrative,
            source: story.source,
        })
    }
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

fn default_max_upload() -> usize {
    16 * 1024 * 1024
}

fn default_backend() -> BackendKind {
    BackendKind::Finetuned
}

/// Service / pipeline configuration file (TOML). Relative paths resolve
/// against the config file's directory.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: String,
    #[serde(default)]
    pub model_dir: Option<PathBuf>,
    #[serde(default)]
    pub tree_config: Option<PathBuf>,
    pub vocab_config: PathBuf,
    #[serde(default = "default_backend")]
    pub backend: BackendKind,
    #[serde(default = "default_max_upload")]
    pub max_upload_bytes: usize,
    #[serde(default)]
    pub llm: Option<TextGenClientConfig>,
}

impl ServiceConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut cfg: ServiceConfig =
            toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        };
        resolve(&mut cfg.vocab_config);
        if let Some(t) = cfg.tree_config.as_mut() {
            resolve(t);
        }
        if let Some(m) = cfg.model_dir.as_mut() {
            resolve(m);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn resolved_model_dir(&self) -> PathBuf {
        model_dir(self.model_dir.clone())
    }

    /// Fails fast when a referenced file is missing.
    pub fn check_files(&self) -> Result<(), PipelineError> {
        let mut required = vec![self.vocab_config.clone()];
        required.extend(self.tree_config.clone());
        for p in &required {
            if !p.is_file() {
                return Err(PipelineError::Config(format!(
                    "{} does not exist",
                    p.display()
                )));
            }
        }
        if self.backend != BackendKind::Mock && !self.resolved_model_dir().is_dir() {
            return Err(PipelineError::Config(format!(
                "model directory {} does not exist",
                self.resolved_model_dir().display()
            )));
        }
        if self.max_upload_bytes == 0 {
            return Err(PipelineError::Config("max_upload_bytes must be > 0".into()));
        }
        Ok(())
    }

    /// Vocabularies and tree only; cheap and needed before models load.
    pub fn load_static(&self) -> Result<(VocabularySet, DecisionTreeSpec), PipelineError> {
        self.check_files()?;
        let vocabularies = VocabularySet::load(&self.vocab_config)?;
        let root = vocabularies
            .get(CaptionCategory::MapType)
            .cloned()
            .unwrap_or_else(ClassVocabulary::map_type);
        let tree = match &self.tree_config {
            Some(p) => load_tree_file(p, &root)?,
            None => default_tree(),
        };
        Ok((vocabularies, tree))
    }

    pub fn build_pipeline(&self) -> Result<Pipeline, PipelineError> {
        let (vocabularies, tree) = self.load_static()?;
        let predictors = load_predictors(
            self.backend,
            &vocabularies,
            &tree.reachable(),
            &self.resolved_model_dir(),
        )?;
        let llm = match &self.llm {
            Some(cfg) => Some(LlmBackend::new(
                Arc::new(HttpTextGenerator::new(cfg.clone())?),
                cfg.retry_policy(),
            )),
            None => None,
        };
        Pipeline::new(vocabularies, tree, predictors, llm)
    }
}

/// Convenience for tests and demos: the base toy encoder written as
/// `base.ckpt` into `dir`.
pub fn write_base_checkpoint(
    dir: &Path,
    embed_dim: usize,
    seed: u64,
) -> Result<PathBuf, EncoderError> {
    let path = dir.join(BASE_CHECKPOINT);
    crate::encoder::save_checkpoint(
        &path,
        &crate::encoder::Checkpoint {
            encoder: ToyEncoder::new(embed_dim, seed).with_name("base"),
            classifier: None,
        },
    )?;
    Ok(path)
}

/// Decodes every manifest sample, resolving image paths against `root`.
pub fn load_labeled_images(
    manifest: &crate::ingest::DatasetManifest,
    root: &Path,
) -> Result<Vec<crate::classify::LabeledImage>, crate::ingest::IngestError> {
    manifest
        .samples
        .iter()
        .map(|s| {
            let path = root.join(&s.image_ref);
            let bytes = std::fs::read(&path).map_err(|e| crate::ingest::IngestError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            Ok(crate::classify::LabeledImage {
                image: crate::ingest::decode_image(&bytes)?,
                label: s.label.clone(),
            })
        })
        .collect()
}
