//! Historical map storytelling.
//!
//! A map image is classified along several caption categories by a small
//! decision tree of vision-text classifiers: the map type first, then only
//! the categories relevant to that type. The resulting keyword captions are
//! composed into a prompt for a text-generation service, with a
//! deterministic template narrative when no service is reachable.
//!
//! - [`taxonomy`] categories, aspects, vocabularies
//! - [`ingest`] dataset manifests from repository metadata
//! - [`encoder`] image/text encoders and checkpoints
//! - [`classify`] zero-shot prediction and contrastive fine-tuning
//! - [`tree`] decision-tree inference
//! - [`story`] prompt composition and narrative generation
//! - [`eval`] per-category accuracy reports
//! - [`pipeline`] / [`service`] end-to-end wiring and the HTTP API

pub mod classify;
pub mod encoder;
pub mod eval;
pub mod ingest;
pub mod pipeline;
pub mod service;
pub mod story;
pub mod taxonomy;
pub mod tree;

pub use classify::{CategoryClassifier, KeywordPredictor, Prediction};
pub use pipeline::{Pipeline, ServiceConfig, StoryResponse};
pub use taxonomy::{Aspect, CaptionCategory, ClassVocabulary, KeywordCaption};
pub use tree::{DecisionTreeSpec, KeywordBundle};
