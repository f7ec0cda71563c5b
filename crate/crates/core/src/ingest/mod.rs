//! Dataset construction: metadata records in, per-category manifests out.

mod build;
mod image;
mod manifest;
mod parse;
mod prune;
mod records;
mod split;

pub use self::build::{
    build_manifests, render_summary, run_build, BuildConfig, BuildOutput, BuildSummary,
    CategoryRules,
};
pub use self::image::{decode_image, preprocess_image, target_dims, PreprocessConfig};
pub use self::manifest::{DatasetManifest, Sample, Split};
pub use self::parse::{derive_century, extract_style_keywords, parse_location, tokenize};
pub use self::prune::{prune_classes, PruneMode, PruningPolicy};
pub use self::records::{load_corpus, MapRecord, RepositoryCategory};
pub use self::split::split_train_test;

use crate::taxonomy::TaxonomyError;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot decode image: {0}")]
    Decode(String),
    #[error("invalid pruning policy: {0}")]
    InvalidPolicy(String),
    #[error("manifest is empty")]
    EmptyManifest,
    #[error("invalid corpus: {0}")]
    Corpus(String),
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("invalid build config: {0}")]
    Config(String),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
}

impl IngestError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
