//! Two-level inference router: map type at the root, then only the
//! categories listed for the predicted type.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use image::DynamicImage;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::classify::{ClassifyError, KeywordPredictor};
use crate::taxonomy::{
    normalize_label, CaptionCategory, ClassVocabulary, KeywordCaption, PICTORIAL_MAP,
    TOPOGRAPHIC_MAP,
};

pub type Predictors = HashMap<CaptionCategory, Arc<dyn KeywordPredictor>>;

#[derive(Debug, thiserror::Error)]
pub enum TreeError {
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("no classifier loaded for {0}")]
    MissingClassifier(CaptionCategory),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionTreeSpec {
    pub root: CaptionCategory,
    pub branches: IndexMap<String, Vec<CaptionCategory>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeFile {
    root: String,
    branches: IndexMap<String, Vec<String>>,
}

impl DecisionTreeSpec {
    pub fn branch(&self, root_label: &str) -> Option<&[CaptionCategory]> {
        self.branches
            .get(&normalize_label(root_label))
            .map(Vec::as_slice)
    }

    /// Every category the tree can invoke, root first.
    pub fn reachable(&self) -> Vec<CaptionCategory> {
        let mut out = vec![self.root];
        for c in self.branches.values().flatten() {
            if !out.contains(c) {
                out.push(*c);
            }
        }
        out
    }

    pub fn to_toml_string(&self) -> String {
        let mut out = format!("root = {:?}\n\n[branches]\n", self.root.id());
        for (label, cats) in &self.branches {
            let list: Vec<String> = cats.iter().map(|c| format!("{:?}", c.id())).collect();
            out.push_str(&format!("{label:?} = [{}]\n", list.join(", ")));
        }
        out
    }

    fn validate(&self, root_vocabulary: &ClassVocabulary) -> Result<(), TreeError> {
        if !self.root.is_root_legal() {
            return Err(TreeError::InvalidTree(format!(
                "root must be map_type, got {}",
                self.root
            )));
        }
        for (label, children) in &self.branches {
            if !root_vocabulary.contains(label) {
                return Err(TreeError::InvalidTree(format!(
                    "branch {label:?} is not a map type"
                )));
            }
            for (i, c) in children.iter().enumerate() {
                if c.is_root_legal() {
                    return Err(TreeError::InvalidTree(format!(
                        "branch {label:?} lists the root category"
                    )));
                }
                if children[..i].contains(c) {
                    return Err(TreeError::InvalidTree(format!(
                        "branch {label:?} repeats {c}"
                    )));
                }
            }
        }
        for label in root_vocabulary.labels() {
            if !self.branches.contains_key(label) {
                return Err(TreeError::InvalidTree(format!(
                    "map type {label:?} has no branch"
                )));
            }
        }
        Ok(())
    }
}

/// The two-branch tree used when no config is given.
pub fn default_tree() -> DecisionTreeSpec {
    let mut branches = IndexMap::new();
    branches.insert(
        TOPOGRAPHIC_MAP.to_string(),
        vec![
            CaptionCategory::LocationTopo,
            CaptionCategory::Style,
            CaptionCategory::Century,
        ],
    );
    branches.insert(
        PICTORIAL_MAP.to_string(),
        vec![CaptionCategory::LocationPict, CaptionCategory::Topic],
    );
    DecisionTreeSpec {
        root: CaptionCategory::MapType,
        branches,
    }
}

/// Parses and validates a tree config against the root vocabulary.
pub fn load_tree(
    config: &str,
    root_vocabulary: &ClassVocabulary,
) -> Result<DecisionTreeSpec, TreeError> {
    let file: TreeFile =
        toml::from_str(config).map_err(|e| TreeError::InvalidTree(e.to_string()))?;
    let root: CaptionCategory = file
        .root
        .parse()
        .map_err(|e| TreeError::InvalidTree(format!("{e}")))?;
    let mut branches = IndexMap::new();
    for (label, children) in file.branches {
        let cats = children
            .iter()
            .map(|c| c.parse::<CaptionCategory>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| TreeError::InvalidTree(format!("{e}")))?;
        if branches.insert(normalize_label(&label), cats).is_some() {
            return Err(TreeError::InvalidTree(format!(
                "branch {label:?} defined twice"
            )));
        }
    }
    let spec = DecisionTreeSpec { root, branches };
    spec.validate(root_vocabulary)?;
    Ok(spec)
}

pub fn load_tree_file(
    path: &Path,
    root_vocabulary: &ClassVocabulary,
) -> Result<DecisionTreeSpec, TreeError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| TreeError::InvalidTree(format!("{}: {e}", path.display())))?;
    load_tree(&text, root_vocabulary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeywordBundle {
    pub map_type: KeywordCaption,
    /// Exactly the branch categories of `map_type.label`, in branch order.
    pub children: Vec<KeywordCaption>,
    /// Full root distribution, for callers that surface uncertainty.
    pub root_scores: Vec<(String, f64)>,
}

impl KeywordBundle {
    pub fn all(&self) -> impl Iterator<Item = &KeywordCaption> {
        std::iter::once(&self.map_type).chain(&self.children)
    }
}

/// Runs the root classifier, then each classifier of the chosen branch.
/// Off-branch classifiers are never invoked.
pub fn infer(
    image: &DynamicImage,
    spec: &DecisionTreeSpec,
    predictors: &Predictors,
) -> Result<KeywordBundle, TreeError> {
    for c in spec.reachable() {
        if !predictors.contains_key(&c) {
            return Err(TreeError::MissingClassifier(c));
        }
    }
    let root = predictors[&spec.root].predict(image)?;
    let branch = spec.branch(&root.caption.label).ok_or_else(|| {
        TreeError::InvalidTree(format!(
            "root predicted {:?}, which has no branch",
            root.caption.label
        ))
    })?;
    let children = branch
        .iter()
        .map(|c| predictors[c].predict(image).map(|p| p.caption))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(KeywordBundle {
        map_type: root.caption,
        children,
        root_scores: root.scores,
    })
}
