//! Caption categories, aspects, and the closed label vocabularies shared by
//! every stage of the pipeline.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TaxonomyError {
    #[error("unknown map type label {0:?}")]
    UnknownMapType(String),
    #[error("unknown caption category {0:?}")]
    UnknownCategory(String),
    #[error("unknown aspect {0:?}")]
    UnknownAspect(String),
    #[error("vocabulary for {category} contains an empty label")]
    EmptyLabel { category: CaptionCategory },
    #[error("vocabulary for {category} repeats label {label:?}")]
    DuplicateLabel {
        category: CaptionCategory,
        label: String,
    },
    #[error("vocabulary for {0} is defined twice")]
    DuplicateVocabulary(CaptionCategory),
    #[error(
        "map_type vocabulary must start with [\"pictorial map\", \"topographic map\"], got {0:?}"
    )]
    BadMapTypeVocabulary(Vec<String>),
    #[error("vocabulary config: {0}")]
    Config(String),
}

/// One classification axis of a map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionCategory {
    MapType,
    LocationTopo,
    Style,
    Century,
    LocationPict,
    Topic,
}

impl CaptionCategory {
    /// All six categories in report column order.
    pub const ALL: [CaptionCategory; 6] = [
        CaptionCategory::MapType,
        CaptionCategory::LocationTopo,
        CaptionCategory::Style,
        CaptionCategory::Century,
        CaptionCategory::LocationPict,
        CaptionCategory::Topic,
    ];

    pub fn id(self) -> &'static str {
        match self {
            CaptionCategory::MapType => "map_type",
            CaptionCategory::LocationTopo => "location_topo",
            CaptionCategory::Style => "style",
            CaptionCategory::Century => "century",
            CaptionCategory::LocationPict => "location_pict",
            CaptionCategory::Topic => "topic",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            CaptionCategory::MapType => "Map Type",
            CaptionCategory::LocationTopo => "Location (topo.)",
            CaptionCategory::Style => "Style",
            CaptionCategory::Century => "Century",
            CaptionCategory::LocationPict => "Location (pict.)",
            CaptionCategory::Topic => "Topic",
        }
    }

    /// Only the map type may sit at the root of a decision tree.
    pub fn is_root_legal(self) -> bool {
        self == CaptionCategory::MapType
    }

    pub fn aspect(self) -> Aspect {
        aspect_of(self)
    }
}

impl fmt::Display for CaptionCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for CaptionCategory {
    type Err = TaxonomyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim();
        CaptionCategory::ALL
            .into_iter()
            .find(|c| c.id() == key)
            .ok_or_else(|| TaxonomyError::UnknownCategory(s.to_string()))
    }
}

/// One of the four story questions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aspect {
    Where,
    What,
    When,
    Why,
}

impl Aspect {
    pub const ALL: [Aspect; 4] = [Aspect::Where, Aspect::What, Aspect::When, Aspect::Why];

    pub fn id(self) -> &'static str {
        match self {
            Aspect::Where => "where",
            Aspect::What => "what",
            Aspect::When => "when",
            Aspect::Why => "why",
        }
    }

    /// Question clause substituted into the story prompt.
    pub fn question(self) -> &'static str {
        match self {
            Aspect::Where => "where the map depicts",
            Aspect::What => "what the map type, style and topic are",
            Aspect::When => "when the map was created",
            Aspect::Why => "why the map was created and how it can be used",
        }
    }
}

impl fmt::Display for Aspect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Aspect {
    type Err = TaxonomyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase();
        Aspect::ALL
            .into_iter()
            .find(|a| a.id() == key)
            .ok_or_else(|| TaxonomyError::UnknownAspect(s.to_string()))
    }
}

/// Parses a comma-separated aspect list such as `"where,what,why"`.
///
/// Empty segments are ignored; an entirely empty list is returned as empty
/// and left for the caller to reject.
pub fn parse_aspects(list: &str) -> Result<Vec<Aspect>, TaxonomyError> {
    let mut out = Vec::new();
    for part in list.split(',') {
        if part.trim().is_empty() {
            continue;
        }
        let aspect: Aspect = part.parse()?;
        if !out.contains(&aspect) {
            out.push(aspect);
        }
    }
    out.sort();
    Ok(out)
}

/// Which story question a category answers. `why` has no category.
pub fn aspect_of(category: CaptionCategory) -> Aspect {
    match category {
        CaptionCategory::MapType | CaptionCategory::Style | CaptionCategory::Topic => Aspect::What,
        CaptionCategory::LocationTopo | CaptionCategory::LocationPict => Aspect::Where,
        CaptionCategory::Century => Aspect::When,
    }
}

pub const PICTORIAL_MAP: &str = "pictorial map";
pub const TOPOGRAPHIC_MAP: &str = "topographic map";

/// Categories classified after the root for the given map type, in order.
pub fn categories_for(map_type_label: &str) -> Result<Vec<CaptionCategory>, TaxonomyError> {
    match normalize_label(map_type_label).as_str() {
        TOPOGRAPHIC_MAP => Ok(vec![
            CaptionCategory::LocationTopo,
            CaptionCategory::Style,
            CaptionCategory::Century,
        ]),
        PICTORIAL_MAP => Ok(vec![CaptionCategory::LocationPict, CaptionCategory::Topic]),
        _ => Err(TaxonomyError::UnknownMapType(map_type_label.to_string())),
    }
}

/// Lowercase, trim, and collapse internal whitespace.
pub fn normalize_label(raw: &str) -> String {
    raw.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VocabularySource {
    Builtin,
    DerivedFromManifest,
}

/// Closed, ordered label set of one category. Order is the tie-break order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassVocabulary {
    pub category: CaptionCategory,
    labels: Vec<String>,
    pub source: VocabularySource,
}

impl ClassVocabulary {
    pub fn new<I, S>(
        category: CaptionCategory,
        labels: I,
        source: VocabularySource,
    ) -> Result<Self, TaxonomyError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut out: Vec<String> = Vec::new();
        for raw in labels {
            let label = normalize_label(raw.as_ref());
            if label.is_empty() {
                return Err(TaxonomyError::EmptyLabel { category });
            }
            if out.contains(&label) {
                return Err(TaxonomyError::DuplicateLabel { category, label });
            }
            out.push(label);
        }
        Ok(ClassVocabulary {
            category,
            labels: out,
            source,
        })
    }

    /// The fixed two-class map type vocabulary.
    pub fn map_type() -> Self {
        ClassVocabulary {
            category: CaptionCategory::MapType,
            labels: vec![PICTORIAL_MAP.to_string(), TOPOGRAPHIC_MAP.to_string()],
            source: VocabularySource::Builtin,
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        let key = normalize_label(label);
        self.labels.iter().position(|l| *l == key)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index_of(label).is_some()
    }
}

/// A predicted label for one category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordCaption {
    pub category: CaptionCategory,
    pub label: String,
    pub confidence: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VocabularyFile {
    #[serde(default)]
    vocabulary: Vec<VocabularyEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VocabularyEntry {
    category: String,
    labels: Vec<String>,
    #[serde(default)]
    template: Option<String>,
}

/// Vocabularies for every configured category plus optional prompt
/// templates, as loaded from the vocabulary config file.
#[derive(Debug, Clone, Default)]
pub struct VocabularySet {
    vocabularies: IndexMap<CaptionCategory, ClassVocabulary>,
    templates: IndexMap<CaptionCategory, String>,
}

impl VocabularySet {
    pub fn new() -> Self {
        let mut set = VocabularySet::default();
        set.insert(ClassVocabulary::map_type());
        set
    }

    pub fn from_toml_str(text: &str) -> Result<Self, TaxonomyError> {
        let file: VocabularyFile =
            toml::from_str(text).map_err(|e| TaxonomyError::Config(e.to_string()))?;
        let mut set = VocabularySet::default();
        for entry in file.vocabulary {
            let category: CaptionCategory = entry.category.parse()?;
            if set.vocabularies.contains_key(&category) {
                return Err(TaxonomyError::DuplicateVocabulary(category));
            }
            let vocab = ClassVocabulary::new(category, &entry.labels, VocabularySource::Builtin)?;
            if category == CaptionCategory::MapType {
                // Extensions may append map types; the first two are fixed.
                let base = ClassVocabulary::map_type();
                if vocab.labels().get(..2) != Some(base.labels()) {
                    return Err(TaxonomyError::BadMapTypeVocabulary(vocab.labels.clone()));
                }
            }
            set.vocabularies.insert(category, vocab);
            if let Some(t) = entry.template {
                set.templates.insert(category, t);
            }
        }
        if !set.vocabularies.contains_key(&CaptionCategory::MapType) {
            set.vocabularies
                .insert(CaptionCategory::MapType, ClassVocabulary::map_type());
        }
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self, TaxonomyError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TaxonomyError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        let mut out = String::new();
        for vocab in self.vocabularies.values() {
            out.push_str("[[vocabulary]]\n");
            out.push_str(&format!("category = {:?}\n", vocab.category.id()));
            let labels: Vec<String> = vocab.labels.iter().map(|l| format!("{l:?}")).collect();
            out.push_str(&format!("labels = [{}]\n", labels.join(", ")));
            if let Some(t) = self.templates.get(&vocab.category) {
                out.push_str(&format!("template = {t:?}\n"));
            }
            out.push('\n');
        }
        out
    }

    pub fn insert(&mut self, vocab: ClassVocabulary) {
        self.vocabularies.insert(vocab.category, vocab);
    }

    pub fn set_template(&mut self, category: CaptionCategory, template: impl Into<String>) {
        self.templates.insert(category, template.into());
    }

    pub fn get(&self, category: CaptionCategory) -> Option<&ClassVocabulary> {
        self.vocabularies.get(&category)
    }

    pub fn template(&self, category: CaptionCategory) -> Option<&str> {
        self.templates.get(&category).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ClassVocabulary> {
        self.vocabularies.values()
    }

    /// The category whose vocabulary holds `label`, if exactly one does.
    pub fn category_of(&self, label: &str) -> Option<CaptionCategory> {
        let mut hits = self
            .iter()
            .filter(|v| v.contains(label))
            .map(|v| v.category);
        let first = hits.next()?;
        hits.next().is_none().then_some(first)
    }
}
