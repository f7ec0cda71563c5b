use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use indexmap::IndexMap;
use serde::Deserialize;

use super::manifest::{DatasetManifest, Sample, Split};
use super::parse::{derive_century, extract_style_keywords, parse_location};
use super::prune::{prune_classes, PruningPolicy};
use super::records::{load_corpus, MapRecord, RepositoryCategory};
use super::split::split_train_test;
use super::{decode_image, preprocess_image, IngestError, PreprocessConfig};
use crate::taxonomy::{
    normalize_label, CaptionCategory, ClassVocabulary, VocabularySource, PICTORIAL_MAP,
    TOPOGRAPHIC_MAP,
};

/// Joiner for multi-keyword style classes.
const STYLE_JOINER: &str = " with ";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoryRules {
    #[serde(default)]
    pub gazetteer: Vec<String>,
    #[serde(default)]
    pub lexicon: Vec<String>,
    #[serde(default)]
    pub pruning: Option<PruningPolicy>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitDefaults {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_fraction")]
    pub test_fraction: f64,
}

fn default_seed() -> u64 {
    7
}

fn default_fraction() -> f64 {
    0.2
}

impl Default for SplitDefaults {
    fn default() -> Self {
        SplitDefaults {
            seed: default_seed(),
            test_fraction: default_fraction(),
        }
    }
}

/// Dataset build configuration (TOML).
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildConfig {
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub split: SplitDefaults,
    pub location_topo: Option<CategoryRules>,
    pub style: Option<CategoryRules>,
    pub century: Option<CategoryRules>,
    pub location_pict: Option<CategoryRules>,
    pub topic: Option<CategoryRules>,
}

impl BuildConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, IngestError> {
        let cfg: BuildConfig =
            toml::from_str(text).map_err(|e| IngestError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    fn rules(&self, category: CaptionCategory) -> Option<&CategoryRules> {
        match category {
            CaptionCategory::MapType => None,
            CaptionCategory::LocationTopo => self.location_topo.as_ref(),
            CaptionCategory::Style => self.style.as_ref(),
            CaptionCategory::Century => self.century.as_ref(),
            CaptionCategory::LocationPict => self.location_pict.as_ref(),
            CaptionCategory::Topic => self.topic.as_ref(),
        }
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.preprocess.max_side_px == 0 {
            return Err(IngestError::Config(
                "preprocess.max_side_px must be > 0".into(),
            ));
        }
        for category in CaptionCategory::ALL {
            let Some(rules) = self.rules(category) else {
                continue;
            };
            if let Some(p) = &rules.pruning {
                p.validate()?;
            }
            let needs_gazetteer = matches!(
                category,
                CaptionCategory::LocationTopo | CaptionCategory::LocationPict
            );
            let needs_lexicon = matches!(category, CaptionCategory::Style | CaptionCategory::Topic);
            if needs_gazetteer && rules.gazetteer.is_empty() {
                return Err(IngestError::Config(format!(
                    "{category}: gazetteer must be non-empty"
                )));
            }
            if needs_lexicon && rules.lexicon.is_empty() {
                return Err(IngestError::Config(format!(
                    "{category}: lexicon must be non-empty"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BuildOutput {
    /// One manifest per category, in report column order.
    pub manifests: Vec<DatasetManifest>,
    pub log: Vec<String>,
}

impl BuildOutput {
    pub fn manifest(&self, category: CaptionCategory) -> Option<&DatasetManifest> {
        self.manifests.iter().find(|m| m.category == category)
    }
}

fn branch_of(category: CaptionCategory) -> Option<RepositoryCategory> {
    match category {
        CaptionCategory::MapType => None,
        CaptionCategory::LocationTopo | CaptionCategory::Style | CaptionCategory::Century => {
            Some(RepositoryCategory::Classical)
        }
        CaptionCategory::LocationPict | CaptionCategory::Topic => {
            Some(RepositoryCategory::PictorialMap)
        }
    }
}

fn raw_label(
    category: CaptionCategory,
    record: &MapRecord,
    rules: &CategoryRules,
) -> Option<String> {
    match category {
        CaptionCategory::MapType => match record.repository_category {
            RepositoryCategory::Classical => Some(TOPOGRAPHIC_MAP.to_string()),
            RepositoryCategory::PictorialMap => Some(PICTORIAL_MAP.to_string()),
            RepositoryCategory::Other => None,
        },
        CaptionCategory::LocationTopo | CaptionCategory::LocationPict => {
            parse_location(&record.title, &record.metadata_location, &rules.gazetteer)
        }
        CaptionCategory::Style => {
            let found = extract_style_keywords(&record.description, &rules.lexicon);
            (!found.is_empty()).then(|| found.join(STYLE_JOINER))
        }
        CaptionCategory::Century => derive_century(&record.date_field),
        CaptionCategory::Topic => {
            let text = format!("{}. {}", record.title, record.description);
            extract_style_keywords(&text, &rules.lexicon)
                .into_iter()
                .next()
        }
    }
}

fn build_one(
    category: CaptionCategory,
    records: &[MapRecord],
    config: &BuildConfig,
    log: &mut Vec<String>,
) -> Result<DatasetManifest, IngestError> {
    let empty_rules = CategoryRules::default();
    let rules = match (category, config.rules(category)) {
        (CaptionCategory::MapType, _) => &empty_rules,
        (CaptionCategory::Century, r) => r.unwrap_or(&empty_rules),
        (_, Some(r)) => r,
        (_, None) => {
            log.push(format!(
                "{category}: no rules configured, manifest left empty"
            ));
            return Ok(DatasetManifest {
                category,
                samples: Vec::new(),
                class_labels: ClassVocabulary::new(
                    category,
                    Vec::<String>::new(),
                    VocabularySource::DerivedFromManifest,
                )?,
                split: Split::Train,
            });
        }
    };

    let eligible = records
        .iter()
        .filter(|r| branch_of(category).is_none_or(|b| b == r.repository_category));
    let mut labelled: Vec<(&MapRecord, String)> = Vec::new();
    let mut underivable = 0usize;
    for record in eligible {
        match raw_label(category, record, rules) {
            Some(raw) => {
                let label = match &rules.pruning {
                    Some(p) => p.merge(&raw),
                    None => normalize_label(&raw),
                };
                labelled.push((record, label));
            }
            None => underivable += 1,
        }
    }

    let mut counts: IndexMap<String, usize> = IndexMap::new();
    for (_, label) in &labelled {
        *counts.entry(label.clone()).or_insert(0) += 1;
    }
    let (class_labels, source) = if category == CaptionCategory::MapType {
        (
            ClassVocabulary::map_type().labels().to_vec(),
            VocabularySource::Builtin,
        )
    } else {
        let kept = match &rules.pruning {
            Some(p) if !counts.is_empty() => prune_classes(&counts, p)?,
            _ => counts.keys().cloned().collect(),
        };
        (kept, VocabularySource::DerivedFromManifest)
    };
    let class_labels = ClassVocabulary::new(category, &class_labels, source)?;

    let mut seen = HashSet::new();
    let mut samples = Vec::new();
    let mut pruned = 0usize;
    for (record, label) in labelled {
        if !class_labels.contains(&label) {
            pruned += 1;
            continue;
        }
        if !seen.insert(record.image_ref.clone()) {
            log.push(format!(
                "{category}: record {} repeats image {}, skipped",
                record.id, record.image_ref
            ));
            continue;
        }
        samples.push(Sample {
            image_ref: record.image_ref.clone(),
            label,
        });
    }
    log.push(format!(
        "{category}: {} samples, {} classes ({} underivable, {} pruned)",
        samples.len(),
        class_labels.len(),
        underivable,
        pruned
    ));
    if samples.is_empty() {
        log.push(format!("{category}: manifest is empty"));
    }
    let manifest = DatasetManifest {
        category,
        samples,
        class_labels,
        split: Split::Train,
    };
    manifest.validate()?;
    Ok(manifest)
}

/// Builds the full (unsplit) manifest of every category from `records`.
pub fn build_manifests(
    records: &[MapRecord],
    config: &BuildConfig,
) -> Result<BuildOutput, IngestError> {
    if records.is_empty() {
        return Err(IngestError::Corpus("no records".into()));
    }
    let mut sorted = records.to_vec();
    super::records::validate_records(&mut sorted)?;
    let mut log = Vec::new();
    let other = sorted
        .iter()
        .filter(|r| r.repository_category == RepositoryCategory::Other)
        .count();
    if other > 0 {
        log.push(format!(
            "{other} records outside the classical/pictorial categories ignored"
        ));
    }
    let manifests = CaptionCategory::ALL
        .into_iter()
        .map(|c| build_one(c, &sorted, config, &mut log))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BuildOutput { manifests, log })
}

/// Per-category class list and sample counts, one block per manifest.
pub fn render_summary(manifests: &[DatasetManifest]) -> String {
    let mut out = String::new();
    for m in manifests {
        let _ = writeln!(out, "{}\t{}\t{}", m.category, m.len(), m.class_labels.len());
        for label in m.class_labels.labels() {
            let n = m.samples.iter().filter(|s| s.label == *label).count();
            let _ = writeln!(out, "\t{label}\t{n}");
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct BuildSummary {
    pub output: BuildOutput,
    pub files: Vec<std::path::PathBuf>,
}

fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Full dataset build: load records, preprocess images into `out/images`,
/// build and split manifests, write them plus `build.log` into `out`.
pub fn run_build(
    corpus: &Path,
    out: &Path,
    config: &BuildConfig,
    seed: u64,
    test_fraction: f64,
) -> Result<BuildSummary, IngestError> {
    let records = load_corpus(corpus)?;
    let image_dir = out.join("images");
    std::fs::create_dir_all(&image_dir).map_err(|e| IngestError::io(&image_dir, e))?;

    let mut log = Vec::new();
    let mut usable = Vec::new();
    for mut record in records {
        if record.image_ref.contains("://") {
            log.push(format!(
                "record {}: remote image {} not downloaded, skipped",
                record.id, record.image_ref
            ));
            continue;
        }
        let src = corpus.join(&record.image_ref);
        let bytes = match std::fs::read(&src) {
            Ok(b) => b,
            Err(e) => {
                log.push(format!(
                    "record {}: cannot read {}: {e}, skipped",
                    record.id,
                    src.display()
                ));
                continue;
            }
        };
        let img = match decode_image(&bytes) {
            Ok(img) => preprocess_image(&img, &config.preprocess),
            Err(e) => {
                log.push(format!("record {}: {e}, skipped", record.id));
                continue;
            }
        };
        let rel = format!("images/{}.png", file_stem(&record.id));
        let dst = out.join(&rel);
        img.to_rgb8()
            .save(&dst)
            .map_err(|e| IngestError::Decode(format!("{}: {e}", dst.display())))?;
        record.image_ref = rel;
        usable.push(record);
    }
    if usable.is_empty() {
        return Err(IngestError::Corpus("no record has a usable image".into()));
    }

    let mut output = build_manifests(&usable, config)?;
    log.append(&mut output.log);
    let mut files = Vec::new();
    for manifest in &output.manifests {
        let (train, test) = if manifest.is_empty() {
            let mut test = manifest.clone();
            test.split = Split::Test;
            (manifest.clone(), test)
        } else {
            split_train_test(manifest, test_fraction, seed)?
        };
        log.push(format!(
            "{}: split {} train / {} test",
            manifest.category,
            train.len(),
            test.len()
        ));
        files.push(train.write(out)?);
        files.push(test.write(out)?);
    }
    let log_path = out.join("build.log");
    let mut text = log.join("\n");
    text.push('\n');
    std::fs::write(&log_path, text).map_err(|e| IngestError::io(&log_path, e))?;
    output.log = log;
    Ok(BuildSummary { output, files })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> BuildConfig {
        BuildConfig::from_toml_str(
            r#"
[location_topo]
gazetteer = ["France", "Europe"]

[style]
lexicon = ["hand-colored", "engraved", "pictorial relief"]

[location_pict]
gazetteer = ["World", "United States"]

[topic]
lexicon = ["flight network", "military"]
"#,
        )
        .unwrap()
    }

    fn rec(id: &str, cat: RepositoryCategory, title: &str, desc: &str, date: &str) -> MapRecord {
        MapRecord {
            id: id.into(),
            image_ref: format!("{id}.png"),
            title: title.into(),
            metadata_location: String::new(),
            description: desc.into(),
            date_field: date.into(),
            repository_category: cat,
        }
    }

    #[test]
    fn single_topographic_record_reaches_four_manifests() {
        let out = build_manifests(
            &[rec(
                "a",
                RepositoryCategory::Classical,
                "Map of France",
                "engraved",
                "1780",
            )],
            &config(),
        )
        .unwrap();
        let sizes: Vec<_> = out
            .manifests
            .iter()
            .map(|m| (m.category, m.len()))
            .collect();
        assert_eq!(
            sizes,
            vec![
                (CaptionCategory::MapType, 1),
                (CaptionCategory::LocationTopo, 1),
                (CaptionCategory::Style, 1),
                (CaptionCategory::Century, 1),
                (CaptionCategory::LocationPict, 0),
                (CaptionCategory::Topic, 0),
            ]
        );
        assert_eq!(
            out.manifest(CaptionCategory::LocationTopo).unwrap().samples[0].label,
            "france"
        );
        assert_eq!(
            out.manifest(CaptionCategory::Century).unwrap().samples[0].label,
            "18th century"
        );
    }

    #[test]
    fn compound_style_class() {
        let out = build_manifests(
            &[rec(
                "a",
                RepositoryCategory::Classical,
                "x",
                "Hand-colored, with pictorial relief",
                "",
            )],
            &config(),
        )
        .unwrap();
        assert_eq!(
            out.manifest(CaptionCategory::Style).unwrap().samples[0].label,
            "hand-colored with pictorial relief"
        );
    }

    #[test]
    fn map_type_counts_both_branches() {
        let rs = vec![
            rec("a", RepositoryCategory::Classical, "", "", ""),
            rec(
                "b",
                RepositoryCategory::PictorialMap,
                "World air routes",
                "flight network",
                "1950",
            ),
            rec("c", RepositoryCategory::Other, "", "", ""),
        ];
        let out = build_manifests(&rs, &config()).unwrap();
        let mt = out.manifest(CaptionCategory::MapType).unwrap();
        assert_eq!(mt.len(), 2);
        assert_eq!(mt.samples[1].label, "pictorial map");
        // Pictorial maps never feed the century manifest.
        assert!(out.manifest(CaptionCategory::Century).unwrap().is_empty());
        assert_eq!(
            out.manifest(CaptionCategory::Topic).unwrap().samples[0].label,
            "flight network"
        );
    }

    #[test]
    fn missing_lexicon_rejected() {
        assert!(BuildConfig::from_toml_str("[style]\nlexicon = []\n").is_err());
        assert!(BuildConfig::from_toml_str("[preprocess]\nmax_side_px = 0\n").is_err());
    }
}
