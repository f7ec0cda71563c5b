use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::taxonomy::{CaptionCategory, ClassVocabulary, VocabularySource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn id(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub image_ref: String,
    pub label: String,
}

/// The (image, label) samples of one category and split.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub category: CaptionCategory,
    pub samples: Vec<Sample>,
    pub class_labels: ClassVocabulary,
    pub split: Split,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    category: CaptionCategory,
    labels: Vec<String>,
    count: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    image: String,
    label: String,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<(), IngestError> {
        let mut seen = HashSet::new();
        for s in &self.samples {
            if !self.class_labels.contains(&s.label) {
                return Err(IngestError::Manifest(format!(
                    "{}: label {:?} not in class list",
                    self.category, s.label
                )));
            }
            if !seen.insert(s.image_ref.as_str()) {
                return Err(IngestError::Manifest(format!(
                    "{}: duplicate image {:?}",
                    self.category, s.image_ref
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn file_name(&self) -> String {
        format!("{}.{}.manifest", self.category.id(), self.split.id())
    }

    /// Header line with `category`, `labels`, `count`, then one line per sample.
    pub fn to_text(&self) -> String {
        let header = Header {
            category: self.category,
            labels: self.class_labels.labels().to_vec(),
            count: self.samples.len(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for s in &self.samples {
            let line = Line {
                image: s.image_ref.clone(),
                label: s.label.clone(),
            };
            let _ = writeln!(
                out,
                "{}",
                serde_json::to_string(&line).expect("line serializes")
            );
        }
        out
    }

    pub fn from_text(text: &str, split: Split) -> Result<Self, IngestError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Header = serde_json::from_str(lines.next().ok_or(IngestError::EmptyManifest)?)
            .map_err(|e| IngestError::Manifest(format!("header: {e}")))?;
        let class_labels = ClassVocabulary::new(
            header.category,
            &header.labels,
            VocabularySource::DerivedFromManifest,
        )?;
        let mut samples = Vec::new();
        for (i, l) in lines.enumerate() {
            let line: Line = serde_json::from_str(l)
                .map_err(|e| IngestError::Manifest(format!("line {}: {e}", i + 2)))?;
            samples.push(Sample {
                image_ref: line.image,
                label: line.label,
            });
        }
        if samples.len() != header.count {
            return Err(IngestError::Manifest(format!(
                "header declares {} samples, found {}",
                header.count,
                samples.len()
            )));
        }
        let manifest = DatasetManifest {
            category: header.category,
            samples,
            class_labels,
            split,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn read(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default();
        let split = if name.contains(".test.") {
            Split::Test
        } else {
            Split::Train
        };
        Self::from_text(&text, split)
    }

    pub fn write(&self, dir: &Path) -> Result<std::path::PathBuf, IngestError> {
        let path = dir.join(self.file_name());
        std::fs::write(&path, self.to_text()).map_err(|e| IngestError::io(&path, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn manifest(samples: Vec<(String, usize)>, labels: &[&str]) -> DatasetManifest {
        DatasetManifest {
            category: CaptionCategory::Topic,
            samples: samples
                .into_iter()
                .map(|(i, l)| Sample {
                    image_ref: i,
                    label: labels[l].to_string(),
                })
                .collect(),
            class_labels: ClassVocabulary::new(
                CaptionCategory::Topic,
                labels,
                VocabularySource::DerivedFromManifest,
            )
            .unwrap(),
            split: Split::Test,
        }
    }

    #[test]
    fn header_format() {
        let m = manifest(
            vec![("images/a.png".into(), 0)],
            &["flight network", "military"],
        );
        assert_eq!(
            m.to_text(),
            "{\"category\":\"topic\",\"labels\":[\"flight network\",\"military\"],\"count\":1}\n\
             {\"image\":\"images/a.png\",\"label\":\"flight network\"}\n"
        );
        assert_eq!(m.file_name(), "topic.test.manifest");
    }

    #[test]
    fn count_mismatch_rejected() {
        let text = "{\"category\":\"topic\",\"labels\":[\"a\"],\"count\":2}\n{\"image\":\"x\",\"label\":\"a\"}\n";
        assert!(matches!(
            DatasetManifest::from_text(text, Split::Train),
            Err(IngestError::Manifest(_))
        ));
    }

    #[test]
    fn foreign_label_rejected() {
        let text = "{\"category\":\"topic\",\"labels\":[\"a\"],\"count\":1}\n{\"image\":\"x\",\"label\":\"b\"}\n";
        assert!(DatasetManifest::from_text(text, Split::Train).is_err());
    }

    proptest! {
        #[test]
        fn text_round_trip(picks in proptest::collection::vec(0usize..3, 0..20)) {
            let samples = picks.iter().enumerate().map(|(i, l)| (format!("img/{i}.png"), *l)).collect();
            let m = manifest(samples, &["a", "b c", "d\"e"]);
            let back = DatasetManifest::from_text(&m.to_text(), Split::Test).unwrap();
            prop_assert_eq!(back.samples, m.samples);
            prop_assert_eq!(back.class_labels.labels(), m.class_labels.labels());
        }
    }
}
