use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IngestError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepositoryCategory {
    Classical,
    PictorialMap,
    Other,
}

/// One raw repository entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapRecord {
    pub id: String,
    pub image_ref: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub metadata_location: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub date_field: String,
    pub repository_category: RepositoryCategory,
}

/// Reads every `*.json` record in `dir`, sorted by id.
pub fn load_corpus(dir: &Path) -> Result<Vec<MapRecord>, IngestError> {
    let entries = std::fs::read_dir(dir).map_err(|e| IngestError::io(dir, e))?;
    let mut records = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| IngestError::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let text = std::fs::read_to_string(&path).map_err(|e| IngestError::io(&path, e))?;
        let record: MapRecord = serde_json::from_str(&text)
            .map_err(|e| IngestError::Corpus(format!("{}: {e}", path.display())))?;
        records.push(record);
    }
    validate_records(&mut records)?;
    Ok(records)
}

pub(crate) fn validate_records(records: &mut [MapRecord]) -> Result<(), IngestError> {
    let mut seen = HashSet::new();
    for r in records.iter() {
        if r.image_ref.trim().is_empty() {
            return Err(IngestError::Corpus(format!(
                "record {:?} has an empty image_ref",
                r.id
            )));
        }
        if !seen.insert(r.id.as_str()) {
            return Err(IngestError::Corpus(format!(
                "duplicate record id {:?}",
                r.id
            )));
        }
    }
    records.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(())
}
