//! Per-category accuracy of a classifier backend on test manifests, and a
//! fixed-column text report comparing backends.

use std::fmt::Write as _;
use std::path::PathBuf;

use indexmap::IndexMap;
use serde::Serialize;

use crate::classify::ClassifyError;
use crate::ingest::{decode_image, DatasetManifest, IngestError, Sample};
use crate::taxonomy::CaptionCategory;
use crate::tree::Predictors;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("backend has no classifier for {0}")]
    MissingClassifier(CaptionCategory),
}

/// Something that labels a manifest sample for a category.
pub trait EvalBackend {
    fn name(&self) -> &str;
    fn predict_label(
        &self,
        category: CaptionCategory,
        sample: &Sample,
    ) -> Result<String, EvalError>;
}

/// Reads the ground-truth label back; a perfect predictor.
pub struct OracleBackend;

impl EvalBackend for OracleBackend {
    fn name(&self) -> &str {
        "oracle"
    }
    fn predict_label(&self, _: CaptionCategory, sample: &Sample) -> Result<String, EvalError> {
        Ok(sample.label.clone())
    }
}

/// Always answers the same string.
pub struct ConstantBackend(pub String);

impl EvalBackend for ConstantBackend {
    fn name(&self) -> &str {
        "constant"
    }
    fn predict_label(&self, _: CaptionCategory, _: &Sample) -> Result<String, EvalError> {
        Ok(self.0.clone())
    }
}

/// Loads each sample image relative to `image_root` and runs the category's
/// predictor on it.
pub struct PredictorBackend {
    pub name: String,
    pub predictors: Predictors,
    pub image_root: PathBuf,
}

impl EvalBackend for PredictorBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn predict_label(
        &self,
        category: CaptionCategory,
        sample: &Sample,
    ) -> Result<String, EvalError> {
        let predictor = self
            .predictors
            .get(&category)
            .ok_or(EvalError::MissingClassifier(category))?;
        let path = self.image_root.join(&sample.image_ref);
        let bytes = std::fs::read(&path).map_err(|e| IngestError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let image = decode_image(&bytes)?;
        Ok(predictor.predict(&image)?.caption.label)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CategoryResult {
    pub accuracies: IndexMap<CaptionCategory, f64>,
    pub average: f64,
    pub warnings: Vec<String>,
}

/// Exact correct/total per non-empty manifest; empty ones are skipped with a
/// warning. `average` is the unweighted mean over evaluated categories.
pub fn evaluate(
    backend: &dyn EvalBackend,
    manifests: &[DatasetManifest],
) -> Result<CategoryResult, EvalError> {
    let mut result = CategoryResult::default();
    for m in manifests {
        if m.is_empty() {
            let msg = format!("{}: test manifest is empty, skipped", m.category);
            log::warn!("{msg}");
            result.warnings.push(msg);
            continue;
        }
        let mut correct = 0usize;
        for s in &m.samples {
            if backend.predict_label(m.category, s)? == s.label {
                correct += 1;
            }
        }
        result
            .accuracies
            .insert(m.category, correct as f64 / m.len() as f64);
    }
    result.average = if result.accuracies.is_empty() {
        0.0
    } else {
        result.accuracies.values().sum::<f64>() / result.accuracies.len() as f64
    };
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BackendRow {
    pub accuracies: IndexMap<CaptionCategory, f64>,
    pub average: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub rows: IndexMap<String, BackendRow>,
    pub sample_counts: IndexMap<CaptionCategory, usize>,
}

impl EvaluationReport {
    pub fn add_row(
        &mut self,
        backend: impl Into<String>,
        accuracies: IndexMap<CaptionCategory, f64>,
    ) {
        let average = if accuracies.is_empty() {
            0.0
        } else {
            accuracies.values().sum::<f64>() / accuracies.len() as f64
        };
        self.rows.insert(
            backend.into(),
            BackendRow {
                accuracies,
                average,
            },
        );
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Fixed columns in category order plus `Ave. Acc.`, two decimals.
pub fn render_report(report: &EvaluationReport) -> String {
    let name_width = report
        .rows
        .keys()
        .map(|k| k.len())
        .chain(["Backend".len(), "# samples".len()])
        .max()
        .unwrap_or(9);
    let mut out = format!("{:<name_width$}", "Backend");
    for c in CaptionCategory::ALL {
        let _ = write!(out, " | {:>16}", c.display_name());
    }
    out.push_str(" | Ave. Acc.\n");
    for (name, row) in &report.rows {
        let _ = write!(out, "{name:<name_width$}");
        for c in CaptionCategory::ALL {
            match row.accuracies.get(&c) {
                Some(a) => {
                    let _ = write!(out, " | {a:>16.2}");
                }
                None => {
                    let _ = write!(out, " | {:>16}", "-");
                }
            }
        }
        let _ = writeln!(out, " | {:>9.2}", row.average);
    }
    if !report.sample_counts.is_empty() {
        let _ = write!(out, "{:<name_width$}", "# samples");
        for c in CaptionCategory::ALL {
            let n = report
                .sample_counts
                .get(&c)
                .map_or_else(|| "-".to_string(), |n| n.to_string());
            let _ = write!(out, " | {n:>16}");
        }
        out.push_str(" |\n");
    }
    out
}
