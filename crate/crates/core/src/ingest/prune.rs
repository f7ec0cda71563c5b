use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::taxonomy::normalize_label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneMode {
    TopK,
    MinCount,
    ExplicitList,
}

/// How to reduce a long-tailed label distribution to a class list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PruningPolicy {
    pub mode: PruneMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keep: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merge_map: Option<IndexMap<String, String>>,
}

impl PruningPolicy {
    fn bare(mode: PruneMode) -> Self {
        PruningPolicy {
            mode,
            k: None,
            min_count: None,
            keep: None,
            merge_map: None,
        }
    }

    pub fn top_k(k: usize) -> Self {
        PruningPolicy {
            k: Some(k),
            ..Self::bare(PruneMode::TopK)
        }
    }

    pub fn min_count(min_count: usize) -> Self {
        PruningPolicy {
            min_count: Some(min_count),
            ..Self::bare(PruneMode::MinCount)
        }
    }

    pub fn explicit_list<I: IntoIterator<Item = S>, S: Into<String>>(keep: I) -> Self {
        PruningPolicy {
            keep: Some(keep.into_iter().map(Into::into).collect()),
            ..Self::bare(PruneMode::ExplicitList)
        }
    }

    pub fn with_merge_map(mut self, merge: IndexMap<String, String>) -> Self {
        self.merge_map = Some(merge);
        self
    }

    /// Exactly the fields required by `mode` must be present.
    pub fn validate(&self) -> Result<(), IngestError> {
        let (has_k, has_min, has_keep) = (
            self.k.is_some(),
            self.min_count.is_some(),
            self.keep.is_some(),
        );
        let ok = match self.mode {
            PruneMode::TopK => has_k && !has_min && !has_keep,
            PruneMode::MinCount => has_min && !has_k && !has_keep,
            PruneMode::ExplicitList => has_keep && !has_k && !has_min,
        };
        if ok {
            Ok(())
        } else {
            Err(IngestError::InvalidPolicy(format!(
                "mode {:?} requires exactly its own field (k={:?}, min_count={:?}, keep={:?})",
                self.mode, self.k, self.min_count, self.keep
            )))
        }
    }

    /// Applies the merge map to one (normalized) label.
    pub fn merge(&self, label: &str) -> String {
        let key = normalize_label(label);
        self.merge_map
            .as_ref()
            .and_then(|m| m.iter().find(|(from, _)| normalize_label(from) == key))
            .map(|(_, to)| normalize_label(to))
            .unwrap_or(key)
    }
}

/// Labels kept under `policy`, in the insertion order of `counts`
/// (`explicit_list` keeps its own order). Ties at the `top_k` cut go to the
/// label inserted first.
pub fn prune_classes(
    counts: &IndexMap<String, usize>,
    policy: &PruningPolicy,
) -> Result<Vec<String>, IngestError> {
    policy.validate()?;
    let mut merged: IndexMap<String, usize> = IndexMap::new();
    for (label, n) in counts {
        *merged.entry(policy.merge(label)).or_insert(0) += n;
    }
    let kept = match policy.mode {
        PruneMode::TopK => {
            let k = policy.k.unwrap_or(0);
            let mut ranked: Vec<(usize, &String, usize)> = merged
                .iter()
                .enumerate()
                .map(|(i, (l, n))| (i, l, *n))
                .collect();
            ranked.sort_by(|a, b| b.2.cmp(&a.2).then(a.0.cmp(&b.0)));
            let mut chosen: Vec<usize> = ranked.iter().take(k).map(|r| r.0).collect();
            chosen.sort_unstable();
            chosen
                .into_iter()
                .map(|i| merged.get_index(i).expect("index").0.clone())
                .collect()
        }
        PruneMode::MinCount => {
            let threshold = policy.min_count.unwrap_or(0);
            merged
                .iter()
                .filter(|(_, n)| **n >= threshold)
                .map(|(l, _)| l.clone())
                .collect()
        }
        PruneMode::ExplicitList => {
            let mut out: Vec<String> = Vec::new();
            for l in policy.keep.iter().flatten().map(|l| normalize_label(l)) {
                if !out.contains(&l) {
                    out.push(l);
                }
            }
            out
        }
    };
    Ok(kept)
}
