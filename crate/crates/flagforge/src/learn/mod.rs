//! Optimization prediction from static program features: reaction
//! matrices, workload labeling, nearest-neighbor and decision-tree
//! classifiers with leave-one-out cross-validation, depth autotuning and
//! greedy feature-set reduction.
//!
//! Feature ids follow the documented groups: ft1..ft56 are the original
//! static features, ft57..ft65 are additional features ingested from
//! files, and ft66..ft121 are the originals normalized by the total
//! instruction count (ft24).

mod model;

pub use model::{
    autotune_depth, in_sample_accuracy, loo_cv, predict, reduce_features, train, DepthPoint,
    Model, ModelKind, ModelSpec, ReductionMode,
};

use std::collections::BTreeMap;
use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::stats;
use crate::store::Store;
use crate::uid;

pub const MAX_FEATURE_ID: u32 = 121;
pub const NORMALIZED_BASE: u32 = 65;
pub const TOTAL_INSTRUCTIONS_FEATURE: u32 = 24;

/// Feature values of one workload, keyed by feature index (ft1..ft121).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub workload: String,
    pub values: BTreeMap<u32, f64>,
    /// Set when normalization hit ft24 = 0 and produced zeros.
    pub degenerate: bool,
}

impl FeatureVector {
    pub fn new(workload: impl Into<String>) -> Self {
        FeatureVector { workload: workload.into(), values: BTreeMap::new(), degenerate: false }
    }

    pub fn with(mut self, id: u32, value: f64) -> Self {
        self.values.insert(id, value);
        self
    }

    pub fn get(&self, id: u32) -> Option<f64> {
        self.values.get(&id).copied()
    }

    /// Parse a JSON mapping {"ft1": number, ...}. Missing keys stay
    /// absent; non-numeric values and unknown keys are malformed.
    pub fn from_json(workload: &str, text: &str) -> Result<FeatureVector> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| Error::invalid(format!("feature file not valid json: {e}")))?;
        let object = value
            .as_object()
            .ok_or_else(|| Error::invalid("feature file must be a json object"))?;
        let mut out = FeatureVector::new(workload);
        for (key, raw) in object {
            let id = parse_feature_id(key)?;
            let number = raw
                .as_f64()
                .ok_or_else(|| Error::invalid(format!("feature {key}: non-numeric value {raw}")))?;
            if !number.is_finite() {
                return Err(Error::invalid(format!("feature {key}: non-finite value")));
            }
            out.values.insert(id, number);
        }
        Ok(out)
    }
}

pub fn parse_feature_id(key: &str) -> Result<u32> {
    let id: u32 = key
        .strip_prefix("ft")
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| Error::invalid(format!("bad feature key {key:?} (want ftN)")))?;
    if id == 0 || id > MAX_FEATURE_ID {
        return Err(Error::invalid(format!("feature id {key} outside ft1..ft{MAX_FEATURE_ID}")));
    }
    Ok(id)
}

pub fn feature_name(id: u32) -> String {
    format!("ft{id}")
}

impl Serialize for FeatureVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Raw<'a> {
            workload: &'a str,
            values: BTreeMap<String, f64>,
            degenerate: bool,
        }
        // ftN keys sort numerically via the u32 map; keep insertion order
        // by padding is unnecessary since consumers re-parse ids.
        let values = self.values.iter().map(|(k, v)| (feature_name(*k), *v)).collect();
        Raw { workload: &self.workload, values, degenerate: self.degenerate }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FeatureVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            workload: String,
            values: BTreeMap<String, f64>,
            #[serde(default)]
            degenerate: bool,
        }
        let raw = Raw::deserialize(deserializer)?;
        let mut values = BTreeMap::new();
        for (key, value) in raw.values {
            let id = parse_feature_id(&key).map_err(D::Error::custom)?;
            values.insert(id, value);
        }
        Ok(FeatureVector { workload: raw.workload, values, degenerate: raw.degenerate })
    }
}

/// Extend a vector with ft66..ft121: each original feature divided by the
/// total instruction count (ft24). A zero ft24 yields zeros and marks the
/// vector degenerate instead of failing.
pub fn normalize_features(vector: &FeatureVector) -> Result<FeatureVector> {
    let total = vector
        .get(TOTAL_INSTRUCTIONS_FEATURE)
        .ok_or_else(|| Error::contract("normalization requires ft24"))?;
    let mut out = vector.clone();
    for i in 1..=56u32 {
        let Some(value) = vector.get(i) else { continue };
        let normalized = if total == 0.0 {
            out.degenerate = true;
            0.0
        } else {
            value / total
        };
        out.values.insert(NORMALIZED_BASE + i, normalized);
    }
    Ok(out)
}

/// Class label: the most efficient known optimization for a workload, or
/// the baseline when nothing beats it by the margin.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Baseline,
    Solution(String),
}

pub const BASELINE_LABEL: &str = "BASELINE";

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Baseline => f.write_str(BASELINE_LABEL),
            Label::Solution(uid) => f.write_str(uid),
        }
    }
}

impl From<&str> for Label {
    fn from(s: &str) -> Self {
        if s == BASELINE_LABEL {
            Label::Baseline
        } else {
            Label::Solution(s.to_string())
        }
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        Ok(Label::from(String::deserialize(deserializer)?.as_str()))
    }
}

/// workload x solution improvement ratios relative to the baseline. The
/// baseline column is implicit and identically 1.0.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReactionMatrix {
    pub solutions: Vec<String>,
    /// workload -> solution uid -> ratio; absent cells were untrustable or
    /// never measured.
    pub rows: BTreeMap<String, BTreeMap<String, f64>>,
}

impl ReactionMatrix {
    pub fn insert(&mut self, workload: &str, solution: &str, ratio: f64) {
        if !self.solutions.iter().any(|s| s == solution) {
            self.solutions.push(solution.to_string());
            self.solutions.sort();
        }
        self.rows
            .entry(workload.to_string())
            .or_default()
            .insert(solution.to_string(), ratio);
    }

    /// Build from stored autotune entries: one row per entry workload, one
    /// column per distinct rendered solution; cells are expected-value
    /// speedups over the entry baseline, untrustable comparisons omitted.
    pub fn from_entries(store: &Store, entry_uids: &[String], threshold: f64) -> Result<ReactionMatrix> {
        let mut matrix = ReactionMatrix::default();
        for entry_uid in entry_uids {
            let entry = store.load_entry(entry_uid)?;
            let Some(baseline) = entry.baseline.as_ref() else {
                eprintln!("warning: entry {entry_uid} has no baseline; row dropped");
                continue;
            };
            let Some(base_time) = baseline.characteristics.get("execution_time") else {
                eprintln!("warning: entry {entry_uid} baseline lacks execution_time; row dropped");
                continue;
            };
            for point_uid in &entry.points {
                let point = store.load_point(entry_uid, point_uid)?;
                let Some(chars) = point.characteristics.as_ref() else { continue };
                let Some(time) = chars.get("execution_time") else { continue };
                let comparison = stats::compare(base_time, time, threshold)?;
                if !comparison.trustable {
                    continue;
                }
                let ratio = stats::speedup_over_baseline(base_time, time)?;
                let solution = uid::content_uid(&point.rendered);
                let row = matrix.rows.entry(entry.workload.clone()).or_default();
                let cell = row.entry(solution.clone()).or_insert(ratio);
                if ratio > *cell {
                    *cell = ratio;
                }
                if !matrix.solutions.contains(&solution) {
                    matrix.solutions.push(solution);
                }
            }
        }
        matrix.solutions.sort();
        Ok(matrix)
    }

    /// Label each workload with its best solution when that solution beats
    /// the baseline by more than the margin; ties take the lowest uid.
    pub fn label_workloads(&self, margin: f64) -> Result<BTreeMap<String, Label>> {
        if self.rows.is_empty() {
            return Err(Error::contract("empty reaction matrix"));
        }
        let mut out = BTreeMap::new();
        for (workload, row) in &self.rows {
            let mut best: Option<(&String, f64)> = None;
            for (solution, ratio) in row {
                let better = match best {
                    None => true,
                    Some((_, r)) => *ratio > r,
                };
                if better {
                    best = Some((solution, *ratio));
                }
            }
            let label = match best {
                Some((solution, ratio)) if ratio > 1.0 + margin => {
                    Label::Solution(solution.clone())
                }
                _ => Label::Baseline,
            };
            out.insert(workload.clone(), label);
        }
        Ok(out)
    }

    /// Partition workload ids by label.
    pub fn group_workloads(&self, margin: f64) -> Result<BTreeMap<Label, Vec<String>>> {
        let labels = self.label_workloads(margin)?;
        let mut groups: BTreeMap<Label, Vec<String>> = BTreeMap::new();
        for (workload, label) in labels {
            groups.entry(label).or_default().push(workload);
        }
        Ok(groups)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledItem {
    pub features: FeatureVector,
    pub label: Label,
}

/// Training set for the classifiers.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub items: Vec<LabeledItem>,
}

impl LabeledDataset {
    pub fn from_parts(features: Vec<FeatureVector>, labels: &BTreeMap<String, Label>) -> Self {
        let mut items: Vec<LabeledItem> = features
            .into_iter()
            .filter_map(|fv| {
                labels
                    .get(&fv.workload)
                    .cloned()
                    .map(|label| LabeledItem { features: fv, label })
            })
            .collect();
        items.sort_by(|a, b| a.features.workload.cmp(&b.features.workload));
        LabeledDataset { items }
    }

    pub fn push(&mut self, features: FeatureVector, label: Label) {
        self.items.push(LabeledItem { features, label });
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// All feature ids present anywhere in the dataset, ascending.
    pub fn feature_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> =
            self.items.iter().flat_map(|i| i.features.values.keys().copied()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Drop one item (leave-one-out fold).
    pub fn without(&self, index: usize) -> LabeledDataset {
        let items = self
            .items
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != index)
            .map(|(_, item)| item.clone())
            .collect();
        LabeledDataset { items }
    }

    /// An ExperimentEntry-free description of where labels came from, for
    /// provenance in serialized datasets.
    pub fn describe(&self) -> String {
        format!("{} items, {} features", self.len(), self.feature_ids().len())
    }
}

/// Used by the CLI to pair registry feature files with matrix labels.
pub fn dataset_from_matrix(
    matrix: &ReactionMatrix,
    features: Vec<FeatureVector>,
    margin: f64,
) -> Result<LabeledDataset> {
    let labels = matrix.label_workloads(margin)?;
    Ok(LabeledDataset::from_parts(features, &labels))
}
