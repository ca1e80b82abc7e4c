//! Classifier implementations behind the model interface: 1-nearest
//! neighbor on z-scored features and a gini-split decision tree with
//! midpoint thresholds, plus leave-one-out cross-validation, tree-depth
//! autotuning and greedy feature-set reduction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{feature_name, FeatureVector, Label, LabeledDataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    /// 1-NN, euclidean distance over z-scored features.
    NearestNeighbor,
    /// Greedy gini tree; None depth means unlimited.
    DecisionTree { max_depth: Option<u32> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub kind: ModelKind,
    pub feature_set: Vec<u32>,
    #[serde(default)]
    pub seed: u64,
}

impl ModelSpec {
    pub fn knn(feature_set: Vec<u32>) -> Self {
        ModelSpec { kind: ModelKind::NearestNeighbor, feature_set, seed: 0 }
    }

    pub fn tree(max_depth: Option<u32>, feature_set: Vec<u32>) -> Self {
        ModelSpec { kind: ModelKind::DecisionTree { max_depth }, feature_set, seed: 0 }
    }

    fn validate(&self) -> Result<()> {
        if self.feature_set.is_empty() {
            return Err(Error::contract("feature_set must be non-empty"));
        }
        if let ModelKind::DecisionTree { max_depth: Some(0) } = self.kind {
            return Err(Error::contract("max_depth must be >= 1"));
        }
        Ok(())
    }

    pub fn with_features(&self, feature_set: Vec<u32>) -> ModelSpec {
        ModelSpec { kind: self.kind.clone(), feature_set, seed: self.seed }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnnModel {
    feature_set: Vec<u32>,
    /// Per-feature (mean, std) from the training data; std 0 collapses the
    /// feature so it cannot dominate.
    z_params: Vec<(f64, f64)>,
    rows: Vec<Vec<f64>>,
    labels: Vec<Label>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum TreeNode {
    Split { feature: u32, threshold: f64, left: usize, right: usize },
    Leaf { label: Label },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeModel {
    feature_set: Vec<u32>,
    nodes: Vec<TreeNode>,
    root: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Model {
    NearestNeighbor(KnnModel),
    DecisionTree(TreeModel),
}

fn raw_value(vector: &FeatureVector, id: u32) -> f64 {
    vector.get(id).unwrap_or(0.0)
}

pub fn train(spec: &ModelSpec, dataset: &LabeledDataset) -> Result<Model> {
    spec.validate()?;
    if dataset.is_empty() {
        return Err(Error::contract("training dataset is empty"));
    }
    let missing = dataset
        .items
        .iter()
        .flat_map(|item| {
            spec.feature_set
                .iter()
                .filter(|id| item.features.get(**id).is_none())
                .map(|id| (item.features.workload.clone(), *id))
        })
        .next();
    if let Some((workload, id)) = missing {
        eprintln!(
            "warning: {} missing in {workload} (and possibly others); treated as 0",
            feature_name(id)
        );
    }
    // Canonical training order keeps tie-breaking deterministic.
    let mut items: Vec<&super::LabeledItem> = dataset.items.iter().collect();
    items.sort_by(|a, b| a.features.workload.cmp(&b.features.workload));

    match &spec.kind {
        ModelKind::NearestNeighbor => {
            let n = items.len() as f64;
            let mut z_params = Vec::with_capacity(spec.feature_set.len());
            for &id in &spec.feature_set {
                let mean =
                    items.iter().map(|i| raw_value(&i.features, id)).sum::<f64>() / n;
                let var = items
                    .iter()
                    .map(|i| {
                        let d = raw_value(&i.features, id) - mean;
                        d * d
                    })
                    .sum::<f64>()
                    / n;
                z_params.push((mean, var.sqrt()));
            }
            let rows = items
                .iter()
                .map(|i| {
                    spec.feature_set
                        .iter()
                        .zip(&z_params)
                        .map(|(id, (mean, std))| z_score(raw_value(&i.features, *id), *mean, *std))
                        .collect()
                })
                .collect();
            let labels = items.iter().map(|i| i.label.clone()).collect();
            Ok(Model::NearestNeighbor(KnnModel {
                feature_set: spec.feature_set.clone(),
                z_params,
                rows,
                labels,
            }))
        }
        ModelKind::DecisionTree { max_depth } => {
            let mut builder = TreeBuilder {
                feature_set: &spec.feature_set,
                max_depth: *max_depth,
                nodes: Vec::new(),
            };
            let indices: Vec<usize> = (0..items.len()).collect();
            let root = builder.grow(&items, &indices, 0);
            Ok(Model::DecisionTree(TreeModel {
                feature_set: spec.feature_set.clone(),
                nodes: builder.nodes,
                root,
            }))
        }
    }
}

fn z_score(value: f64, mean: f64, std: f64) -> f64 {
    if std > 0.0 {
        (value - mean) / std
    } else {
        0.0
    }
}

pub fn predict(model: &Model, vector: &FeatureVector) -> Label {
    match model {
        Model::NearestNeighbor(knn) => {
            let probe: Vec<f64> = knn
                .feature_set
                .iter()
                .zip(&knn.z_params)
                .map(|(id, (mean, std))| z_score(raw_value(vector, *id), *mean, *std))
                .collect();
            let mut best = 0usize;
            let mut best_distance = f64::INFINITY;
            for (i, row) in knn.rows.iter().enumerate() {
                let distance: f64 =
                    row.iter().zip(&probe).map(|(a, b)| (a - b) * (a - b)).sum();
                if distance < best_distance {
                    best_distance = distance;
                    best = i;
                }
            }
            knn.labels[best].clone()
        }
        Model::DecisionTree(tree) => {
            let mut node = tree.root;
            loop {
                match &tree.nodes[node] {
                    TreeNode::Leaf { label } => return label.clone(),
                    TreeNode::Split { feature, threshold, left, right } => {
                        node = if raw_value(vector, *feature) <= *threshold { *left } else { *right };
                    }
                }
            }
        }
    }
}

impl Model {
    /// no root-to-leaf path exceeds the cap
    pub fn tree_depth(&self) -> Option<u32> {
        match self {
            Model::DecisionTree(tree) => Some(depth_of(tree, tree.root)),
            Model::NearestNeighbor(_) => None,
        }
    }

    /// Human-readable rule listing for decision trees.
    pub fn export_rules(&self) -> String {
        match self {
            Model::NearestNeighbor(knn) => {
                format!("nearest-neighbor over {} training items\n", knn.rows.len())
            }
            Model::DecisionTree(tree) => {
                let mut out = String::new();
                print_rules(tree, tree.root, 0, &mut out);
                out
            }
        }
    }
}

fn depth_of(tree: &TreeModel, node: usize) -> u32 {
    match &tree.nodes[node] {
        TreeNode::Leaf { .. } => 0,
        TreeNode::Split { left, right, .. } => {
            1 + depth_of(tree, *left).max(depth_of(tree, *right))
        }
    }
}

fn print_rules(tree: &TreeModel, node: usize, indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent);
    match &tree.nodes[node] {
        TreeNode::Leaf { label } => {
            out.push_str(&format!("{pad}predict {label}\n"));
        }
        TreeNode::Split { feature, threshold, left, right } => {
            out.push_str(&format!("{pad}if {} <= {threshold:.6}:\n", feature_name(*feature)));
            print_rules(tree, *left, indent + 1, out);
            out.push_str(&format!("{pad}else:\n"));
            print_rules(tree, *right, indent + 1, out);
        }
    }
}

struct TreeBuilder<'a> {
    feature_set: &'a [u32],
    max_depth: Option<u32>,
    nodes: Vec<TreeNode>,
}

impl<'a> TreeBuilder<'a> {
    fn grow(&mut self, items: &[&super::LabeledItem], indices: &[usize], depth: u32) -> usize {
        let majority = majority_label(items, indices);
        let pure = indices
            .iter()
            .all(|&i| items[i].label == items[indices[0]].label);
        let depth_capped = self.max_depth.map(|d| depth >= d).unwrap_or(false);
        if pure || depth_capped {
            return self.leaf(majority);
        }
        let Some((feature, threshold)) = best_split(items, indices, self.feature_set) else {
            return self.leaf(majority);
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
            .iter()
            .partition(|&&i| raw_value(&items[i].features, feature) <= threshold);
        if left_idx.is_empty() || right_idx.is_empty() {
            return self.leaf(majority);
        }
        let left = self.grow(items, &left_idx, depth + 1);
        let right = self.grow(items, &right_idx, depth + 1);
        self.nodes.push(TreeNode::Split { feature, threshold, left, right });
        self.nodes.len() - 1
    }

    fn leaf(&mut self, label: Label) -> usize {
        self.nodes.push(TreeNode::Leaf { label });
        self.nodes.len() - 1
    }
}

/// Majority label; ties take the smallest label (BASELINE, then uid order).
fn majority_label(items: &[&super::LabeledItem], indices: &[usize]) -> Label {
    let mut counts: BTreeMap<&Label, usize> = BTreeMap::new();
    for &i in indices {
        *counts.entry(&items[i].label).or_insert(0) += 1;
    }
    counts
        .into_iter()
        .max_by(|(la, ca), (lb, cb)| ca.cmp(cb).then_with(|| lb.cmp(la)))
        .map(|(label, _)| label.clone())
        .unwrap_or(Label::Baseline)
}

fn gini(items: &[&super::LabeledItem], indices: &[usize]) -> f64 {
    let mut counts: BTreeMap<&Label, usize> = BTreeMap::new();
    for &i in indices {
        *counts.entry(&items[i].label).or_insert(0) += 1;
    }
    let n = indices.len() as f64;
    1.0 - counts.values().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

/// Best (feature, midpoint threshold) by gini gain; ties take the lowest
/// feature id then the lowest threshold. None when nothing splits.
fn best_split(
    items: &[&super::LabeledItem],
    indices: &[usize],
    feature_set: &[u32],
) -> Option<(u32, f64)> {
    let parent = gini(items, indices);
    let n = indices.len() as f64;
    let mut best: Option<(f64, u32, f64)> = None;
    for &feature in feature_set {
        let mut values: Vec<f64> =
            indices.iter().map(|&i| raw_value(&items[i].features, feature)).collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup();
        for pair in values.windows(2) {
            let threshold = (pair[0] + pair[1]) / 2.0;
            let (left, right): (Vec<usize>, Vec<usize>) = indices
                .iter()
                .partition(|&&i| raw_value(&items[i].features, feature) <= threshold);
            if left.is_empty() || right.is_empty() {
                continue;
            }
            let weighted = (left.len() as f64 / n) * gini(items, &left)
                + (right.len() as f64 / n) * gini(items, &right);
            let gain = parent - weighted;
            if gain <= 1e-12 {
                continue;
            }
            let candidate = (gain, feature, threshold);
            let replace = match best {
                None => true,
                Some((bg, bf, bt)) => {
                    gain > bg + 1e-12
                        || ((gain - bg).abs() <= 1e-12
                            && (feature < bf || (feature == bf && threshold < bt)))
                }
            };
            if replace {
                best = Some(candidate);
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

/// In-sample accuracy of a trained model.
pub fn in_sample_accuracy(model: &Model, dataset: &LabeledDataset) -> f64 {
    if dataset.is_empty() {
        return 0.0;
    }
    let correct = dataset
        .items
        .iter()
        .filter(|item| predict(model, &item.features) == item.label)
        .count();
    correct as f64 / dataset.len() as f64
}

/// Leave-one-out cross-validation: remove each item, train on the rest,
/// test on the removed one, and average correct predictions.
pub fn loo_cv(spec: &ModelSpec, dataset: &LabeledDataset) -> Result<f64> {
    spec.validate()?;
    if dataset.len() < 2 {
        return Err(Error::contract("leave-one-out needs at least 2 items"));
    }
    let mut correct = 0usize;
    for i in 0..dataset.len() {
        let fold = dataset.without(i);
        let model = train(spec, &fold)?;
        if predict(&model, &dataset.items[i].features) == dataset.items[i].label {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DepthPoint {
    pub depth: u32,
    pub cv_accuracy: f64,
    pub in_sample_accuracy: f64,
}

/// Sweep tree depths; best is the smallest depth reaching the maximum
/// cross-validated accuracy.
pub fn autotune_depth(
    dataset: &LabeledDataset,
    depths: &[u32],
    feature_set: &[u32],
) -> Result<(u32, Vec<DepthPoint>)> {
    if depths.is_empty() {
        return Err(Error::contract("depth list is empty"));
    }
    let mut curve = Vec::with_capacity(depths.len());
    for &depth in depths {
        let spec = ModelSpec::tree(Some(depth), feature_set.to_vec());
        let cv_accuracy = loo_cv(&spec, dataset)?;
        let model = train(&spec, dataset)?;
        let in_sample = in_sample_accuracy(&model, dataset);
        curve.push(DepthPoint { depth, cv_accuracy, in_sample_accuracy: in_sample });
    }
    let best_cv = curve.iter().map(|p| p.cv_accuracy).fold(f64::NEG_INFINITY, f64::max);
    let best = curve
        .iter()
        .filter(|p| p.cv_accuracy == best_cv)
        .map(|p| p.depth)
        .min()
        .unwrap();
    Ok((best, curve))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReductionMode {
    /// Drop features one by one while CV accuracy does not decrease.
    GreedyRemove,
    /// Add features one by one while CV accuracy strictly improves.
    GreedyAdd,
}

/// Greedy feature-set reduction; deterministic tie-break by feature id.
pub fn reduce_features(
    spec: &ModelSpec,
    dataset: &LabeledDataset,
    mode: ReductionMode,
) -> Result<(Vec<u32>, f64)> {
    spec.validate()?;
    match mode {
        ReductionMode::GreedyRemove => {
            let mut current = spec.feature_set.clone();
            current.sort_unstable();
            let mut accuracy = loo_cv(&spec.with_features(current.clone()), dataset)?;
            while current.len() > 1 {
                let mut best: Option<(f64, u32)> = None;
                for &candidate in &current {
                    let reduced: Vec<u32> =
                        current.iter().copied().filter(|&f| f != candidate).collect();
                    let acc = loo_cv(&spec.with_features(reduced), dataset)?;
                    let replace = match best {
                        None => true,
                        Some((ba, bf)) => acc > ba || (acc == ba && candidate < bf),
                    };
                    if replace {
                        best = Some((acc, candidate));
                    }
                }
                match best {
                    Some((acc, feature)) if acc >= accuracy => {
                        current.retain(|&f| f != feature);
                        accuracy = acc;
                    }
                    _ => break,
                }
            }
            Ok((current, accuracy))
        }
        ReductionMode::GreedyAdd => {
            let mut pool = spec.feature_set.clone();
            pool.sort_unstable();
            let mut current: Vec<u32> = Vec::new();
            let mut accuracy = f64::NEG_INFINITY;
            loop {
                let mut best: Option<(f64, u32)> = None;
                for &candidate in pool.iter().filter(|f| !current.contains(f)) {
                    let mut extended = current.clone();
                    extended.push(candidate);
                    extended.sort_unstable();
                    let acc = loo_cv(&spec.with_features(extended), dataset)?;
                    let replace = match best {
                        None => true,
                        Some((ba, bf)) => acc > ba || (acc == ba && candidate < bf),
                    };
                    if replace {
                        best = Some((acc, candidate));
                    }
                }
                match best {
                    Some((acc, feature)) if acc > accuracy => {
                        current.push(feature);
                        current.sort_unstable();
                        accuracy = acc;
                    }
                    _ => break,
                }
            }
            if current.is_empty() {
                // nothing improved over the empty set; keep the single best
                // feature so the result is a usable model spec
                let first = pool.first().copied().ok_or_else(|| Error::contract("no features"))?;
                current.push(first);
                accuracy = loo_cv(&spec.with_features(current.clone()), dataset)?;
            }
            Ok((current, accuracy))
        }
    }
}
