//! CART-style regression tree over mixed numeric/categorical features, with
//! buffered online updates and a cache of the subtree entry points selected
//! by profile-field tests.
//!
//! Split search is greedy: the split minimizing the weighted child impurity
//! (impurity = label variance) wins; ties go to the lowest-indexed field,
//! then the smallest threshold / category. Impurities are computed two-pass
//! (mean, then sum of squared deviations) over the node's samples in
//! insertion order, so an independent implementation following the same
//! contract reproduces identical trees.

use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

/// One feature value.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum FeatureValue {
    Num(f64),
    Cat(String),
}

impl PartialEq for FeatureValue {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (FeatureValue::Num(a), FeatureValue::Num(b)) => a.to_bits() == b.to_bits(),
            (FeatureValue::Cat(a), FeatureValue::Cat(b)) => a == b,
            _ => false,
        }
    }
}
impl Eq for FeatureValue {}

impl Hash for FeatureValue {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            FeatureValue::Num(v) => {
                0u8.hash(state);
                v.to_bits().hash(state);
            }
            FeatureValue::Cat(s) => {
                1u8.hash(state);
                s.hash(state);
            }
        }
    }
}

impl FeatureValue {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            FeatureValue::Num(v) => Some(*v),
            FeatureValue::Cat(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldKind {
    Numeric,
    Categorical,
}

/// One feature column: its name, kind, and whether it is a heterogeneity
/// profile field (cacheable) as opposed to a runtime measurement.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDef {
    pub name: String,
    pub kind: FieldKind,
    pub profile: bool,
}

/// Ordered feature columns; the order fixes the split tie-break.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub fields: Vec<FieldDef>,
}

impl FeatureSchema {
    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    fn profile_key(&self, features: &[FeatureValue]) -> Vec<FeatureValue> {
        self.fields
            .iter()
            .zip(features)
            .filter(|(f, _)| f.profile)
            .map(|(_, v)| v.clone())
            .collect()
    }
}

/// A labelled training sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<FeatureValue>,
    pub label: f64,
}

#[derive(Clone, Debug, PartialEq)]
enum SplitTest {
    /// Numeric: left when value <= threshold.
    NumericLe(f64),
    /// Categorical: left when value equals the category.
    CatEq(String),
}

#[derive(Clone, Debug)]
enum Node {
    Leaf { sum: f64, count: usize },
    Split { field: usize, test: SplitTest, left: usize, right: usize },
}

/// Stopping and rebuild parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeParams {
    pub min_samples_leaf: usize,
    pub min_impurity_decrease: f64,
    /// Full greedy rebuild cadence for the online path.
    pub rebuild_every: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { min_samples_leaf: 1, min_impurity_decrease: 0.0, rebuild_every: 32 }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum TreeError {
    #[error("cannot train a tree from zero samples")]
    EmptySamples,
    #[error("cannot predict from an empty tree")]
    EmptyTree,
    #[error("feature vector length {got} does not match schema length {want}")]
    SchemaMismatch { got: usize, want: usize },
}

/// Two-pass mean and sum of squared deviations, in the given order.
fn mean_sse(labels: &[f64]) -> (f64, f64) {
    let n = labels.len() as f64;
    let mean = labels.iter().sum::<f64>() / n;
    let sse = labels.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>();
    (mean, sse)
}

/// The regression tree plus its accumulated sample multiset and the
/// profile-branch cache.
#[derive(Debug)]
pub struct RegressionTree {
    schema: FeatureSchema,
    params: TreeParams,
    nodes: Vec<Node>,
    root: usize,
    samples: Vec<Sample>,
    inserts_since_rebuild: usize,
    cache_enabled: bool,
    cache: RefCell<HashMap<Vec<FeatureValue>, usize>>,
    tests_evaluated: Cell<u64>,
}

impl RegressionTree {
    /// An empty tree ready for online insertion.
    pub fn new(schema: FeatureSchema, params: TreeParams) -> Self {
        RegressionTree {
            schema,
            params,
            nodes: Vec::new(),
            root: 0,
            samples: Vec::new(),
            inserts_since_rebuild: 0,
            cache_enabled: true,
            cache: RefCell::new(HashMap::new()),
            tests_evaluated: Cell::new(0),
        }
    }

    /// Greedy top-down construction over a full sample set.
    pub fn train(
        schema: FeatureSchema,
        samples: Vec<Sample>,
        params: TreeParams,
    ) -> Result<Self, TreeError> {
        if samples.is_empty() {
            return Err(TreeError::EmptySamples);
        }
        let mut tree = RegressionTree::new(schema, params);
        tree.samples = samples;
        tree.rebuild();
        Ok(tree)
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }

    pub fn set_cache_enabled(&mut self, enabled: bool) {
        self.cache_enabled = enabled;
        self.cache.borrow_mut().clear();
    }

    /// Cumulative node tests evaluated across predictions.
    pub fn tests_evaluated(&self) -> u64 {
        self.tests_evaluated.get()
    }

    pub fn reset_test_counter(&self) {
        self.tests_evaluated.set(0);
    }

    fn rebuild(&mut self) {
        self.nodes.clear();
        self.cache.borrow_mut().clear();
        let idx: Vec<usize> = (0..self.samples.len()).collect();
        let root = self.build_node(&idx);
        self.root = root;
        self.inserts_since_rebuild = 0;
    }

    fn labels_of(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().map(|&i| self.samples[i].label).collect()
    }

    fn build_node(&mut self, idx: &[usize]) -> usize {
        let labels = self.labels_of(idx);
        let (_, sse) = mean_sse(&labels);
        let n = idx.len() as f64;
        let parent_impurity = sse / n;

        let best = self.best_split(idx, parent_impurity);
        match best {
            Some((field, test, left_idx, right_idx)) => {
                let left = self.build_node(&left_idx);
                let right = self.build_node(&right_idx);
                self.nodes.push(Node::Split { field, test, left, right });
                self.nodes.len() - 1
            }
            None => {
                let sum: f64 = labels.iter().sum();
                self.nodes.push(Node::Leaf { sum, count: idx.len() });
                self.nodes.len() - 1
            }
        }
    }

    /// Exhaustive candidate search. Returns the winning split and the two
    /// index partitions (order-preserving), or None when no split clears
    /// the impurity-decrease and leaf-size gates.
    #[allow(clippy::type_complexity)]
    fn best_split(
        &self,
        idx: &[usize],
        parent_impurity: f64,
    ) -> Option<(usize, SplitTest, Vec<usize>, Vec<usize>)> {
        if idx.len() < 2 * self.params.min_samples_leaf.max(1) {
            return None;
        }
        let n = idx.len() as f64;
        let mut best: Option<(f64, usize, SplitTest)> = None;

        for (field, def) in self.schema.fields.iter().enumerate() {
            match def.kind {
                FieldKind::Numeric => {
                    let mut values: Vec<f64> = idx
                        .iter()
                        .filter_map(|&i| self.samples[i].features[field].as_num())
                        .collect();
                    values.sort_by(|a, b| a.total_cmp(b));
                    values.dedup();
                    for pair in values.windows(2) {
                        let thr = (pair[0] + pair[1]) / 2.0;
                        let test = SplitTest::NumericLe(thr);
                        self.consider(idx, field, &test, n, &mut best);
                    }
                }
                FieldKind::Categorical => {
                    let mut cats: Vec<&str> = idx
                        .iter()
                        .filter_map(|&i| match &self.samples[i].features[field] {
                            FeatureValue::Cat(c) => Some(c.as_str()),
                            FeatureValue::Num(_) => None,
                        })
                        .collect();
                    cats.sort_unstable();
                    cats.dedup();
                    for cat in cats {
                        let test = SplitTest::CatEq(cat.to_string());
                        self.consider(idx, field, &test, n, &mut best);
                    }
                }
            }
        }

        let (weighted, field, test) = best?;
        if parent_impurity - weighted <= self.params.min_impurity_decrease {
            return None;
        }
        let (left_idx, right_idx) = self.partition(idx, field, &test);
        Some((field, test, left_idx, right_idx))
    }

    fn consider(
        &self,
        idx: &[usize],
        field: usize,
        test: &SplitTest,
        n: f64,
        best: &mut Option<(f64, usize, SplitTest)>,
    ) {
        let (left_idx, right_idx) = self.partition(idx, field, test);
        let min = self.params.min_samples_leaf.max(1);
        if left_idx.len() < min || right_idx.len() < min {
            return;
        }
        let (_, sse_l) = mean_sse(&self.labels_of(&left_idx));
        let (_, sse_r) = mean_sse(&self.labels_of(&right_idx));
        let weighted = (sse_l + sse_r) / n;
        // Candidates are enumerated in tie-break order (field order, then
        // ascending threshold/category), so strict improvement suffices.
        if best.as_ref().map(|(w, _, _)| weighted < *w).unwrap_or(true) {
            *best = Some((weighted, field, test.clone()));
        }
    }

    fn partition(&self, idx: &[usize], field: usize, test: &SplitTest) -> (Vec<usize>, Vec<usize>) {
        let mut left = Vec::new();
        let mut right = Vec::new();
        for &i in idx {
            if Self::goes_left(&self.samples[i].features[field], test) {
                left.push(i);
            } else {
                right.push(i);
            }
        }
        (left, right)
    }

    fn goes_left(value: &FeatureValue, test: &SplitTest) -> bool {
        match (value, test) {
            (FeatureValue::Num(v), SplitTest::NumericLe(thr)) => v <= thr,
            (FeatureValue::Cat(c), SplitTest::CatEq(cat)) => c == cat,
            // Kind mismatch (malformed feature): send right.
            _ => false,
        }
    }

    /// Online insertion: the sample joins the multiset, the reached leaf's
    /// statistics update immediately, and every `rebuild_every` insertions
    /// the whole tree is re-grown over the accumulated samples.
    pub fn insert(&mut self, sample: Sample) -> Result<(), TreeError> {
        if sample.features.len() != self.schema.len() {
            return Err(TreeError::SchemaMismatch {
                got: sample.features.len(),
                want: self.schema.len(),
            });
        }
        self.samples.push(sample.clone());
        self.inserts_since_rebuild += 1;
        if self.nodes.is_empty() {
            self.nodes.push(Node::Leaf { sum: sample.label, count: 1 });
            self.root = self.nodes.len() - 1;
        } else if self.inserts_since_rebuild >= self.params.rebuild_every {
            self.rebuild();
        } else {
            let leaf = self.descend(&sample.features, self.root, false);
            if let Node::Leaf { sum, count } = &mut self.nodes[leaf] {
                *sum += sample.label;
                *count += 1;
            }
        }
        Ok(())
    }

    /// Walk from `from` to the leaf index for `features`. When `count` is
    /// set, every test evaluated is added to the test counter.
    fn descend(&self, features: &[FeatureValue], from: usize, count: bool) -> usize {
        let mut node = from;
        loop {
            match &self.nodes[node] {
                Node::Leaf { .. } => return node,
                Node::Split { field, test, left, right } => {
                    if count {
                        self.tests_evaluated.set(self.tests_evaluated.get() + 1);
                    }
                    node = if Self::goes_left(&features[*field], test) { *left } else { *right };
                }
            }
        }
    }

    /// Entry node for a profile assignment: follow profile-field tests from
    /// the root until a leaf or a measurement-field test is reached.
    fn profile_entry(&self, features: &[FeatureValue], count: bool) -> usize {
        let mut node = self.root;
        loop {
            match &self.nodes[node] {
                Node::Leaf { .. } => return node,
                Node::Split { field, test, left, right } => {
                    if !self.schema.fields[*field].profile {
                        return node;
                    }
                    if count {
                        self.tests_evaluated.set(self.tests_evaluated.get() + 1);
                    }
                    node = if Self::goes_left(&features[*field], test) { *left } else { *right };
                }
            }
        }
    }

    /// Deterministic root-to-leaf prediction. With the cache enabled, the
    /// traversal starts at the cached subtree for the query's profile-field
    /// assignment; results are identical either way.
    pub fn predict(&self, features: &[FeatureValue]) -> Result<f64, TreeError> {
        if self.nodes.is_empty() {
            return Err(TreeError::EmptyTree);
        }
        if features.len() != self.schema.len() {
            return Err(TreeError::SchemaMismatch {
                got: features.len(),
                want: self.schema.len(),
            });
        }
        let start = if self.cache_enabled {
            let key = self.schema.profile_key(features);
            let cached = self.cache.borrow().get(&key).copied();
            match cached {
                Some(node) => node,
                None => {
                    let entry = self.profile_entry(features, true);
                    self.cache.borrow_mut().insert(key, entry);
                    entry
                }
            }
        } else {
            self.root
        };
        let leaf = self.descend(features, start, true);
        match &self.nodes[leaf] {
            Node::Leaf { sum, count } => Ok(sum / *count as f64),
            Node::Split { .. } => unreachable!("descend ends at a leaf"),
        }
    }

    /// Leaf (mean, count) pairs, for consistency checks.
    pub fn leaves(&self) -> Vec<(f64, usize)> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf { sum, count } => Some((sum / *count as f64, *count)),
                Node::Split { .. } => None,
            })
            .collect()
    }
}

/// Convenience constructors for features.
pub fn num(v: f64) -> FeatureValue {
    FeatureValue::Num(v)
}

pub fn cat(s: &str) -> FeatureValue {
    FeatureValue::Cat(s.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema2() -> FeatureSchema {
        FeatureSchema {
            fields: vec![
                FieldDef { name: "rss".into(), kind: FieldKind::Numeric, profile: false },
                FieldDef { name: "delay_class".into(), kind: FieldKind::Numeric, profile: true },
            ],
        }
    }

    fn four_samples() -> Vec<Sample> {
        vec![
            Sample { features: vec![num(-80.0), num(1.0)], label: 50.0 },
            Sample { features: vec![num(-80.0), num(4.0)], label: 120.0 },
            Sample { features: vec![num(-110.0), num(1.0)], label: 90.0 },
            Sample { features: vec![num(-110.0), num(4.0)], label: 160.0 },
        ]
    }

    #[test]
    fn root_splits_on_delay_class() {
        // Weighted child variance: 400 on delay_class vs 1225 on rss.
        let tree = RegressionTree::train(schema2(), four_samples(), TreeParams::default()).unwrap();
        assert_eq!(tree.predict(&[num(-80.0), num(1.0)]).unwrap(), 50.0);
        assert_eq!(tree.predict(&[num(-110.0), num(4.0)]).unwrap(), 160.0);
        assert_eq!(tree.predict(&[num(-110.0), num(1.0)]).unwrap(), 90.0);
        assert_eq!(tree.predict(&[num(-80.0), num(4.0)]).unwrap(), 120.0);
    }

    #[test]
    fn single_sample_is_single_leaf() {
        let samples = vec![Sample { features: vec![num(-90.0), num(1.0)], label: 42.0 }];
        let tree = RegressionTree::train(schema2(), samples, TreeParams::default()).unwrap();
        assert_eq!(tree.leaves().len(), 1);
        assert_eq!(tree.predict(&[num(0.0), num(9.0)]).unwrap(), 42.0);
    }

    #[test]
    fn constant_labels_stay_one_leaf() {
        let samples: Vec<Sample> = (0..10)
            .map(|i| Sample { features: vec![num(i as f64), num(i as f64 % 3.0)], label: 7.0 })
            .collect();
        let tree = RegressionTree::train(schema2(), samples, TreeParams::default()).unwrap();
        assert_eq!(tree.leaves().len(), 1);
    }

    #[test]
    fn empty_samples_error() {
        assert_eq!(
            RegressionTree::train(schema2(), vec![], TreeParams::default()).unwrap_err(),
            TreeError::EmptySamples
        );
    }

    #[test]
    fn insert_into_empty_tree_is_single_leaf() {
        let mut tree = RegressionTree::new(schema2(), TreeParams::default());
        assert_eq!(tree.predict(&[num(0.0), num(0.0)]).unwrap_err(), TreeError::EmptyTree);
        tree.insert(Sample { features: vec![num(-90.0), num(1.0)], label: 10.0 }).unwrap();
        assert_eq!(tree.predict(&[num(-50.0), num(4.0)]).unwrap(), 10.0);
    }

    #[test]
    fn inserts_between_rebuilds_update_only_reached_leaf() {
        let mut tree =
            RegressionTree::train(schema2(), four_samples(), TreeParams::default()).unwrap();
        // Lands in the (delay 1, rss high) leaf currently predicting 50.
        tree.insert(Sample { features: vec![num(-80.0), num(1.0)], label: 70.0 }).unwrap();
        assert_eq!(tree.predict(&[num(-80.0), num(1.0)]).unwrap(), 60.0);
        // Other leaves untouched.
        assert_eq!(tree.predict(&[num(-110.0), num(4.0)]).unwrap(), 160.0);
    }

    #[test]
    fn rebuild_matches_batch_training() {
        let params = TreeParams { rebuild_every: 8, ..TreeParams::default() };
        let mut online = RegressionTree::new(schema2(), params);
        let samples: Vec<Sample> = (0..8)
            .map(|i| Sample {
                features: vec![num(-70.0 - 10.0 * (i % 4) as f64), num((i % 2) as f64)],
                label: (i * 13 % 29) as f64,
            })
            .collect();
        for s in &samples {
            online.insert(s.clone()).unwrap();
        }
        let batch = RegressionTree::train(schema2(), samples, params).unwrap();
        for i in 0..16 {
            let q = vec![num(-65.0 - 5.0 * i as f64), num((i % 3) as f64)];
            assert_eq!(online.predict(&q).unwrap(), batch.predict(&q).unwrap());
        }
    }

    #[test]
    fn cache_is_transparent_and_cheaper() {
        let mut samples = four_samples();
        // More rss spread so the subtrees are deep under the profile split.
        for i in 0..20 {
            samples.push(Sample {
                features: vec![num(-120.0 + i as f64 * 2.5), num((i % 2 * 3 + 1) as f64)],
                // Strong class dependence keeps the profile split at the root.
                label: (i % 2) as f64 * 100.0 + i as f64 * 0.5,
            });
        }
        let mut tree =
            RegressionTree::train(schema2(), samples, TreeParams::default()).unwrap();
        let queries: Vec<Vec<FeatureValue>> = (0..200)
            .map(|i| vec![num(-125.0 + (i % 40) as f64), num((i % 2 * 3 + 1) as f64)])
            .collect();

        tree.set_cache_enabled(false);
        tree.reset_test_counter();
        let plain: Vec<f64> = queries.iter().map(|q| tree.predict(q).unwrap()).collect();
        let plain_tests = tree.tests_evaluated();

        tree.set_cache_enabled(true);
        tree.reset_test_counter();
        let cached: Vec<f64> = queries.iter().map(|q| tree.predict(q).unwrap()).collect();
        let cached_tests = tree.tests_evaluated();

        assert_eq!(plain, cached);
        assert!(cached_tests < plain_tests, "{cached_tests} !< {plain_tests}");
    }
}
