//! Shapley-value explanations for forest outputs.
//!
//! [`tree_shap`] is the polynomial-time path-dependent algorithm: features
//! outside a coalition are marginalized by following both children of a
//! split, weighted by the training coverage of each child.
//! [`brute_force_shapley`] evaluates the same conditional expectations for
//! every coalition and combines them with Shapley weights; it is
//! exponential in the number of features and exists to check the fast path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{DecisionTree, RandomForest, Task};

/// Which scalar output of a forest is explained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplainTarget {
    /// Mean tree output of a regression forest.
    Value,
    /// Vote fraction of a class in a classification forest.
    Class(usize),
}

impl ExplainTarget {
    /// Regression value, or the positive class of a classifier.
    pub fn default_for(forest: &RandomForest) -> ExplainTarget {
        match forest.task {
            Task::Regression => ExplainTarget::Value,
            Task::Classification { n_classes } => ExplainTarget::Class((n_classes - 1).min(1)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    /// Expected output over the training coverage.
    pub base_value: f64,
    pub shap_values: Vec<f64>,
    /// Output being explained; equals `base_value + sum(shap_values)`.
    pub prediction: f64,
    /// The explained input row.
    pub features: Vec<f64>,
}

impl Explanation {
    pub fn local_accuracy_gap(&self) -> f64 {
        (self.base_value + self.shap_values.iter().sum::<f64>() - self.prediction).abs()
    }
}

fn leaf_output(tree: &DecisionTree, node: usize, target: ExplainTarget) -> f64 {
    match target {
        ExplainTarget::Value => tree.nodes[node].value[0],
        ExplainTarget::Class(c) => f64::from(u8::from(tree.node_prediction(node) as usize == c)),
    }
}

fn check_target(forest: &RandomForest, target: ExplainTarget, x: &[f64]) -> Result<()> {
    if x.len() != forest.n_features() {
        return Err(Error::DimensionMismatch {
            expected: forest.n_features(),
            actual: x.len(),
        });
    }
    match (forest.task, target) {
        (Task::Regression, ExplainTarget::Value) => Ok(()),
        (Task::Classification { n_classes }, ExplainTarget::Class(c)) if c < n_classes => Ok(()),
        _ => Err(Error::Validation(format!(
            "explain target {target:?} does not fit a {:?} forest",
            forest.task
        ))),
    }
}

fn check_coverage(tree: &DecisionTree) -> Result<()> {
    if tree.nodes.iter().any(|n| n.n_samples == 0) {
        return Err(Error::Numerical("tree node with zero coverage".into()));
    }
    Ok(())
}

fn expected_value(tree: &DecisionTree, target: ExplainTarget) -> f64 {
    let root = tree.nodes[0].n_samples as f64;
    tree.nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| n.is_leaf())
        .map(|(i, n)| n.n_samples as f64 / root * leaf_output(tree, i, target))
        .sum()
}

#[derive(Debug, Clone, Copy)]
struct PathElement {
    feature: Option<usize>,
    zero_fraction: f64,
    one_fraction: f64,
    pweight: f64,
}

fn extend_path(path: &mut [PathElement], depth: usize, zero: f64, one: f64, feature: Option<usize>) {
    path[depth] = PathElement {
        feature,
        zero_fraction: zero,
        one_fraction: one,
        pweight: if depth == 0 { 1.0 } else { 0.0 },
    };
    let d1 = (depth + 1) as f64;
    for i in (0..depth).rev() {
        path[i + 1].pweight += one * path[i].pweight * (i + 1) as f64 / d1;
        path[i].pweight = zero * path[i].pweight * (depth - i) as f64 / d1;
    }
}

fn unwind_path(path: &mut [PathElement], depth: usize, index: usize) {
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let d1 = (depth + 1) as f64;
    let mut next_one_portion = path[depth].pweight;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = path[i].pweight;
            path[i].pweight = next_one_portion * d1 / ((i + 1) as f64 * one);
            next_one_portion = tmp - path[i].pweight * zero * (depth - i) as f64 / d1;
        } else {
            path[i].pweight = path[i].pweight * d1 / (zero * (depth - i) as f64);
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
}

fn unwound_path_sum(path: &[PathElement], depth: usize, index: usize) -> f64 {
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let d1 = (depth + 1) as f64;
    let mut next_one_portion = path[depth].pweight;
    let mut total = 0.0;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = next_one_portion * d1 / ((i + 1) as f64 * one);
            total += tmp;
            next_one_portion = path[i].pweight - tmp * zero * (depth - i) as f64 / d1;
        } else if zero != 0.0 {
            total += path[i].pweight / zero / ((depth - i) as f64 / d1);
        }
    }
    total
}

struct ShapWalk<'a> {
    tree: &'a DecisionTree,
    x: &'a [f64],
    target: ExplainTarget,
    phi: &'a mut [f64],
}

impl ShapWalk<'_> {
    fn recurse(
        &mut self,
        node: usize,
        parent_path: &[PathElement],
        depth: usize,
        zero: f64,
        one: f64,
        feature: Option<usize>,
    ) {
        let mut path = parent_path.to_vec();
        path.push(PathElement {
            feature: None,
            zero_fraction: 0.0,
            one_fraction: 0.0,
            pweight: 0.0,
        });
        extend_path(&mut path, depth, zero, one, feature);
        let n = &self.tree.nodes[node];
        let Some([left, right]) = n.children else {
            let value = leaf_output(self.tree, node, self.target);
            for i in 1..=depth {
                let w = unwound_path_sum(&path, depth, i);
                let el = path[i];
                let f = el.feature.expect("path entries past the root carry a feature");
                self.phi[f] += w * (el.one_fraction - el.zero_fraction) * value;
            }
            return;
        };
        let split = n.feature.expect("internal node has a feature");
        let (hot, cold) = if self.x[split] <= n.threshold {
            (left, right)
        } else {
            (right, left)
        };
        let mut depth = depth;
        let (mut incoming_zero, mut incoming_one) = (1.0, 1.0);
        if let Some(k) = (1..=depth).find(|&k| path[k].feature == Some(split)) {
            incoming_zero = path[k].zero_fraction;
            incoming_one = path[k].one_fraction;
            unwind_path(&mut path, depth, k);
            depth -= 1;
        }
        path.truncate(depth + 1);
        let cover = n.n_samples as f64;
        let hot_zero = self.tree.nodes[hot].n_samples as f64 / cover;
        let cold_zero = self.tree.nodes[cold].n_samples as f64 / cover;
        self.recurse(hot, &path, depth + 1, hot_zero * incoming_zero, incoming_one, Some(split));
        self.recurse(cold, &path, depth + 1, cold_zero * incoming_zero, 0.0, Some(split));
    }
}

/// Path-dependent TreeSHAP for one tree; returns (base value, phi).
pub fn tree_shap_single(tree: &DecisionTree, x: &[f64], target: ExplainTarget) -> Result<(f64, Vec<f64>)> {
    check_coverage(tree)?;
    let mut phi = vec![0.0; tree.n_features];
    ShapWalk {
        tree,
        x,
        target,
        phi: &mut phi,
    }
    .recurse(0, &[], 0, 1.0, 1.0, None);
    Ok((expected_value(tree, target), phi))
}

/// Forest explanation: per-tree TreeSHAP averaged over trees.
pub fn tree_shap(forest: &RandomForest, x: &[f64], target: ExplainTarget) -> Result<Explanation> {
    check_target(forest, target, x)?;
    let n = forest.trees.len() as f64;
    let mut base = 0.0;
    let mut phi = vec![0.0; forest.n_features()];
    let mut prediction = 0.0;
    for tree in &forest.trees {
        let (b, p) = tree_shap_single(tree, x, target)?;
        base += b;
        for (acc, v) in phi.iter_mut().zip(p) {
            *acc += v;
        }
        prediction += leaf_output(tree, tree.leaf_index(x), target);
    }
    phi.iter_mut().for_each(|v| *v /= n);
    Ok(Explanation {
        base_value: base / n,
        shap_values: phi,
        prediction: prediction / n,
        features: x.to_vec(),
    })
}

pub const MAX_ORACLE_FEATURES: usize = 12;

/// Expected tree output when only the features in `coalition` (bit mask)
/// are known; unknown splits average both children by coverage.
pub fn coalition_value(tree: &DecisionTree, x: &[f64], coalition: u32, target: ExplainTarget) -> f64 {
    fn walk(t: &DecisionTree, i: usize, x: &[f64], s: u32, target: ExplainTarget) -> f64 {
        let n = &t.nodes[i];
        match n.children {
            None => leaf_output(t, i, target),
            Some([l, r]) => {
                let f = n.feature.expect("internal node has a feature");
                if s & (1 << f) != 0 {
                    walk(t, if x[f] <= n.threshold { l } else { r }, x, s, target)
                } else {
                    let (cl, cr) = (t.nodes[l].n_samples as f64, t.nodes[r].n_samples as f64);
                    (cl * walk(t, l, x, s, target) + cr * walk(t, r, x, s, target))
                        / n.n_samples as f64
                }
            }
        }
    }
    walk(tree, 0, x, coalition, target)
}

/// Exact Shapley values by enumerating all `2^M` coalitions.
pub fn brute_force_shapley(forest: &RandomForest, x: &[f64], target: ExplainTarget) -> Result<Explanation> {
    check_target(forest, target, x)?;
    let m = forest.n_features();
    if m > MAX_ORACLE_FEATURES {
        return Err(Error::Validation(format!(
            "oracle limited to {MAX_ORACLE_FEATURES} features, model has {m}"
        )));
    }
    for t in &forest.trees {
        check_coverage(t)?;
    }
    let n_trees = forest.trees.len() as f64;
    let subsets = 1u32 << m;
    let values: Vec<f64> = (0..subsets)
        .map(|s| {
            forest
                .trees
                .iter()
                .map(|t| coalition_value(t, x, s, target))
                .sum::<f64>()
                / n_trees
        })
        .collect();

    // weight(|S|) = |S|! (M - |S| - 1)! / M!
    let mut fact = vec![1.0f64; m + 1];
    for i in 1..=m {
        fact[i] = fact[i - 1] * i as f64;
    }
    let mut phi = vec![0.0; m];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1u32 << i;
        for s in (0..subsets).filter(|s| s & bit == 0) {
            let size = s.count_ones() as usize;
            let w = fact[size] * fact[m - size - 1] / fact[m];
            *p += w * (values[(s | bit) as usize] - values[s as usize]);
        }
    }
    Ok(Explanation {
        base_value: values[0],
        shap_values: phi,
        prediction: values[(subsets - 1) as usize],
        features: x.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub feature: String,
    pub mean_abs_shap: f64,
    pub mean_shap: f64,
    /// Mean of `shap * sign(x - mean(x))`: positive when high feature values
    /// push the output up.
    pub signed_effect: f64,
    /// Among samples with non-zero shap and `x != mean(x)`, the fraction where
    /// the shap sign matches the sign of `x - mean(x)`.
    pub sign_agreement: f64,
}

/// Per-feature summary sorted by mean |shap| (stable, so ties keep input order).
pub fn summarize(explanations: &[Explanation], feature_names: &[String]) -> Vec<SummaryRow> {
    let n = explanations.len().max(1) as f64;
    let mut rows: Vec<SummaryRow> = feature_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let mean_x = explanations.iter().map(|e| e.features[j]).sum::<f64>() / n;
            let (mut abs, mut signed, mut effect) = (0.0, 0.0, 0.0);
            let (mut agree, mut counted) = (0usize, 0usize);
            for e in explanations {
                let s = e.shap_values[j];
                let dx = e.features[j] - mean_x;
                abs += s.abs();
                signed += s;
                let sx = if dx > 0.0 {
                    1.0
                } else if dx < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                effect += s * sx;
                if s != 0.0 && sx != 0.0 {
                    counted += 1;
                    if (s > 0.0) == (sx > 0.0) {
                        agree += 1;
                    }
                }
            }
            SummaryRow {
                feature: name.clone(),
                mean_abs_shap: abs / n,
                mean_shap: signed / n,
                signed_effect: effect / n,
                sign_agreement: if counted > 0 {
                    agree as f64 / counted as f64
                } else {
                    0.0
                },
            }
        })
        .collect();
    rows.sort_by(|a, b| b.mean_abs_shap.total_cmp(&a.mean_abs_shap));
    rows
}

pub fn summary_to_csv(rows: &[SummaryRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
        .expect("csv output is utf-8"))
}

/// One row per explanation: id, base value, prediction, then a shap column per feature.
pub fn shap_to_csv(ids: &[String], explanations: &[Explanation], feature_names: &[String]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["video_id".to_string(), "base_value".into(), "prediction".into()];
    header.extend(feature_names.iter().cloned());
    w.write_record(&header)?;
    for (id, e) in ids.iter().zip(explanations) {
        let mut rec = vec![id.clone(), e.base_value.to_string(), e.prediction.to_string()];
        rec.extend(e.shap_values.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
        .expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{fit_forest, FeaturesPerSplit, ForestConfig, Targets};
    use ndarray::{array, Array2};

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|i| format!("f{i}")).collect()
    }

    #[test]
    fn single_leaf_has_zero_attribution() {
        let x = array![[1.0, 2.0], [3.0, 4.0]];
        let y = [2.0, 2.0];
        let f = fit_forest(x.view(), Targets::Values(&y), &names(2), &ForestConfig::default()).unwrap();
        let e = tree_shap(&f, &[0.0, 0.0], ExplainTarget::Value).unwrap();
        assert_eq!(e.shap_values, vec![0.0, 0.0]);
        assert_eq!(e.base_value, 2.0);
    }

    #[test]
    fn stump_attributes_only_split_feature() {
        let x = array![[0.0, 5.0], [1.0, 3.0], [2.0, 9.0], [3.0, 1.0]];
        let y = [0.0, 0.0, 1.0, 1.0];
        let cfg = ForestConfig {
            n_trees: 1,
            bootstrap: false,
            max_depth: Some(1),
            features_per_split: FeaturesPerSplit::Count(1),
            ..ForestConfig::default()
        };
        // pick a seed whose single sampled feature is 0
        let f = (0..50)
            .map(|s| fit_forest(x.view(), Targets::Values(&y), &names(2), &cfg.with_seed(s)).unwrap())
            .find(|f| f.trees[0].nodes[0].feature == Some(0))
            .unwrap();
        let e = tree_shap(&f, &[3.0, 0.0], ExplainTarget::Value).unwrap();
        assert_eq!(e.shap_values[1], 0.0);
        assert!((e.shap_values[0] - 0.5).abs() < 1e-12);
        assert!(e.local_accuracy_gap() < 1e-12);
    }

    #[test]
    fn matches_oracle_small_classifier() {
        let x = Array2::from_shape_fn((40, 4), |(i, j)| ((i * (j + 3) * 7919) % 101) as f64 / 101.0);
        let y: Vec<usize> = (0..40).map(|i| ((x[[i, 0]] + x[[i, 2]]) > 1.0) as usize).collect();
        let cfg = ForestConfig {
            n_trees: 7,
            seed: 5,
            ..ForestConfig::default()
        };
        let f = fit_forest(x.view(), Targets::classes(&y), &names(4), &cfg).unwrap();
        for i in 0..10 {
            let row = x.row(i).to_vec();
            let a = tree_shap(&f, &row, ExplainTarget::Class(1)).unwrap();
            let b = brute_force_shapley(&f, &row, ExplainTarget::Class(1)).unwrap();
            for (p, q) in a.shap_values.iter().zip(&b.shap_values) {
                assert!((p - q).abs() < 1e-9, "{p} vs {q}");
            }
            assert!((a.base_value - b.base_value).abs() < 1e-12);
            assert!((a.prediction - f.predict_proba(&row).unwrap()[1]).abs() < 1e-12);
            assert!(a.local_accuracy_gap() < 1e-9);
        }
    }

    #[test]
    fn oracle_feature_limit_and_target_checks() {
        let x = Array2::from_shape_fn((5, 13), |(i, j)| (i + j) as f64);
        let y = [0.0, 1.0, 0.0, 1.0, 0.5];
        let f = fit_forest(x.view(), Targets::Values(&y), &names(13), &ForestConfig::default()).unwrap();
        let row = x.row(0).to_vec();
        let err = brute_force_shapley(&f, &row, ExplainTarget::Value).unwrap_err();
        assert!(err.to_string().contains("oracle limited to 12 features"));
        assert!(tree_shap(&f, &row, ExplainTarget::Class(0)).is_err());
        assert!(tree_shap(&f, &row[..3], ExplainTarget::Value).is_err());
    }

    #[test]
    fn summary_ties_keep_name_order() {
        let e = Explanation {
            base_value: 0.0,
            shap_values: vec![0.0; 3],
            prediction: 0.0,
            features: vec![1.0, 2.0, 3.0],
        };
        let rows = summarize(&[e.clone(), e], &names(3));
        let order: Vec<&str> = rows.iter().map(|r| r.feature.as_str()).collect();
        assert_eq!(order, ["f0", "f1", "f2"]);
        assert!(rows.iter().all(|r| r.mean_abs_shap == 0.0));
    }

    #[test]
    fn summary_direction() {
        let mk = |x: f64, s: f64| Explanation {
            base_value: 0.0,
            shap_values: vec![s, -s],
            prediction: 0.0,
            features: vec![x, x],
        };
        let rows = summarize(&[mk(1.0, -0.5), mk(3.0, 0.5)], &names(2));
        let r0 = rows.iter().find(|r| r.feature == "f0").unwrap();
        let r1 = rows.iter().find(|r| r.feature == "f1").unwrap();
        assert_eq!(r0.sign_agreement, 1.0);
        assert!(r0.signed_effect > 0.0);
        assert_eq!(r1.sign_agreement, 0.0);
        assert!(r1.signed_effect < 0.0);
    }
}
