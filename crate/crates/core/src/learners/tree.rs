//! CART classification tree grown by greedy Gini-impurity minimization.
//!
//! Split scores are compared with exact integer arithmetic so that equally
//! good splits really tie; ties go to the lowest feature index, then the
//! lowest threshold (or level index for nominal features).

use rand::seq::index;
use rand_chacha::ChaCha8Rng;

use super::{Feature, TrainingData};
use crate::model::argmax_first;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_split: usize,
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { max_depth: 30, min_split: 20, min_leaf: 7 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitRule {
    /// Rows with `value <= threshold` go left.
    Threshold(f64),
    /// Rows with this level go left, all others right.
    Level(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf {
        counts: Vec<u32>,
    },
    Split {
        feature: usize,
        rule: SplitRule,
        /// Impurity decrease achieved by this split.
        gain: f64,
        counts: Vec<u32>,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    pub fn counts(&self) -> &[u32] {
        match self {
            Node::Leaf { counts } | Node::Split { counts, .. } => counts,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaves(&self) -> Vec<&Node> {
        match self {
            Node::Leaf { .. } => vec![self],
            Node::Split { left, right, .. } => {
                let mut v = left.leaves();
                v.extend(right.leaves());
                v
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeModel {
    pub root: Node,
    pub n_classes: usize,
}

impl TreeModel {
    pub fn predict_proba(&self, data: &TrainingData, row: usize) -> Vec<f64> {
        let counts = self.leaf_for(data, row).counts();
        let total: u32 = counts.iter().sum();
        if total == 0 {
            return vec![1.0 / self.n_classes as f64; self.n_classes];
        }
        counts.iter().map(|&c| f64::from(c) / f64::from(total)).collect()
    }

    pub fn predict(&self, data: &TrainingData, row: usize) -> usize {
        argmax_first(self.leaf_for(data, row).counts().iter().map(|&c| f64::from(c)).collect::<Vec<_>>().as_slice())
            .unwrap_or(0)
    }

    fn leaf_for(&self, data: &TrainingData, row: usize) -> &Node {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf { .. } => return node,
                Node::Split { feature, rule, left, right, .. } => {
                    node = if goes_left(&data.features[*feature], *rule, row) { left } else { right };
                }
            }
        }
    }
}

fn goes_left(feature: &Feature, rule: SplitRule, row: usize) -> bool {
    match (feature, rule) {
        (Feature::Numeric(values), SplitRule::Threshold(t)) => values[row] <= t,
        (Feature::Nominal { codes, .. }, SplitRule::Level(level)) => codes[row] == level,
        _ => unreachable!("split rule does not match feature type"),
    }
}

/// Best split found at a node, with its score kept as an exact fraction
/// `num / den` of Σ cL²/nL + Σ cR²/nR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub feature: usize,
    pub rule: SplitRule,
    num: u128,
    den: u128,
}

impl Candidate {
    fn beats(&self, other: &Candidate) -> bool {
        self.num * other.den > other.num * self.den
    }
}

fn sum_sq(counts: &[u32]) -> u128 {
    counts.iter().map(|&c| u128::from(c) * u128::from(c)).sum()
}

/// Impurity decrease `G(parent) - nL/n G(L) - nR/n G(R)` from class counts.
pub fn gini_gain(left: &[u32], right: &[u32]) -> f64 {
    let nl: u32 = left.iter().sum();
    let nr: u32 = right.iter().sum();
    let n = f64::from(nl + nr);
    let parent: Vec<u32> = left.iter().zip(right).map(|(a, b)| a + b).collect();
    let s = sum_sq(left) as f64 / f64::from(nl) + sum_sq(right) as f64 / f64::from(nr);
    (s - sum_sq(&parent) as f64 / n) / n
}

/// Scans `features` (ascending) for the best split of `rows`. Returns `None`
/// when no split has positive impurity decrease under the `min_leaf` limit.
pub fn best_split(
    data: &TrainingData,
    rows: &[usize],
    features: &[usize],
    min_leaf: usize,
) -> Option<(Candidate, f64)> {
    let k = data.n_classes;
    let n = rows.len();
    let mut parent = vec![0u32; k];
    for &r in rows {
        parent[data.labels[r]] += 1;
    }
    let parent_sq = sum_sq(&parent);
    let mut best: Option<Candidate> = None;
    let mut consider = |cand: Candidate| {
        if best.as_ref().is_none_or(|b| cand.beats(b)) {
            best = Some(cand);
        }
    };

    let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(n);
    for &f in features {
        match &data.features[f] {
            Feature::Numeric(values) => {
                pairs.clear();
                pairs.extend(rows.iter().map(|&r| (values[r], data.labels[r])));
                pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
                let mut left = vec![0u32; k];
                let mut right = parent.clone();
                let mut sq_left: u128 = 0;
                let mut sq_right: u128 = parent_sq;
                for i in 0..n - 1 {
                    let c = pairs[i].1;
                    sq_left += 2 * u128::from(left[c]) + 1;
                    sq_right -= 2 * u128::from(right[c]) - 1;
                    left[c] += 1;
                    right[c] -= 1;
                    let (a, b) = (pairs[i].0, pairs[i + 1].0);
                    if a == b {
                        continue;
                    }
                    let nl = (i + 1) as u128;
                    let nr = (n - i - 1) as u128;
                    if (nl as usize) < min_leaf || (nr as usize) < min_leaf {
                        continue;
                    }
                    consider(Candidate {
                        feature: f,
                        rule: SplitRule::Threshold(midpoint(a, b)),
                        num: sq_left * nr + sq_right * nl,
                        den: nl * nr,
                    });
                }
            }
            Feature::Nominal { n_levels, codes } => {
                let mut by_level = vec![vec![0u32; k]; *n_levels];
                for &r in rows {
                    by_level[codes[r] as usize][data.labels[r]] += 1;
                }
                for (level, left) in by_level.iter().enumerate() {
                    let nl: u32 = left.iter().sum();
                    let nr = n as u32 - nl;
                    if (nl as usize) < min_leaf.max(1) || (nr as usize) < min_leaf.max(1) {
                        continue;
                    }
                    let right: Vec<u32> = parent.iter().zip(left).map(|(p, l)| p - l).collect();
                    let (nl, nr) = (u128::from(nl), u128::from(nr));
                    consider(Candidate {
                        feature: f,
                        rule: SplitRule::Level(level as u32),
                        num: sum_sq(left) * nr + sum_sq(&right) * nl,
                        den: nl * nr,
                    });
                }
            }
        }
    }

    // Positive gain iff num/den > Σc²/n.
    let best = best?;
    if best.num * n as u128 <= parent_sq * best.den {
        return None;
    }
    let gain = (best.num as f64 / best.den as f64 - parent_sq as f64 / n as f64) / n as f64;
    Some((best, gain))
}

fn midpoint(a: f64, b: f64) -> f64 {
    let mid = a / 2.0 + b / 2.0;
    if mid >= b || mid < a {
        a
    } else {
        mid
    }
}

/// Per-node feature subsampling for random forests.
pub struct FeatureSampler<'a> {
    pub mtry: usize,
    pub rng: &'a mut ChaCha8Rng,
}

pub fn fit_tree(
    data: &TrainingData,
    rows: &[usize],
    params: &TreeParams,
    mut sampler: Option<FeatureSampler<'_>>,
) -> TreeModel {
    let all: Vec<usize> = (0..data.features.len()).collect();
    let root = grow(data, rows.to_vec(), 0, params, &all, &mut sampler);
    TreeModel { root, n_classes: data.n_classes }
}

fn grow(
    data: &TrainingData,
    rows: Vec<usize>,
    depth: usize,
    params: &TreeParams,
    all: &[usize],
    sampler: &mut Option<FeatureSampler<'_>>,
) -> Node {
    let mut counts = vec![0u32; data.n_classes];
    for &r in &rows {
        counts[data.labels[r]] += 1;
    }
    let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
    if pure || depth >= params.max_depth || rows.len() < params.min_split {
        return Node::Leaf { counts };
    }
    let sampled;
    let features: &[usize] = match sampler {
        Some(s) if s.mtry < all.len() => {
            let mut picked = index::sample(s.rng, all.len(), s.mtry).into_vec();
            picked.sort_unstable();
            sampled = picked;
            &sampled
        }
        _ => all,
    };
    let Some((cand, gain)) = best_split(data, &rows, features, params.min_leaf) else {
        return Node::Leaf { counts };
    };
    let feature = &data.features[cand.feature];
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
        rows.into_iter().partition(|&r| goes_left(feature, cand.rule, r));
    let left = grow(data, left_rows, depth + 1, params, all, sampler);
    let right = grow(data, right_rows, depth + 1, params, all, sampler);
    Node::Split { feature: cand.feature, rule: cand.rule, gain, counts, left: Box::new(left), right: Box::new(right) }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric_data(columns: Vec<Vec<f64>>, labels: Vec<usize>, n_classes: usize) -> TrainingData {
        TrainingData::from_parts(columns.into_iter().map(Feature::Numeric).collect(), labels, n_classes)
    }

    fn loose() -> TreeParams {
        TreeParams { max_depth: 30, min_split: 2, min_leaf: 1 }
    }

    #[test]
    fn single_class_is_a_leaf() {
        let data = numeric_data(vec![vec![1.0, 2.0, 3.0]], vec![1, 1, 1], 2);
        let tree = fit_tree(&data, &[0, 1, 2], &loose(), None);
        assert_eq!(tree.root, Node::Leaf { counts: vec![0, 3] });
        assert_eq!(tree.predict(&data, 0), 1);
    }

    #[test]
    fn one_split_separates_sign() {
        let xs = vec![-3.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0];
        let labels: Vec<usize> = xs.iter().map(|&x| usize::from(x >= 0.0)).collect();
        let data = numeric_data(vec![xs], labels.clone(), 2);
        let rows: Vec<usize> = (0..8).collect();
        let tree = fit_tree(&data, &rows, &loose(), None);
        assert_eq!(tree.root.depth(), 1);
        match &tree.root {
            Node::Split { rule: SplitRule::Threshold(t), gain, .. } => {
                assert_eq!(*t, -0.25);
                assert!((gain - 0.5).abs() < 1e-15);
            }
            other => panic!("{other:?}"),
        }
        assert!(rows.iter().all(|&r| tree.predict(&data, r) == labels[r]));
    }

    #[test]
    fn four_row_toy_matches_exhaustive_search() {
        // Two features; feature 1 separates perfectly, feature 0 only partly.
        let data = numeric_data(vec![vec![1.0, 2.0, 3.0, 4.0], vec![5.0, 1.0, 6.0, 2.0]], vec![0, 1, 0, 1], 2);
        let rows = [0, 1, 2, 3];
        // Oracle: every (feature, midpoint) candidate, scored by the textbook formula.
        let mut best = (f64::NEG_INFINITY, 0usize, 0.0f64);
        for f in 0..2 {
            let Feature::Numeric(col) = &data.features[f] else { unreachable!() };
            let mut vals: Vec<f64> = col.clone();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let t = (w[0] + w[1]) / 2.0;
                let mut l = [0u32; 2];
                let mut r = [0u32; 2];
                for &i in &rows {
                    if col[i] <= t { l[data.labels[i]] += 1 } else { r[data.labels[i]] += 1 }
                }
                let g = |c: &[u32; 2]| {
                    let n = f64::from(c[0] + c[1]);
                    1.0 - (f64::from(c[0]) / n).powi(2) - (f64::from(c[1]) / n).powi(2)
                };
                let dg = 0.5 - f64::from(l[0] + l[1]) / 4.0 * g(&l) - f64::from(r[0] + r[1]) / 4.0 * g(&r);
                if dg > best.0 + 1e-12 {
                    best = (dg, f, t);
                }
            }
        }
        let (cand, gain) = best_split(&data, &rows, &[0, 1], 1).unwrap();
        assert_eq!((cand.feature, cand.rule), (best.1, SplitRule::Threshold(best.2)));
        assert!((gain - best.0).abs() < 1e-12);
        assert_eq!((best.1, best.2), (1, 3.5));
    }

    #[test]
    fn nominal_one_vs_rest() {
        let data = TrainingData::from_parts(
            vec![Feature::Nominal { n_levels: 3, codes: vec![0, 1, 2, 2, 1, 0] }],
            vec![0, 0, 1, 1, 0, 0],
            2,
        );
        let (cand, _) = best_split(&data, &[0, 1, 2, 3, 4, 5], &[0], 1).unwrap();
        assert_eq!(cand.rule, SplitRule::Level(2));
    }

    #[test]
    fn limits_are_respected() {
        let xs: Vec<f64> = (0..64).map(f64::from).collect();
        let labels: Vec<usize> = (0..64).map(|i| (i / 3) % 2).collect();
        let data = numeric_data(vec![xs], labels, 2);
        let rows: Vec<usize> = (0..64).collect();
        let params = TreeParams { max_depth: 3, min_split: 10, min_leaf: 4 };
        let tree = fit_tree(&data, &rows, &params, None);
        assert!(tree.root.depth() <= 3);
        for leaf in tree.root.leaves() {
            assert!(leaf.counts().iter().sum::<u32>() >= 4);
        }
        let total: u32 = tree.root.leaves().iter().map(|l| l.counts().iter().sum::<u32>()).sum();
        assert_eq!(total, 64);
    }

    #[test]
    fn constant_features_give_leaf() {
        let data = numeric_data(vec![vec![1.0; 4]], vec![0, 1, 0, 1], 2);
        let tree = fit_tree(&data, &[0, 1, 2, 3], &loose(), None);
        assert!(matches!(tree.root, Node::Leaf { .. }));
        assert_eq!(tree.predict_proba(&data, 0), vec![0.5, 0.5]);
        assert_eq!(tree.predict(&data, 0), 0);
    }

    #[test]
    fn midpoint_stays_between_neighbours() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let m = midpoint(a, b);
        assert!(a <= m && m < b);
        assert_eq!(midpoint(-1e308, 1e308), 0.0);
    }
}
