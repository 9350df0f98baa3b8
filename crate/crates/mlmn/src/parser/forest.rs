//! From-scratch random forest: axis-aligned splits chosen by Gini
//! gain over bootstrap resamples.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::clause::ClauseLabel;
use super::features::ClauseFeatures;
use super::ParserError;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        counts: [usize; 2],
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<TreeNode>,
}

impl DecisionTree {
    /// Class counts at the leaf this sample falls into.
    fn leaf_counts(&self, features: &[f64]) -> [usize; 2] {
        let mut idx = 0usize;
        loop {
            match &self.nodes[idx] {
                TreeNode::Leaf { counts } => return *counts,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if features[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    pub fn predict(&self, features: &[f64]) -> ClauseLabel {
        let counts = self.leaf_counts(features);
        if counts[1] > counts[0] {
            ClauseLabel::Conclusion
        } else {
            ClauseLabel::Premise
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RandomForest {
    trees: Vec<DecisionTree>,
    pub feature_width: usize,
    pub n_trees: usize,
    pub max_depth: usize,
    pub seed: u64,
}

fn label_index(label: ClauseLabel) -> usize {
    match label {
        ClauseLabel::Conclusion => 1,
        _ => 0,
    }
}

fn gini(counts: [usize; 2]) -> f64 {
    let total = (counts[0] + counts[1]) as f64;
    if total == 0.0 {
        return 0.0;
    }
    let p0 = counts[0] as f64 / total;
    let p1 = counts[1] as f64 / total;
    1.0 - p0 * p0 - p1 * p1
}

struct TreeBuilder<'a> {
    features: &'a [Vec<f64>],
    labels: &'a [usize],
    max_depth: usize,
    n_subset: usize,
    nodes: Vec<TreeNode>,
}

impl TreeBuilder<'_> {
    fn build(&mut self, indices: &[usize], depth: usize, rng: &mut impl Rng) -> usize {
        let mut counts = [0usize; 2];
        for &i in indices {
            counts[self.labels[i]] += 1;
        }
        if depth >= self.max_depth || counts[0] == 0 || counts[1] == 0 {
            self.nodes.push(TreeNode::Leaf { counts });
            return self.nodes.len() - 1;
        }
        let width = self.features[0].len();
        let mut candidates: Vec<usize> = (0..width).collect();
        candidates.shuffle(rng);
        candidates.truncate(self.n_subset);

        let parent_impurity = gini(counts);
        let mut best: Option<(f64, usize, f64)> = None; // (gain, feature, threshold)
        for &feature in &candidates {
            let mut values: Vec<f64> = indices.iter().map(|&i| self.features[i][feature]).collect();
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            values.dedup();
            for pair in values.windows(2) {
                let threshold = (pair[0] + pair[1]) / 2.0;
                let mut left = [0usize; 2];
                let mut right = [0usize; 2];
                for &i in indices {
                    if self.features[i][feature] <= threshold {
                        left[self.labels[i]] += 1;
                    } else {
                        right[self.labels[i]] += 1;
                    }
                }
                let nl = (left[0] + left[1]) as f64;
                let nr = (right[0] + right[1]) as f64;
                let total = nl + nr;
                let gain = parent_impurity - (nl / total) * gini(left) - (nr / total) * gini(right);
                if best.is_none() || gain > best.unwrap().0 {
                    best = Some((gain, feature, threshold));
                }
            }
        }
        match best {
            Some((gain, feature, threshold)) if gain > 1e-12 => {
                let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
                    .iter()
                    .partition(|&&i| self.features[i][feature] <= threshold);
                let slot = self.nodes.len();
                self.nodes.push(TreeNode::Leaf { counts }); // placeholder
                let left = self.build(&left_idx, depth + 1, rng);
                let right = self.build(&right_idx, depth + 1, rng);
                self.nodes[slot] = TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
                slot
            }
            _ => {
                self.nodes.push(TreeNode::Leaf { counts });
                self.nodes.len() - 1
            }
        }
    }
}

/// Fits `n_trees` trees, each on a bootstrap resample of the training
/// set, with splits restricted to a random feature subset of size
/// ceil(sqrt(width)). Deterministic under `seed`.
pub fn train_forest(
    examples: &[(ClauseFeatures, ClauseLabel)],
    n_trees: usize,
    max_depth: usize,
    seed: u64,
) -> Result<RandomForest, ParserError> {
    if examples.is_empty() {
        return Err(ParserError::BadTrainingSet("no training examples".into()));
    }
    let labels: Vec<usize> = examples.iter().map(|(_, l)| label_index(*l)).collect();
    if labels.iter().all(|&l| l == 0) || labels.iter().all(|&l| l == 1) {
        return Err(ParserError::BadTrainingSet(
            "training set contains a single class".into(),
        ));
    }
    let features: Vec<Vec<f64>> = examples.iter().map(|(f, _)| f.0.clone()).collect();
    let width = features[0].len();
    if features.iter().any(|f| f.len() != width) {
        return Err(ParserError::BadTrainingSet(
            "inconsistent feature widths".into(),
        ));
    }
    let n_subset = (width as f64).sqrt().ceil() as usize;

    let mut trees = Vec::with_capacity(n_trees);
    for t in 0..n_trees {
        // independent per-tree stream derived from the master seed
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64).wrapping_mul(0x9E3779B97F4A7C15));
        let indices: Vec<usize> = (0..examples.len())
            .map(|_| rng.gen_range(0..examples.len()))
            .collect();
        let mut builder = TreeBuilder {
            features: &features,
            labels: &labels,
            max_depth,
            n_subset,
            nodes: Vec::new(),
        };
        builder.build(&indices, 0, &mut rng);
        trees.push(DecisionTree {
            nodes: builder.nodes,
        });
    }
    Ok(RandomForest {
        trees,
        feature_width: width,
        n_trees,
        max_depth,
        seed,
    })
}

impl RandomForest {
    /// Majority vote over trees; ties break toward premise.
    pub fn predict(&self, features: &ClauseFeatures) -> Result<ClauseLabel, ParserError> {
        if features.0.len() != self.feature_width {
            return Err(ParserError::FeatureWidth {
                expected: self.feature_width,
                got: features.0.len(),
            });
        }
        let conclusion_votes = self
            .trees
            .iter()
            .filter(|t| t.predict(&features.0) == ClauseLabel::Conclusion)
            .count();
        Ok(if conclusion_votes * 2 > self.trees.len() {
            ClauseLabel::Conclusion
        } else {
            ClauseLabel::Premise
        })
    }

    pub fn tree_predictions(&self, features: &[f64]) -> Vec<ClauseLabel> {
        self.trees.iter().map(|t| t.predict(features)).collect()
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), ParserError> {
        let json = serde_json::to_string(self).map_err(|e| ParserError::BadTrainingSet(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| ParserError::LexiconIo {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ParserError> {
        let json = std::fs::read_to_string(path).map_err(|e| ParserError::LexiconIo {
            path: path.display().to_string(),
            source: e,
        })?;
        serde_json::from_str(&json).map_err(|e| ParserError::BadTrainingSet(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable_set(n: usize) -> Vec<(ClauseFeatures, ClauseLabel)> {
        // premise clauses carry feature 0, conclusions feature 1
        (0..n)
            .map(|i| {
                if i % 2 == 0 {
                    (
                        ClauseFeatures(vec![1.0, 0.0, i as f64 / n as f64]),
                        ClauseLabel::Premise,
                    )
                } else {
                    (
                        ClauseFeatures(vec![0.0, 1.0, i as f64 / n as f64]),
                        ClauseLabel::Conclusion,
                    )
                }
            })
            .collect()
    }

    #[test]
    fn one_tree_forest_equals_its_tree() {
        let data = separable_set(40);
        let forest = train_forest(&data, 1, 10, 3).unwrap();
        for (f, _) in &data {
            let tree_pred = forest.trees[0].predict(&f.0);
            assert_eq!(forest.predict(f).unwrap(), tree_pred);
        }
    }

    #[test]
    fn separable_training_accuracy_is_one() {
        let data = separable_set(60);
        let forest = train_forest(&data, 20, 10, 0).unwrap();
        for (f, label) in &data {
            assert_eq!(forest.predict(f).unwrap(), *label);
        }
    }

    #[test]
    fn single_class_rejected() {
        let data: Vec<_> = (0..10)
            .map(|_| (ClauseFeatures(vec![1.0, 0.0]), ClauseLabel::Premise))
            .collect();
        assert!(train_forest(&data, 5, 5, 0).is_err());
    }

    #[test]
    fn width_mismatch_rejected() {
        let data = separable_set(20);
        let forest = train_forest(&data, 3, 5, 0).unwrap();
        assert!(forest.predict(&ClauseFeatures(vec![1.0])).is_err());
    }

    #[test]
    fn deterministic_under_seed() {
        let data = separable_set(30);
        let a = train_forest(&data, 8, 6, 42).unwrap();
        let b = train_forest(&data, 8, 6, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn vote_is_order_free_and_ties_go_premise() {
        // craft a forest whose trees disagree by training on noisy data
        let mut data = separable_set(30);
        // flip some labels to force disagreement between trees
        for (i, (_, l)) in data.iter_mut().enumerate() {
            if i % 7 == 0 {
                *l = ClauseLabel::Premise;
            }
        }
        let forest = train_forest(&data, 2, 1, 11).unwrap();
        // with an even number of trees a 1/1 split must yield premise
        let probe = ClauseFeatures(vec![0.5, 0.5, 0.5]);
        let votes = forest.tree_predictions(&probe.0);
        if votes[0] != votes[1] {
            assert_eq!(forest.predict(&probe).unwrap(), ClauseLabel::Premise);
        }
        // vote counting ignores tree order
        let mut reversed = forest.clone();
        reversed.trees.reverse();
        assert_eq!(
            forest.predict(&probe).unwrap(),
            reversed.predict(&probe).unwrap()
        );
    }
}
