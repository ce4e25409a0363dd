//! CART classification trees with Gini splits, bagged into a forest.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seed::SeedMixer;

/// Gini impurity of (negative, positive) counts.
pub fn gini(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = counts[1] as f64 / n;
    2.0 * p * (1.0 - p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxFeatures {
    /// max(1, ⌊√d⌋)
    Sqrt,
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfParams {
    pub n_trees: usize,
    pub bootstrap: bool,
    pub max_features: MaxFeatures,
    pub min_samples_split: usize,
    pub seed: u64,
}

impl Default for RfParams {
    fn default() -> Self {
        RfParams {
            n_trees: 10,
            bootstrap: true,
            max_features: MaxFeatures::Sqrt,
            min_samples_split: 2,
            seed: 0,
        }
    }
}

impl RfParams {
    /// One unbagged tree considering every feature at each node.
    pub fn diagnostic(seed: u64) -> Self {
        RfParams {
            n_trees: 1,
            bootstrap: false,
            max_features: MaxFeatures::All,
            min_samples_split: 2,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    /// Class counts `[not_solved, solved]` of the training samples reaching the leaf.
    Leaf { counts: [usize; 2] },
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn leaf(&self, x: &[f64]) -> [usize; 2] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { counts } => return *counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    /// Majority class at the leaf; ties are `false` (not solved).
    pub fn predict(&self, x: &[f64]) -> bool {
        let c = self.leaf(x);
        c[1] > c[0]
    }

    pub fn proba(&self, x: &[f64]) -> f64 {
        let c = self.leaf(x);
        c[1] as f64 / (c[0] + c[1]) as f64
    }
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [bool],
    max_features: usize,
    min_samples_split: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    features: Vec<usize>,
}

impl Builder<'_> {
    fn counts(&self, samples: &[usize]) -> [usize; 2] {
        let pos = samples.iter().filter(|&&i| self.y[i]).count();
        [samples.len() - pos, pos]
    }

    /// Best threshold on one feature: (weighted child impurity, threshold),
    /// or `None` when the feature is constant on these samples.
    fn best_on_feature(&self, samples: &mut [usize], f: usize, total: [usize; 2]) -> Option<(f64, f64)> {
        samples.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
        let first = self.x[samples[0]][f];
        let last = self.x[samples[samples.len() - 1]][f];
        if first == last {
            return None;
        }
        let n = samples.len();
        let mut left = [0usize; 2];
        let mut best: Option<(f64, f64)> = None;
        for i in 0..n - 1 {
            left[self.y[samples[i]] as usize] += 1;
            let a = self.x[samples[i]][f];
            let b = self.x[samples[i + 1]][f];
            if a == b {
                continue;
            }
            let right = [total[0] - left[0], total[1] - left[1]];
            let nl = (i + 1) as f64;
            let nr = (n - i - 1) as f64;
            let impurity = (nl * gini(left) + nr * gini(right)) / n as f64;
            if best.map_or(true, |(bi, _)| impurity < bi) {
                let mut t = a + (b - a) / 2.0;
                if t >= b {
                    t = a;
                }
                best = Some((impurity, t));
            }
        }
        best
    }

    fn grow(&mut self, samples: &mut Vec<usize>) -> usize {
        let id = self.nodes.len();
        let counts = self.counts(samples);
        self.nodes.push(Node::Leaf { counts });
        if counts[0] == 0 || counts[1] == 0 || samples.len() < self.min_samples_split {
            return id;
        }
        // Draw features without replacement; constant ones do not count
        // towards the budget.
        let mut features = std::mem::take(&mut self.features);
        features.shuffle(&mut self.rng);
        let mut visited = 0;
        let mut best: Option<(f64, usize, f64)> = None;
        for &f in &features {
            if visited >= self.max_features {
                break;
            }
            if let Some((imp, t)) = self.best_on_feature(samples, f, counts) {
                visited += 1;
                if best.map_or(true, |(bi, _, _)| imp < bi) {
                    best = Some((imp, f, t));
                }
            }
        }
        self.features = features;
        let Some((_, feature, threshold)) = best else {
            return id;
        };
        let (mut l, mut r): (Vec<usize>, Vec<usize>) = samples.iter().partition(|&&i| self.x[i][feature] <= threshold);
        let left = self.grow(&mut l);
        let right = self.grow(&mut r);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
    pub n_features: usize,
}

impl RandomForest {
    /// Fits `params.n_trees` trees; labels are `true` for solved.
    pub fn train(x: &[Vec<f64>], y: &[bool], params: &RfParams) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::InvalidInput("random forest needs at least one sample".into()));
        }
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        if params.n_trees == 0 {
            return Err(Error::Config("random forest needs at least one tree".into()));
        }
        let d = x[0].len();
        if let Some(row) = x.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: row.len(),
            });
        }
        if x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("features must be finite".into()));
        }
        let max_features = match params.max_features {
            MaxFeatures::All => d,
            MaxFeatures::Sqrt => ((d as f64).sqrt().floor() as usize).max(1),
        };
        let n = x.len();
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = SeedMixer::new(params.seed).str("tree").int(t as u64).rng();
                let mut samples: Vec<usize> = if params.bootstrap {
                    (0..n).map(|_| rng.gen_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                let mut b = Builder {
                    x,
                    y,
                    max_features,
                    min_samples_split: params.min_samples_split.max(2),
                    rng,
                    nodes: Vec::new(),
                    features: (0..d).collect(),
                };
                b.grow(&mut samples);
                DecisionTree { nodes: b.nodes }
            })
            .collect();
        Ok(RandomForest { trees, n_features: d })
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Majority vote of the trees; a tied vote is `false`.
    pub fn predict(&self, x: &[f64]) -> Result<bool> {
        self.check(x)?;
        let votes = self.trees.iter().filter(|t| t.predict(x)).count();
        Ok(2 * votes > self.trees.len())
    }

    /// Mean over trees of the solved fraction at the reached leaf.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        Ok(self.trees.iter().map(|t| t.proba(x)).sum::<f64>() / self.trees.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn gini_values() {
        assert_eq!(gini([5, 5]), 0.5);
        assert_eq!(gini([10, 0]), 0.0);
        assert_eq!(gini([0, 0]), 0.0);
    }

    #[test]
    fn single_class_predicts_that_class() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i * 7 % 3) as f64]).collect();
        for label in [true, false] {
            let rf = RandomForest::train(&x, &vec![label; 20], &RfParams::default()).unwrap();
            for row in &x {
                assert_eq!(rf.predict(row).unwrap(), label);
            }
            assert_eq!(rf.predict(&[100.0, -3.0]).unwrap(), label);
        }
    }

    #[test]
    fn two_points_one_tree() {
        let x = vec![vec![0.0, 1.0], vec![1.0, 1.0]];
        let y = vec![false, true];
        let rf = RandomForest::train(&x, &y, &RfParams::diagnostic(0)).unwrap();
        assert!(!rf.predict(&x[0]).unwrap());
        assert!(rf.predict(&x[1]).unwrap());
        if let Node::Split { threshold, .. } = rf.trees[0].nodes[0] {
            assert_eq!(threshold, 0.5);
        } else {
            panic!("root must split");
        }
    }

    #[test]
    fn tied_vote_is_not_solved() {
        let solved = DecisionTree { nodes: vec![Node::Leaf { counts: [0, 3] }] };
        let not = DecisionTree { nodes: vec![Node::Leaf { counts: [3, 0] }] };
        let rf = RandomForest {
            trees: (0..10).map(|i| if i < 5 { solved.clone() } else { not.clone() }).collect(),
            n_features: 1,
        };
        assert!(!rf.predict(&[0.0]).unwrap());
        assert_eq!(rf.predict_proba(&[0.0]).unwrap(), 0.5);
        let all = RandomForest { trees: vec![solved; 10], n_features: 1 };
        assert_eq!(all.predict_proba(&[0.0]).unwrap(), 1.0);
    }

    #[test]
    fn errors() {
        assert!(RandomForest::train(&[], &[], &RfParams::default()).is_err());
        let rf = RandomForest::train(&[vec![1.0, 2.0]], &[true], &RfParams::default()).unwrap();
        assert!(matches!(rf.predict(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    fn dataset(seed: u64, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut rng = SeedMixer::new(seed).rng();
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let y = x.iter().map(|r| r[0] * r[1 % d] + 0.3 * r[d - 1] > 0.0).collect();
        (x, y)
    }

    fn check_tree(tree: &DecisionTree, x: &[Vec<f64>]) {
        for node in &tree.nodes {
            match node {
                Node::Split { feature, threshold, .. } => {
                    let lo = x.iter().map(|r| r[*feature]).fold(f64::INFINITY, f64::min);
                    let hi = x.iter().map(|r| r[*feature]).fold(f64::NEG_INFINITY, f64::max);
                    assert!(lo <= *threshold && *threshold <= hi);
                }
                Node::Leaf { counts } => assert!(counts[0] + counts[1] > 0),
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn diagnostic_tree_fits_training_data(seed in any::<u64>(), n in 2usize..80, d in 1usize..6) {
            let (x, y) = dataset(seed, n, d);
            let rf = RandomForest::train(&x, &y, &RfParams::diagnostic(seed)).unwrap();
            for (row, label) in x.iter().zip(&y) {
                prop_assert_eq!(rf.predict(row).unwrap(), *label);
            }
        }

        #[test]
        fn forest_vote_matches_brute_force(seed in any::<u64>(), n in 5usize..60) {
            let (x, y) = dataset(seed, n, 4);
            let rf = RandomForest::train(&x, &y, &RfParams { seed, ..Default::default() }).unwrap();
            prop_assert_eq!(rf.trees.len(), 10);
            for t in &rf.trees {
                check_tree(t, &x);
                // leaf counts sum to the bootstrap sample size
                let total: usize = t.nodes.iter().map(|nd| match nd {
                    Node::Leaf { counts } => counts[0] + counts[1],
                    _ => 0,
                }).sum();
                prop_assert_eq!(total, n);
            }
            let (q, _) = dataset(seed ^ 1, 20, 4);
            for row in &q {
                let votes = rf.trees.iter().filter(|t| t.predict(row)).count();
                prop_assert_eq!(rf.predict(row).unwrap(), votes * 2 > rf.trees.len());
                let p = rf.predict_proba(row).unwrap();
                prop_assert!((0.0..=1.0).contains(&p));
            }
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (x, y) = dataset(3, 50, 6);
        let p = RfParams { seed: 8, ..Default::default() };
        assert_eq!(RandomForest::train(&x, &y, &p).unwrap(), RandomForest::train(&x, &y, &p).unwrap());
    }
}
