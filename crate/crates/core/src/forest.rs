//! Random forest of CART trees (Gini impurity, bootstrap sampling,
//! per-split feature subsampling) for binary or multi-class problems.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` grows trees until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Features tried per split; `None` means `ceil(sqrt(d))`.
    pub max_features: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { n_trees: 100, max_depth: None, min_samples_split: 2, max_features: None, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { probs: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_proba(&self, x: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { probs } => return probs,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub config: ForestConfig,
    pub num_features: usize,
    pub num_classes: usize,
    pub trees: Vec<Tree>,
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    classes: usize,
    features: usize,
    max_features: usize,
    cfg: &'a ForestConfig,
    nodes: Vec<Node>,
}

fn gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n) * (c as f64 / n)).sum::<f64>()
}

impl Builder<'_> {
    fn leaf(&mut self, idx: &[usize]) -> usize {
        let mut probs = vec![0.0; self.classes];
        for &i in idx {
            probs[self.y[i]] += 1.0;
        }
        let n = idx.len().max(1) as f64;
        probs.iter_mut().for_each(|p| *p /= n);
        self.nodes.push(Node::Leaf { probs });
        self.nodes.len() - 1
    }

    fn best_split(&self, idx: &[usize], rng: &mut ChaCha8Rng) -> Option<(usize, f64, f64)> {
        let mut total = vec![0usize; self.classes];
        idx.iter().for_each(|&i| total[self.y[i]] += 1);
        let parent = gini(&total, idx.len());
        let mut best: Option<(usize, f64, f64)> = None;
        let mut order: Vec<usize> = idx.to_vec();
        for f in sample(rng, self.features, self.max_features).into_iter() {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
            let mut left = vec![0usize; self.classes];
            for k in 1..order.len() {
                left[self.y[order[k - 1]]] += 1;
                let (lo, hi) = (self.x[order[k - 1]][f], self.x[order[k]][f]);
                if lo == hi {
                    continue;
                }
                let right: Vec<usize> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
                let n = order.len() as f64;
                let impurity = (k as f64 * gini(&left, k) + (n - k as f64) * gini(&right, order.len() - k)) / n;
                let gain = parent - impurity;
                if gain > 1e-12 && best.map_or(true, |b| gain > b.2) {
                    best = Some((f, lo + (hi - lo) / 2.0, gain));
                }
            }
        }
        best
    }

    fn grow(&mut self, idx: &[usize], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let pure = idx.iter().all(|&i| self.y[i] == self.y[idx[0]]);
        let deep = self.cfg.max_depth.is_some_and(|d| depth >= d);
        if pure || deep || idx.len() < self.cfg.min_samples_split.max(2) {
            return self.leaf(idx);
        }
        let Some((feature, threshold, _)) = self.best_split(idx, rng) else {
            return self.leaf(idx);
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][feature] <= threshold);
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { probs: Vec::new() });
        let left = self.grow(&l, depth + 1, rng);
        let right = self.grow(&r, depth + 1, rng);
        self.nodes[slot] = Node::Split { feature, threshold, left, right };
        slot
    }
}

impl RandomForest {
    /// Fits a forest on rows `x` with class ids `y < num_classes`.
    pub fn fit(x: &[Vec<f64>], y: &[usize], num_classes: usize, config: ForestConfig) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::InvalidData(alloc::format!("{} feature rows for {} targets", x.len(), y.len())));
        }
        let d = x[0].len();
        if d == 0 || x.iter().any(|r| r.len() != d || r.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidData("feature rows must be finite and of equal length".into()));
        }
        if num_classes == 0 || y.iter().any(|&c| c >= num_classes) {
            return Err(Error::InvalidData("target outside the class range".into()));
        }
        if config.n_trees == 0 {
            return Err(Error::Config("forest needs at least one tree".into()));
        }
        let max_features =
            config.max_features.unwrap_or_else(|| Float::ceil(Float::sqrt(d as f64)) as usize).clamp(1, d);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut trees = Vec::with_capacity(config.n_trees);
        for _ in 0..config.n_trees {
            let boot: Vec<usize> = (0..x.len()).map(|_| rng.random_range(0..x.len())).collect();
            let mut b =
                Builder { x, y, classes: num_classes, features: d, max_features, cfg: &config, nodes: Vec::new() };
            b.grow(&boot, 0, &mut rng);
            trees.push(Tree { nodes: b.nodes });
        }
        Ok(Self { config, num_features: d, num_classes, trees })
    }

    /// Mean of the per-tree leaf class frequencies.
    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.num_features, "feature vector length");
        let mut p = vec![0.0; self.num_classes];
        for t in &self.trees {
            p.iter_mut().zip(t.predict_proba(x)).for_each(|(a, b)| *a += b);
        }
        p.iter_mut().for_each(|v| *v /= self.trees.len() as f64);
        p
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let p = self.predict_proba(x);
        (0..p.len()).fold(0, |b, i| if p[i] > p[b] { i } else { b })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xor_data(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let (a, b, noise): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
                (vec![a, b, noise], ((a > 0.5) ^ (b > 0.5)) as usize)
            })
            .unzip()
    }

    #[test]
    fn learns_xor() {
        let (x, y) = xor_data(400, 1);
        let rf = RandomForest::fit(&x, &y, 2, ForestConfig { n_trees: 30, ..Default::default() }).unwrap();
        let (tx, ty) = xor_data(200, 2);
        let correct = tx.iter().zip(&ty).filter(|(x, y)| rf.predict(x) == **y).count();
        assert!(correct >= 180, "{correct}/200");
    }

    #[test]
    fn probabilities_sum_to_one_and_fit_is_seeded() {
        let (x, y) = xor_data(100, 3);
        let cfg = ForestConfig { n_trees: 10, seed: 9, ..Default::default() };
        let a = RandomForest::fit(&x, &y, 2, cfg.clone()).unwrap();
        let b = RandomForest::fit(&x, &y, 2, cfg).unwrap();
        assert_eq!(a, b);
        let p = a.predict_proba(&[0.1, 0.9, 0.5]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_class_and_depth_limit() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        let rf = RandomForest::fit(&x, &[1, 1, 1], 2, ForestConfig { n_trees: 3, ..Default::default() }).unwrap();
        assert_eq!(rf.predict_proba(&[5.0]), vec![0.0, 1.0]);
        let stump =
            RandomForest::fit(&x, &[0, 1, 0], 2, ForestConfig { n_trees: 5, max_depth: Some(0), ..Default::default() })
                .unwrap();
        assert!(stump.trees.iter().all(|t| t.nodes.len() == 1));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RandomForest::fit(&[], &[], 2, ForestConfig::default()).is_err());
        assert!(RandomForest::fit(&[vec![0.0]], &[3], 2, ForestConfig::default()).is_err());
        assert!(RandomForest::fit(&[vec![f64::NAN]], &[0], 2, ForestConfig::default()).is_err());
    }
}
