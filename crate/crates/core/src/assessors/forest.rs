//! Bagged CART trees with per-split feature sampling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, Grower};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestOptions {
    pub n_trees: usize,
    /// Draw each tree's training set with replacement.
    pub bootstrap: bool,
    /// Features examined per split; `None` means `ceil(sqrt(dim))`.
    pub max_features: Option<usize>,
}

impl Default for ForestOptions {
    fn default() -> Self {
        Self {
            n_trees: 100,
            bootstrap: true,
            max_features: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub dim: usize,
    pub trees: Vec<DecisionTree>,
    /// RNG seed each tree was grown with.
    pub tree_seeds: Vec<u64>,
    pub options: ForestOptions,
}

impl RandomForest {
    pub fn fit(x: &[Vec<f64>], y: &[u8], seed: u64, options: ForestOptions) -> Self {
        let dim = x.first().map_or(0, Vec::len);
        let max_features = options
            .max_features
            .unwrap_or_else(|| (dim as f64).sqrt().ceil() as usize)
            .max(1);
        let tree_seeds: Vec<u64> = (0..options.n_trees as u64)
            .map(|t| seed.wrapping_add(t))
            .collect();
        let trees = tree_seeds
            .par_iter()
            .map(|&s| {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                let samples: Vec<usize> = if options.bootstrap {
                    (0..y.len()).map(|_| rng.random_range(0..y.len())).collect()
                } else {
                    (0..y.len()).collect()
                };
                Grower {
                    x,
                    y,
                    max_features: Some(max_features),
                    rng,
                }
                .grow(samples)
            })
            .collect();
        Self {
            dim,
            trees,
            tree_seeds,
            options,
        }
    }

    /// Fraction of trees voting 1.
    pub fn score(&self, x: &[f64]) -> f64 {
        if self.trees.is_empty() {
            return 0.0;
        }
        let ones = self.trees.iter().filter(|t| t.vote(x) == 1).count();
        ones as f64 / self.trees.len() as f64
    }

    /// Majority vote; a tied vote resolves to 0.
    pub fn vote(&self, x: &[f64]) -> u8 {
        let ones = self.trees.iter().filter(|t| t.vote(x) == 1).count();
        u8::from(2 * ones > self.trees.len())
    }
}
