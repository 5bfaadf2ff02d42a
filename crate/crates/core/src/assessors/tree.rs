//! CART classification trees with Gini impurity.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Tree node. Samples with `x[feature] <= threshold` go left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        counts: [usize; 2],
    },
    Leaf {
        counts: [usize; 2],
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub dim: usize,
    /// Root at index 0.
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    /// Class counts of the leaf reached by `x`.
    pub fn leaf_counts(&self, x: &[f64]) -> [usize; 2] {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { counts } => return *counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    idx = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }

    /// Leaf majority; a tied leaf votes 0.
    pub fn vote(&self, x: &[f64]) -> u8 {
        let [c0, c1] = self.leaf_counts(x);
        u8::from(c1 > c0)
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], idx: usize) -> usize {
            match &nodes[idx] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Exact comparison key for a split: maximizing
/// `(l0^2 + l1^2)/nl + (r0^2 + r1^2)/nr` minimizes weighted Gini impurity.
#[derive(Clone, Copy)]
struct Purity {
    num: u128,
    den: u128,
}

impl Purity {
    fn new(left: [usize; 2], right: [usize; 2]) -> Self {
        let sq = |c: [usize; 2]| (c[0] * c[0] + c[1] * c[1]) as u128;
        let (nl, nr) = ((left[0] + left[1]) as u128, (right[0] + right[1]) as u128);
        Self {
            num: sq(left) * nr + sq(right) * nl,
            den: nl * nr,
        }
    }

    fn better_than(&self, other: &Purity) -> bool {
        self.num * other.den > other.num * self.den
    }
}

struct Candidate {
    feature: usize,
    threshold: f64,
    purity: Purity,
}

/// Grows trees over a fixed training matrix.
pub(crate) struct Grower<'a, R> {
    pub x: &'a [Vec<f64>],
    pub y: &'a [u8],
    /// Features examined per split; `None` means all.
    pub max_features: Option<usize>,
    pub rng: R,
}

fn counts_of(y: &[u8], samples: &[usize]) -> [usize; 2] {
    let ones = samples.iter().filter(|&&s| y[s] == 1).count();
    [samples.len() - ones, ones]
}

impl<R: Rng> Grower<'_, R> {
    pub fn grow(mut self, samples: Vec<usize>) -> DecisionTree {
        let dim = self.x.first().map_or(0, Vec::len);
        let mut nodes = Vec::new();
        self.build(samples, dim, &mut nodes);
        DecisionTree { dim, nodes }
    }

    fn build(&mut self, samples: Vec<usize>, dim: usize, nodes: &mut Vec<Node>) -> usize {
        let counts = counts_of(self.y, &samples);
        let idx = nodes.len();
        nodes.push(Node::Leaf { counts });
        if samples.len() < 2 || counts[0] == 0 || counts[1] == 0 {
            return idx;
        }
        let Some(best) = self.find_split(&samples, dim) else {
            return idx;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = samples
            .iter()
            .partition(|&&s| self.x[s][best.feature] <= best.threshold);
        let left = self.build(l, dim, nodes);
        let right = self.build(r, dim, nodes);
        nodes[idx] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
            counts,
        };
        idx
    }

    fn find_split(&mut self, samples: &[usize], dim: usize) -> Option<Candidate> {
        match self.max_features {
            None => best_split(self.x, self.y, samples, 0..dim),
            Some(k) if k >= dim => best_split(self.x, self.y, samples, 0..dim),
            Some(k) => {
                let mut order: Vec<usize> = (0..dim).collect();
                order.shuffle(&mut self.rng);
                let mut chosen: Vec<usize> = order[..k].to_vec();
                chosen.sort_unstable();
                if let Some(c) = best_split(self.x, self.y, samples, chosen.into_iter()) {
                    return Some(c);
                }
                // Every drawn feature was constant here; keep drawing.
                order[k..]
                    .iter()
                    .find_map(|&f| best_split(self.x, self.y, samples, std::iter::once(f)))
            }
        }
    }
}

/// Best split over `features` (ascending); ties keep the lowest feature and
/// then the lowest threshold.
fn best_split(
    x: &[Vec<f64>],
    y: &[u8],
    samples: &[usize],
    features: impl Iterator<Item = usize>,
) -> Option<Candidate> {
    let total = counts_of(y, samples);
    let mut best: Option<Candidate> = None;
    let mut sorted = samples.to_vec();
    for f in features {
        sorted.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
        let mut left = [0usize; 2];
        for p in 0..sorted.len() - 1 {
            left[y[sorted[p]] as usize] += 1;
            let (a, b) = (x[sorted[p]][f], x[sorted[p + 1]][f]);
            if a >= b {
                continue;
            }
            let right = [total[0] - left[0], total[1] - left[1]];
            let purity = Purity::new(left, right);
            if best.as_ref().is_none_or(|c| purity.better_than(&c.purity)) {
                let mut threshold = a + (b - a) / 2.0;
                if threshold >= b {
                    threshold = a;
                }
                best = Some(Candidate {
                    feature: f,
                    threshold,
                    purity,
                });
            }
        }
    }
    best
}
