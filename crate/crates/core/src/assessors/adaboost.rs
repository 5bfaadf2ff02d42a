//! Discrete AdaBoost over depth-one stumps.

use serde::{Deserialize, Serialize};

const EPS_CLAMP: f64 = 1e-10;

/// Predicts `above` when `x[feature] > threshold`, otherwise `1 - above`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub above: u8,
}

impl Stump {
    pub fn predict(&self, x: &[f64]) -> u8 {
        if x[self.feature] > self.threshold {
            self.above
        } else {
            1 - self.above
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedStump {
    pub stump: Stump,
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaBoost {
    pub dim: usize,
    pub stumps: Vec<WeightedStump>,
}

/// Outcome of one boosting round.
#[derive(Clone, Debug)]
pub struct Round {
    pub stump: Stump,
    /// Weighted training error before clamping.
    pub error: f64,
    pub alpha: f64,
    /// Normalized sample weights after the update.
    pub weights: Vec<f64>,
}

/// Lowest weighted-error stump; ties keep the lowest feature, then the lowest
/// threshold, then `above = 1`.
pub fn best_stump(x: &[Vec<f64>], y: &[u8], w: &[f64]) -> (Stump, f64) {
    let dim = x.first().map_or(0, Vec::len);
    let total: f64 = w.iter().sum();
    let total1: f64 = y
        .iter()
        .zip(w)
        .filter(|(&l, _)| l == 1)
        .map(|(_, &wi)| wi)
        .sum();
    let mut best = (
        Stump {
            feature: 0,
            threshold: f64::MIN,
            above: 1,
        },
        f64::INFINITY,
    );
    let mut order: Vec<usize> = (0..y.len()).collect();
    for f in 0..dim {
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
        // Threshold below every sample: constant prediction.
        let mut left0 = 0.0;
        let mut left1 = 0.0;
        let consider = |threshold: f64, left0: f64, left1: f64, best: &mut (Stump, f64)| {
            let right0 = total - total1 - left0;
            let right1 = total1 - left1;
            for (above, err) in [(1u8, left1 + right0), (0u8, left0 + right1)] {
                if err < best.1 {
                    *best = (
                        Stump {
                            feature: f,
                            threshold,
                            above,
                        },
                        err,
                    );
                }
            }
        };
        consider(f64::MIN, 0.0, 0.0, &mut best);
        for p in 0..order.len().saturating_sub(1) {
            let s = order[p];
            if y[s] == 1 {
                left1 += w[s];
            } else {
                left0 += w[s];
            }
            let (a, b) = (x[s][f], x[order[p + 1]][f]);
            if a >= b {
                continue;
            }
            let mut threshold = a + (b - a) / 2.0;
            if threshold >= b {
                threshold = a;
            }
            consider(threshold, left0, left1, &mut best);
        }
    }
    best
}

/// Fits one stump on weights `w` and returns the reweighted distribution.
pub fn boosting_round(x: &[Vec<f64>], y: &[u8], w: &[f64]) -> Round {
    let (stump, error) = best_stump(x, y, w);
    let eps = error.clamp(EPS_CLAMP, 1.0 - EPS_CLAMP);
    let alpha = 0.5 * ((1.0 - eps) / eps).ln();
    let mut weights: Vec<f64> = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((xi, &yi), &wi)| {
            let agree = if stump.predict(xi) == yi { 1.0 } else { -1.0 };
            wi * (-alpha * agree).exp()
        })
        .collect();
    let sum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|v| *v /= sum);
    Round {
        stump,
        error,
        alpha,
        weights,
    }
}

impl AdaBoost {
    pub fn fit(x: &[Vec<f64>], y: &[u8], n_rounds: usize) -> Self {
        let dim = x.first().map_or(0, Vec::len);
        let mut w = vec![1.0 / y.len() as f64; y.len()];
        let mut stumps = Vec::new();
        for _ in 0..n_rounds {
            let round = boosting_round(x, y, &w);
            if round.error >= 0.5 {
                break;
            }
            stumps.push(WeightedStump {
                stump: round.stump,
                alpha: round.alpha,
            });
            if round.error <= 0.0 {
                break;
            }
            w = round.weights;
        }
        if stumps.is_empty() {
            // No stump beats chance: fall back to the majority class.
            let ones = y.iter().filter(|&&l| l == 1).count();
            stumps.push(WeightedStump {
                stump: Stump {
                    feature: 0,
                    threshold: f64::MIN,
                    above: u8::from(2 * ones > y.len()),
                },
                alpha: 1.0,
            });
        }
        Self { dim, stumps }
    }

    /// Alpha-weighted share of stumps voting 1.
    pub fn score(&self, x: &[f64]) -> f64 {
        let total: f64 = self.stumps.iter().map(|s| s.alpha).sum();
        if total <= 0.0 {
            return 0.0;
        }
        let ones: f64 = self
            .stumps
            .iter()
            .filter(|s| s.stump.predict(x) == 1)
            .map(|s| s.alpha)
            .sum();
        ones / total
    }
}
