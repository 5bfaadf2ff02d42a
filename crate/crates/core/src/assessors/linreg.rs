//! Ordinary least squares on the feature vector plus an intercept.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Jitter added to the Gram diagonal so the normal equations always solve.
pub const RIDGE_JITTER: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl LinearModel {
    pub fn fit(x: &[Vec<f64>], y: &[f64]) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        let dim = x[0].len();
        let design = DMatrix::from_fn(
            x.len(),
            dim + 1,
            |r, c| if c == 0 { 1.0 } else { x[r][c - 1] },
        );
        let target = DVector::from_column_slice(y);
        let mut gram = design.transpose() * &design;
        for d in 0..=dim {
            gram[(d, d)] += RIDGE_JITTER;
        }
        let rhs = design.transpose() * target;
        let beta = match gram.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => gram
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::invalid("normal equations are singular"))?,
        };
        Ok(Self {
            intercept: beta[0],
            coefficients: beta.iter().skip(1).copied().collect(),
        })
    }

    /// Unclamped linear response.
    pub fn response(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(x)
                .map(|(w, v)| w * v)
                .sum::<f64>()
    }
}
