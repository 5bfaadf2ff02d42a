//! Pearson correlation between matrix measurements and accuracy scores.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::FeatureVector;

/// Measurements correlated against the accuracy scores, as (feature, plane).
pub const CORRELATED: [(&str, &str); 6] = [
    ("svm", "Max@CONF"),
    ("svm", "Max@CONV-1"),
    ("dctny", "Max@CONF"),
    ("dctny", "Max@CONV-1"),
    ("g_overall", "Max@CONF"),
    ("g_overall", "Max@CONV-1"),
];

/// Per-model inputs to the correlation table.
#[derive(Clone, Debug)]
pub struct ModelMeasurements {
    pub features: FeatureVector,
    pub robust_accuracy: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelationCell {
    /// `RobustAcc` or `Accuracy`.
    pub target: String,
    pub feature: String,
    pub plane: String,
    pub r: f64,
    /// Set when either column had zero variance; `r` is then 0.
    pub zero_variance: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelationTable {
    pub models: usize,
    pub cells: Vec<CorrelationCell>,
}

impl CorrelationTable {
    pub fn get(&self, target: &str, feature: &str, plane: &str) -> Option<&CorrelationCell> {
        self.cells
            .iter()
            .find(|c| c.target == target && c.feature == feature && c.plane == plane)
    }

    /// `target,feature,plane,r,zero_variance` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("target,feature,plane,r,zero_variance\n");
        for c in &self.cells {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                c.target, c.feature, c.plane, c.r, c.zero_variance
            ));
        }
        s
    }
}

/// Pearson's r, or `None` when either input has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len().min(y.len());
    if n < 2 {
        return None;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x[..n].iter().zip(&y[..n]) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn correlation_table(models: &[ModelMeasurements]) -> Result<CorrelationTable> {
    if models.len() < 3 {
        return Err(Error::invalid(format!(
            "correlation needs at least 3 models, got {}",
            models.len()
        )));
    }
    let targets: [(&str, Vec<f64>); 2] = [
        (
            "RobustAcc",
            models.iter().map(|m| m.robust_accuracy).collect(),
        ),
        ("Accuracy", models.iter().map(|m| m.accuracy).collect()),
    ];
    let mut cells = Vec::new();
    for (target, scores) in &targets {
        for (feature, plane) in CORRELATED {
            let column = models
                .iter()
                .map(|m| {
                    m.features
                        .get(plane, feature)
                        .ok_or_else(|| Error::MissingPlane(plane.to_string()))
                })
                .collect::<Result<Vec<f64>>>()?;
            let r = pearson(&column, scores);
            cells.push(CorrelationCell {
                target: target.to_string(),
                feature: feature.to_string(),
                plane: plane.to_string(),
                r: r.unwrap_or(0.0),
                zero_variance: r.is_none(),
            });
        }
    }
    Ok(CorrelationTable {
        models: models.len(),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureEntry;

    fn vector(svm: f64) -> FeatureVector {
        let mut entries = Vec::new();
        for (feature, plane) in CORRELATED {
            entries.push(FeatureEntry {
                feature: feature.into(),
                plane: plane.into(),
                value: if feature == "svm" { svm } else { 1.0 },
            });
        }
        FeatureVector {
            model_id: "m".into(),
            entries,
        }
    }

    #[test]
    fn identical_columns_correlate_perfectly() {
        let phi = [0.2, 0.5, 0.9, 0.4];
        assert!((pearson(&phi, &phi).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = phi
            .iter()
            .enumerate()
            .map(|(i, p)| -p + 1e-9 * i as f64)
            .collect();
        assert!((pearson(&neg, &phi).unwrap() + 1.0).abs() < 1e-6);
    }

    #[test]
    fn constant_column_is_flagged() {
        let models: Vec<ModelMeasurements> = [0.1, 0.2, 0.3]
            .iter()
            .map(|&p| ModelMeasurements {
                features: vector(p),
                robust_accuracy: p,
                accuracy: 0.9,
            })
            .collect();
        let t = correlation_table(&models).unwrap();
        assert_eq!(t.cells.len(), 12);
        let c = t.get("RobustAcc", "svm", "Max@CONF").unwrap();
        assert!((c.r - 1.0).abs() < 1e-12 && !c.zero_variance);
        let c = t.get("RobustAcc", "dctny", "Max@CONF").unwrap();
        assert!(c.zero_variance && c.r == 0.0);
        assert!(t.get("Accuracy", "svm", "Max@CONF").unwrap().zero_variance);
    }

    #[test]
    fn too_few_models() {
        let m = ModelMeasurements {
            features: vector(0.1),
            robust_accuracy: 0.5,
            accuracy: 0.5,
        };
        assert!(correlation_table(&[m.clone(), m]).is_err());
    }
}
