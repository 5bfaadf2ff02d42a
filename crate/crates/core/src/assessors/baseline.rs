//! Robust accuracy and the single-threshold baseline assessor built on it.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::trace::SignalTrace;

/// Fraction of objects whose prediction matches the truth under the identity
/// transformation and under every other transformation.
pub fn robust_accuracy(trace: &SignalTrace) -> Result<f64> {
    let (Some(pred), Some(truth)) = (&trace.predictions, &trace.truth) else {
        return Err(Error::MissingPredictions);
    };
    let m = trace.m;
    let rows = trace.n_transforms();
    let id = trace.family.identity_index();
    if m == 0 || pred.len() != rows * m || truth.len() != m {
        return Err(Error::Shape(
            "prediction table does not match trace shape".into(),
        ));
    }
    let robust = (0..m)
        .filter(|&k| {
            let base = pred[id * m + k];
            base == truth[k] && (0..rows).all(|j| pred[j * m + k] == base)
        })
        .count();
    Ok(robust as f64 / m as f64)
}

/// Accuracy on the untransformed objects.
pub fn plain_accuracy(trace: &SignalTrace) -> Result<f64> {
    let (Some(pred), Some(truth)) = (&trace.predictions, &trace.truth) else {
        return Err(Error::MissingPredictions);
    };
    let m = trace.m;
    let id = trace.family.identity_index();
    let correct = (0..m).filter(|&k| pred[id * m + k] == truth[k]).count();
    Ok(correct as f64 / m as f64)
}

/// Predicts variant (1) when robust accuracy falls below `threshold`.
/// The threshold may be infinite for single-class training sets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineThreshold {
    #[serde(serialize_with = "ser_extended", deserialize_with = "de_extended")]
    pub threshold: f64,
}

impl BaselineThreshold {
    /// Greedy scan over midpoints of the sorted distinct scores (plus the two
    /// infinite sentinels) for the best training accuracy; ties keep the
    /// lowest threshold.
    pub fn fit(train: &[(f64, u8)]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        let mut values: Vec<f64> = train.iter().map(|(phi, _)| *phi).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        let candidates = std::iter::once(f64::NEG_INFINITY)
            .chain(values.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0))
            .chain(std::iter::once(f64::INFINITY));

        let mut best = (f64::NEG_INFINITY, 0usize);
        let mut first = true;
        for threshold in candidates {
            let correct = train
                .iter()
                .filter(|(phi, label)| u8::from(*phi < threshold) == *label)
                .count();
            if first || correct > best.1 {
                best = (threshold, correct);
                first = false;
            }
        }
        Ok(Self { threshold: best.0 })
    }

    pub fn predict(&self, phi: f64) -> u8 {
        u8::from(phi < self.threshold)
    }
}

fn ser_extended<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

fn de_extended<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }
    match Repr::deserialize(d)? {
        Repr::Num(v) => Ok(v),
        Repr::Str(s) => match s.as_str() {
            "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            other => Err(serde::de::Error::custom(format!("bad threshold {other:?}"))),
        },
    }
}
