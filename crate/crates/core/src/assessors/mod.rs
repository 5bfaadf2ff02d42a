//! Assessors: models mapping a feature vector (or, for the baseline, the
//! robust accuracy) to an invariance verdict, 0 = invariant, 1 = variant.

mod adaboost;
mod baseline;
mod correlation;
mod cv;
mod forest;
mod linreg;
mod tree;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adaboost::{best_stump, boosting_round, AdaBoost, Round, Stump, WeightedStump};
pub use baseline::{plain_accuracy, robust_accuracy, BaselineThreshold};
pub use correlation::{
    correlation_table, pearson, CorrelationCell, CorrelationTable, ModelMeasurements,
};
pub use cv::{cross_validate, Confusion, CvOptions, CvReport, FoldResult};
pub use forest::{ForestOptions, RandomForest};
pub use linreg::{LinearModel, RIDGE_JITTER};
pub use tree::{DecisionTree, Node};

use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeatureVector};

pub const ASSESSOR_FORMAT_VERSION: u64 = 1;
pub const DEFAULT_ADABOOST_ROUNDS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Tree,
    Forest,
    Adaboost,
    Linreg,
    Baseline,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Tree,
        Algorithm::Forest,
        Algorithm::Adaboost,
        Algorithm::Linreg,
        Algorithm::Baseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Tree => "tree",
            Algorithm::Forest => "forest",
            Algorithm::Adaboost => "adaboost",
            Algorithm::Linreg => "linreg",
            Algorithm::Baseline => "baseline",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FoldTag {
    #[default]
    Regular,
    Holdout,
}

/// One repository model: its assessor inputs and its label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelledExample {
    pub model_id: String,
    /// Feature values, or `[robust_accuracy]` for the baseline.
    pub inputs: Vec<f64>,
    pub label: u8,
    pub fold_tag: FoldTag,
}

impl LabelledExample {
    pub fn from_vector(vector: &FeatureVector, label: u8, fold_tag: FoldTag) -> Self {
        Self {
            model_id: vector.model_id.clone(),
            inputs: vector.values(),
            label,
            fold_tag,
        }
    }
}

/// Trained parameters, tagged by assessor kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase")]
pub enum AssessorModel {
    Tree(DecisionTree),
    Forest(RandomForest),
    Adaboost(AdaBoost),
    Linreg(LinearModel),
    Baseline(BaselineThreshold),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub label: u8,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assessor {
    #[serde(flatten)]
    pub model: AssessorModel,
    /// Scores at or above this threshold are labelled variant.
    pub decision_threshold: f64,
    /// Input dimensionality.
    pub dim: usize,
    /// Feature extraction settings the assessor was trained with.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_config: Option<FeatureConfig>,
    pub format_version: u64,
}

impl Assessor {
    fn new(model: AssessorModel, dim: usize) -> Self {
        Self {
            model,
            decision_threshold: 0.5,
            dim,
            feature_config: None,
            format_version: ASSESSOR_FORMAT_VERSION,
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        match self.model {
            AssessorModel::Tree(_) => Algorithm::Tree,
            AssessorModel::Forest(_) => Algorithm::Forest,
            AssessorModel::Adaboost(_) => Algorithm::Adaboost,
            AssessorModel::Linreg(_) => Algorithm::Linreg,
            AssessorModel::Baseline(_) => Algorithm::Baseline,
        }
    }

    /// Score in `[0, 1]` and the thresholded label.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: x.len(),
            });
        }
        let score = match &self.model {
            AssessorModel::Tree(t) => f64::from(t.vote(x)),
            AssessorModel::Forest(f) => f.score(x),
            AssessorModel::Adaboost(a) => a.score(x),
            AssessorModel::Linreg(l) => l.response(x).clamp(0.0, 1.0),
            AssessorModel::Baseline(b) => f64::from(b.predict(x[0])),
        };
        Ok(Prediction {
            label: u8::from(score >= self.decision_threshold),
            score,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("assessor serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let a: Assessor = serde_json::from_str(text).map_err(|e| Error::Json {
            path: "<assessor>".into(),
            source: e,
        })?;
        if a.format_version != ASSESSOR_FORMAT_VERSION {
            return Err(Error::UnsupportedFormat(a.format_version));
        }
        Ok(a)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json { source, .. } => Error::Json {
                path: path.to_path_buf(),
                source,
            },
            other => other,
        })
    }
}

fn split_xy(train: &[LabelledExample]) -> Result<(Vec<Vec<f64>>, Vec<u8>, usize)> {
    let first = train.first().ok_or(Error::EmptyTrainingSet)?;
    let dim = first.inputs.len();
    if let Some(bad) = train.iter().find(|e| e.inputs.len() != dim) {
        return Err(Error::Dimension {
            expected: dim,
            actual: bad.inputs.len(),
        });
    }
    if let Some(bad) = train.iter().find(|e| e.label > 1) {
        return Err(Error::invalid(format!(
            "label {} of {} is not 0 or 1",
            bad.label, bad.model_id
        )));
    }
    let x = train.iter().map(|e| e.inputs.clone()).collect();
    let y = train.iter().map(|e| e.label).collect();
    Ok((x, y, dim))
}

/// Unrestricted CART tree; deterministic for a given input order.
pub fn train_tree(train: &[LabelledExample], _seed: u64) -> Result<Assessor> {
    let (x, y, dim) = split_xy(train)?;
    let tree = tree::Grower {
        x: &x,
        y: &y,
        max_features: None,
        rng: ChaCha8Rng::seed_from_u64(0),
    }
    .grow((0..y.len()).collect());
    Ok(Assessor::new(AssessorModel::Tree(tree), dim))
}

pub fn train_forest(
    train: &[LabelledExample],
    seed: u64,
    options: ForestOptions,
) -> Result<Assessor> {
    let (x, y, dim) = split_xy(train)?;
    let forest = RandomForest::fit(&x, &y, seed, options);
    Ok(Assessor::new(AssessorModel::Forest(forest), dim))
}

/// Boosted stumps. The fit itself is deterministic; `seed` is accepted for
/// a uniform training interface.
pub fn train_adaboost(train: &[LabelledExample], _seed: u64, n_rounds: usize) -> Result<Assessor> {
    let (x, y, dim) = split_xy(train)?;
    let model = AdaBoost::fit(&x, &y, n_rounds);
    Ok(Assessor::new(AssessorModel::Adaboost(model), dim))
}

pub fn train_linreg(train: &[LabelledExample]) -> Result<Assessor> {
    let (x, y, dim) = split_xy(train)?;
    let target: Vec<f64> = y.iter().map(|&l| f64::from(l)).collect();
    let model = LinearModel::fit(&x, &target)?;
    Ok(Assessor::new(AssessorModel::Linreg(model), dim))
}

/// Threshold on robust accuracy; each example's inputs must be `[phi]`.
pub fn baseline_fit(train: &[LabelledExample]) -> Result<Assessor> {
    let (x, y, dim) = split_xy(train)?;
    if dim != 1 {
        return Err(Error::Dimension {
            expected: 1,
            actual: dim,
        });
    }
    let pairs: Vec<(f64, u8)> = x.iter().zip(&y).map(|(r, &l)| (r[0], l)).collect();
    let model = BaselineThreshold::fit(&pairs)?;
    Ok(Assessor::new(AssessorModel::Baseline(model), 1))
}

/// Trains `algo` with its default hyper-parameters.
pub fn train(algo: Algorithm, train: &[LabelledExample], seed: u64) -> Result<Assessor> {
    match algo {
        Algorithm::Tree => train_tree(train, seed),
        Algorithm::Forest => train_forest(train, seed, ForestOptions::default()),
        Algorithm::Adaboost => train_adaboost(train, seed, DEFAULT_ADABOOST_ROUNDS),
        Algorithm::Linreg => train_linreg(train),
        Algorithm::Baseline => baseline_fit(train),
    }
}
