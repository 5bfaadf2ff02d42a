//! Repository-level plumbing shared by the CLI and the bindings: turning
//! labelled traces into assessor inputs and correlation measurements.

use rayon::prelude::*;

use crate::assessors::{
    plain_accuracy, robust_accuracy, Algorithm, FoldTag, LabelledExample, ModelMeasurements,
};
use crate::error::Result;
use crate::features::{assemble_vector, FeatureConfig, FeatureVector};
use crate::synth::{load_repository, RepoManifest};
use crate::trace::SignalTrace;

/// A trace with its ground-truth label and fold tag.
#[derive(Clone, Debug)]
pub struct RepoModel {
    pub trace: SignalTrace,
    pub label: u8,
    pub fold_tag: FoldTag,
}

/// Loads `repo.json` and every trace it lists.
pub fn load_models(path: &std::path::Path) -> Result<(RepoManifest, Vec<RepoModel>)> {
    let (manifest, traces) = load_repository(path)?;
    let models = manifest
        .models
        .iter()
        .zip(traces)
        .map(|(e, trace)| RepoModel {
            trace,
            label: e.label,
            fold_tag: if e.holdout {
                FoldTag::Holdout
            } else {
                FoldTag::Regular
            },
        })
        .collect();
    Ok((manifest, models))
}

/// Feature vectors of every model, in input order.
pub fn feature_vectors(models: &[RepoModel], cfg: &FeatureConfig) -> Result<Vec<FeatureVector>> {
    models
        .par_iter()
        .map(|m| assemble_vector(&m.trace, cfg))
        .collect()
}

/// Assessor inputs for `algo`: the 80 features, or `[robust_accuracy]` for
/// the baseline.
pub fn labelled_examples(
    models: &[RepoModel],
    algo: Algorithm,
    cfg: &FeatureConfig,
) -> Result<Vec<LabelledExample>> {
    if algo == Algorithm::Baseline {
        return models
            .iter()
            .map(|m| {
                Ok(LabelledExample {
                    model_id: m.trace.model_id.clone(),
                    inputs: vec![robust_accuracy(&m.trace)?],
                    label: m.label,
                    fold_tag: m.fold_tag,
                })
            })
            .collect();
    }
    let vectors = feature_vectors(models, cfg)?;
    Ok(vectors
        .iter()
        .zip(models)
        .map(|(v, m)| LabelledExample::from_vector(v, m.label, m.fold_tag))
        .collect())
}

/// Features plus both accuracy scores for each model.
pub fn measurements(models: &[RepoModel], cfg: &FeatureConfig) -> Result<Vec<ModelMeasurements>> {
    let vectors = feature_vectors(models, cfg)?;
    vectors
        .into_iter()
        .zip(models)
        .map(|(features, m)| {
            Ok(ModelMeasurements {
                features,
                robust_accuracy: robust_accuracy(&m.trace)?,
                accuracy: plain_accuracy(&m.trace)?,
            })
        })
        .collect()
}
