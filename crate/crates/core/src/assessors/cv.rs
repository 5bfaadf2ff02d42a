//! Repeated three-fold cross-validation with a fixed hold-out fold.
//!
//! Each repeat keeps the hold-out models together as one fold and splits the
//! remaining models at random into two more folds. Every fold is tested once
//! against an assessor trained on the other two.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, Algorithm, FoldTag, LabelledExample};
use crate::error::{Error, Result};

pub const CV_FORMAT_VERSION: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CvOptions {
    pub repeats: usize,
    pub seed: u64,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            repeats: 10,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    fn add(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.tn += other.tn;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub repeat: usize,
    pub fold: usize,
    pub holdout: bool,
    pub n_train: usize,
    pub n_test: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub confusion: Confusion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub format_version: u64,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub repeats: usize,
    pub folds: Vec<FoldResult>,
    /// Mean of the fold accuracies, in percent.
    pub mean: f64,
    /// Population standard deviation of the fold accuracies, in percent.
    pub std: f64,
    pub confusion: Confusion,
    /// Set when the repository had no hold-out models and plain random
    /// three-fold splits were used instead.
    pub holdout_fallback: bool,
}

impl CvReport {
    /// One row per fold: `repeat,fold,holdout,n_train,n_test,correct,accuracy`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("repeat,fold,holdout,n_train,n_test,correct,accuracy\n");
        for f in &self.folds {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                f.repeat, f.fold, f.holdout, f.n_train, f.n_test, f.correct, f.accuracy
            ));
        }
        s
    }
}

/// Three folds of example indices for one repeat; the first flag marks the
/// hold-out fold.
fn folds_for_repeat(repo: &[LabelledExample], seed: u64) -> (Vec<(bool, Vec<usize>)>, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let holdout: Vec<usize> = (0..repo.len())
        .filter(|&i| repo[i].fold_tag == FoldTag::Holdout)
        .collect();
    if holdout.is_empty() {
        let mut all: Vec<usize> = (0..repo.len()).collect();
        all.shuffle(&mut rng);
        let mut folds = vec![
            (false, Vec::new()),
            (false, Vec::new()),
            (false, Vec::new()),
        ];
        for (pos, idx) in all.into_iter().enumerate() {
            folds[pos % 3].1.push(idx);
        }
        return (folds, true);
    }
    let mut regular: Vec<usize> = (0..repo.len())
        .filter(|&i| repo[i].fold_tag == FoldTag::Regular)
        .collect();
    regular.shuffle(&mut rng);
    let half = regular.len().div_ceil(2);
    let b = regular.split_off(half);
    (vec![(true, holdout), (false, regular), (false, b)], false)
}

pub fn cross_validate(
    repo: &[LabelledExample],
    algo: Algorithm,
    options: CvOptions,
) -> Result<CvReport> {
    if repo.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if options.repeats == 0 {
        return Err(Error::invalid("repeats must be at least 1"));
    }
    let seed = options.seed;
    let per_repeat: Vec<Result<(Vec<FoldResult>, bool)>> = (0..options.repeats)
        .into_par_iter()
        .map(|r| {
            let (folds, fallback) = folds_for_repeat(repo, seed.wrapping_add(r as u64));
            let mut results = Vec::new();
            for (f, (is_holdout, test_idx)) in folds.iter().enumerate() {
                if test_idx.is_empty() {
                    continue;
                }
                let train_set: Vec<LabelledExample> = folds
                    .iter()
                    .enumerate()
                    .filter(|(g, _)| *g != f)
                    .flat_map(|(_, (_, idx))| idx.iter().map(|&i| repo[i].clone()))
                    .collect();
                if train_set.is_empty() {
                    continue;
                }
                let fold_seed = seed.wrapping_add((r * 3 + f) as u64);
                let model = train(algo, &train_set, fold_seed)?;
                let mut confusion = Confusion::default();
                for &i in test_idx {
                    let predicted = model.predict(&repo[i].inputs)?.label;
                    match (repo[i].label, predicted) {
                        (1, 1) => confusion.tp += 1,
                        (0, 0) => confusion.tn += 1,
                        (0, _) => confusion.fp += 1,
                        _ => confusion.fn_ += 1,
                    }
                }
                let correct = confusion.tp + confusion.tn;
                results.push(FoldResult {
                    repeat: r,
                    fold: f,
                    holdout: *is_holdout,
                    n_train: train_set.len(),
                    n_test: test_idx.len(),
                    correct,
                    accuracy: correct as f64 / test_idx.len() as f64,
                    confusion,
                });
            }
            Ok((results, fallback))
        })
        .collect();

    let mut folds = Vec::new();
    let mut holdout_fallback = false;
    for item in per_repeat {
        let (results, fallback) = item?;
        holdout_fallback |= fallback;
        folds.extend(results);
    }
    if folds.is_empty() {
        return Err(Error::invalid("repository too small for three folds"));
    }
    let accs: Vec<f64> = folds.iter().map(|f| f.accuracy * 100.0).collect();
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    let std = (accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / accs.len() as f64).sqrt();
    let mut confusion = Confusion::default();
    folds.iter().for_each(|f| confusion.add(&f.confusion));
    Ok(CvReport {
        format_version: CV_FORMAT_VERSION,
        algorithm: algo,
        seed,
        repeats: options.repeats,
        folds,
        mean,
        std,
        confusion,
        holdout_fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn repo(n: usize, shuffle_labels: bool) -> Vec<LabelledExample> {
        (0..n)
            .map(|i| {
                let v = (i * 37 % n) as f64 / n as f64;
                let label = if shuffle_labels {
                    u8::from((i * 7919 + 13) % 5 < 2)
                } else {
                    u8::from(v >= 0.5)
                };
                // Leave a margin so no midpoint threshold lands on a test point.
                let v = if label == 1 && !shuffle_labels {
                    v + 0.2
                } else {
                    v
                };
                LabelledExample {
                    model_id: format!("m{i}"),
                    inputs: vec![v, ((i * 13) % 7) as f64],
                    label,
                    fold_tag: if i % 3 == 0 {
                        FoldTag::Holdout
                    } else {
                        FoldTag::Regular
                    },
                }
            })
            .collect()
    }

    #[test]
    fn folds_partition_the_repository() {
        let data = repo(31, false);
        let (folds, fallback) = folds_for_repeat(&data, 4);
        assert!(!fallback);
        let mut all: Vec<usize> = folds.iter().flat_map(|(_, f)| f.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..31).collect::<Vec<_>>());
        assert!(folds[0].0);
        assert!(folds[0]
            .1
            .iter()
            .all(|&i| data[i].fold_tag == FoldTag::Holdout));
    }

    #[test]
    fn separable_forest_is_perfect() {
        let data = repo(60, false);
        let report = cross_validate(
            &data,
            Algorithm::Forest,
            CvOptions {
                repeats: 3,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(report.folds.len(), 9);
        assert_eq!(report.mean, 100.0);
        assert!(report
            .folds
            .iter()
            .all(|f| (0.0..=1.0).contains(&f.accuracy)));
    }

    #[test]
    fn random_labels_sit_near_majority_rate() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data: Vec<LabelledExample> = (0..150)
            .map(|i| LabelledExample {
                model_id: format!("m{i}"),
                inputs: (0..5).map(|_| rng.random::<f64>()).collect(),
                label: u8::from(rng.random::<f64>() < 0.3),
                fold_tag: if i % 3 == 0 {
                    FoldTag::Holdout
                } else {
                    FoldTag::Regular
                },
            })
            .collect();
        let majority = data.iter().filter(|e| e.label == 0).count() as f64 / 150.0;
        let report = cross_validate(
            &data,
            Algorithm::Forest,
            CvOptions {
                repeats: 10,
                seed: 2,
            },
        )
        .unwrap();
        let mean = report.mean / 100.0;
        assert!(
            (mean - majority).abs() <= 0.10,
            "mean {mean} majority {majority}"
        );
    }

    #[test]
    fn deterministic_for_seed() {
        let data = repo(45, false);
        let opts = CvOptions {
            repeats: 4,
            seed: 9,
        };
        let a = cross_validate(&data, Algorithm::Adaboost, opts).unwrap();
        let b = cross_validate(&data, Algorithm::Adaboost, opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_holdout_falls_back() {
        let mut data = repo(30, false);
        data.iter_mut().for_each(|e| e.fold_tag = FoldTag::Regular);
        let report = cross_validate(
            &data,
            Algorithm::Tree,
            CvOptions {
                repeats: 2,
                seed: 0,
            },
        )
        .unwrap();
        assert!(report.holdout_fallback);
        assert_eq!(report.folds.len(), 6);
        assert_eq!(report.folds.iter().map(|f| f.n_test).sum::<usize>(), 60);
    }
}
