//! The sixteen matrix measurements and the 80-dimensional feature vector.
//!
//! Index conventions follow the matrix layout: `delta[i][j]` with `i > j`
//! is the "meaningful" lower triangle, `n + 1` is the matrix size.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{canonical_planes, PlaneKey, SignalTrace};
use crate::varmat::{self, VarianceMatrix};

pub const FEATURES_PER_PLANE: usize = 16;

/// Canonical feature order within a plane.
pub const FEATURE_NAMES: [&str; FEATURES_PER_PLANE] = [
    "svm",
    "mean",
    "std",
    "asv",
    "ssty",
    "hg_mean",
    "hg_std",
    "hg_rstd",
    "vg_mean",
    "vg_std",
    "vg_cstd",
    "dg_mean",
    "dg_std",
    "g_overall",
    "dctny",
    "asymm",
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Significance threshold for the significant-variance fraction.
    pub tau: f64,
    /// Subsample percent for the sensitivity measurement.
    pub r: f64,
    pub sensitivity_seed: u64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            tau: 0.15,
            r: 90.0,
            sensitivity_seed: 0,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid(format!(
                "tau {} must be finite and >= 0",
                self.tau
            )));
        }
        if !(self.r > 0.0 && self.r < 100.0) {
            return Err(Error::invalid(format!("r {} outside (0, 100)", self.r)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BasicStats {
    pub svm: f64,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradientFeatures {
    pub hg_mean: f64,
    pub hg_std: f64,
    pub hg_rstd: f64,
    pub vg_mean: f64,
    pub vg_std: f64,
    pub vg_cstd: f64,
    pub dg_mean: f64,
    pub dg_std: f64,
    pub g_overall: f64,
}

/// The 16 measurements of one variance matrix, in [`FEATURE_NAMES`] order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneFeatures(pub [f64; FEATURES_PER_PLANE]);

impl PlaneFeatures {
    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES
            .iter()
            .position(|&n| n == name)
            .map(|idx| self.0[idx])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, f64)> + '_ {
        FEATURE_NAMES.iter().copied().zip(self.0.iter().copied())
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn pop_std(xs: &[f64], mu: f64) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        (xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
    }
}

/// Lower-triangle entries `delta[i][j]`, `i > j`, row by row.
fn meaningful(m: &VarianceMatrix) -> Vec<f64> {
    let size = m.size();
    (1..size)
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .map(|(i, j)| m.get(i, j))
        .collect()
}

/// Squared-value mean over all cells, and mean / population std over the
/// meaningful cells.
pub fn basic_stats(m: &VarianceMatrix) -> BasicStats {
    let size = m.size() as f64;
    let svm = if m.size() == 0 {
        0.0
    } else {
        m.as_slice().iter().map(|d| d * d).sum::<f64>() / (2.0 * size * size)
    };
    let cells = meaningful(m);
    let mu = mean(&cells);
    BasicStats {
        svm,
        mean: mu,
        std: pop_std(&cells, mu),
    }
}

/// Fraction of meaningful cells with `delta > tau`.
pub fn significant_variance(m: &VarianceMatrix, tau: f64) -> f64 {
    let cells = meaningful(m);
    if cells.is_empty() {
        return 0.0;
    }
    cells.iter().filter(|&&d| d > tau).count() as f64 / cells.len() as f64
}

/// Mean squared change of the meaningful cells between the full matrix and
/// a subsampled one.
pub fn sensitivity(full: &VarianceMatrix, sub: &VarianceMatrix) -> Result<f64> {
    if full.size() != sub.size() {
        return Err(Error::Shape(format!(
            "sensitivity needs equal sizes, got {} and {}",
            full.size(),
            sub.size()
        )));
    }
    let a = meaningful(full);
    let b = meaningful(sub);
    if a.is_empty() {
        return Ok(0.0);
    }
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64)
}

/// Copy of the matrix with each diagonal cell replaced by the mean of its
/// horizontal neighbours.
fn diagonal_filled(m: &VarianceMatrix) -> Vec<Vec<f64>> {
    let size = m.size();
    let mut d: Vec<Vec<f64>> = (0..size)
        .map(|i| (0..size).map(|j| m.get(i, j)).collect())
        .collect();
    for (i, row) in d.iter_mut().enumerate() {
        let left = i.checked_sub(1).map(|j| m.get(i, j));
        let right = (i + 1 < size).then(|| m.get(i, i + 1));
        row[i] = match (left, right) {
            (Some(l), Some(r)) => (l + r) / 2.0,
            (Some(v), None) | (None, Some(v)) => v,
            (None, None) => 0.0,
        };
    }
    d
}

fn ratio(mean: f64, std: f64) -> f64 {
    if std == 0.0 {
        0.0
    } else {
        mean / std
    }
}

/// Horizontal, vertical and diagonal gradient statistics. Needs `n >= 2`.
pub fn gradient_features(m: &VarianceMatrix) -> Result<GradientFeatures> {
    let n = m.n();
    if m.size() < 3 {
        return Err(Error::Shape(format!(
            "gradient features need a matrix of size >= 3, got {}",
            m.size()
        )));
    }
    let d = diagonal_filled(m);

    // Row i holds e^hg[i][1..=i].
    let hg_rows: Vec<Vec<f64>> = (1..=n)
        .map(|i| (1..=i).map(|j| d[i][j - 1] - d[i][j]).collect())
        .collect();
    // Column j holds e^vg[j..n][j].
    let vg_cols: Vec<Vec<f64>> = (0..n)
        .map(|j| (j..n).map(|i| d[i + 1][j] - d[i][j]).collect())
        .collect();
    let dg: Vec<f64> = (1..n)
        .flat_map(|i| (1..=i).map(move |j| (i, j)))
        .map(|(i, j)| d[i + 1][j - 1] - d[i][j])
        .collect();

    let hg: Vec<f64> = hg_rows.concat();
    let vg: Vec<f64> = vg_cols.concat();
    let hg_mean = mean(&hg);
    let vg_mean = mean(&vg);
    let dg_mean = mean(&dg);
    let hg_std = pop_std(&hg, hg_mean);
    let vg_std = pop_std(&vg, vg_mean);
    let dg_std = pop_std(&dg, dg_mean);

    let group_std =
        |groups: &[Vec<f64>]| groups.iter().map(|g| pop_std(g, mean(g))).sum::<f64>() / n as f64;

    Ok(GradientFeatures {
        hg_mean,
        hg_std,
        hg_rstd: group_std(&hg_rows),
        vg_mean,
        vg_std,
        vg_cstd: group_std(&vg_cols),
        dg_mean,
        dg_std,
        g_overall: (ratio(hg_mean, hg_std) + ratio(vg_mean, vg_std) + ratio(dg_mean, dg_std)) / 3.0,
    })
}

/// Spread of each sub-diagonal around its own mean, relative to `mean`.
/// Zero when `mean` is zero.
pub fn discontinuity(m: &VarianceMatrix, mean: f64) -> f64 {
    if mean == 0.0 {
        return 0.0;
    }
    let n = m.n();
    let mut total = 0.0;
    for r in 1..n {
        let band: Vec<f64> = (0..=n - r).map(|j| m.get(j + r, j)).collect();
        let mu = self::mean(&band);
        total += band.iter().map(|d| (d - mu).powi(2)).sum::<f64>();
    }
    total / mean
}

/// Absolute mismatch against the reflection about the anti-diagonal,
/// relative to `mean`. Zero when `mean` is zero.
pub fn asymmetry(m: &VarianceMatrix, mean: f64) -> f64 {
    if mean == 0.0 {
        return 0.0;
    }
    let n = m.n();
    let total: f64 = (1..=n)
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .map(|(i, j)| (m.get(i, j) - m.get(n - j, n - i)).abs())
        .sum();
    total / mean
}

/// All 16 measurements given the full matrix and its subsampled counterpart.
pub fn extract_with_reference(
    m: &VarianceMatrix,
    sub: &VarianceMatrix,
    cfg: &FeatureConfig,
) -> Result<PlaneFeatures> {
    let b = basic_stats(m);
    let g = gradient_features(m)?;
    Ok(PlaneFeatures([
        b.svm,
        b.mean,
        b.std,
        significant_variance(m, cfg.tau),
        sensitivity(m, sub)?,
        g.hg_mean,
        g.hg_std,
        g.hg_rstd,
        g.vg_mean,
        g.vg_std,
        g.vg_cstd,
        g.dg_mean,
        g.dg_std,
        g.g_overall,
        discontinuity(m, b.mean),
        asymmetry(m, b.mean),
    ]))
}

/// All 16 measurements of `m`, which must have been computed from `trace`
/// over every object. The sensitivity subsample is drawn from `trace`.
pub fn extract_all(
    m: &VarianceMatrix,
    cfg: &FeatureConfig,
    trace: &SignalTrace,
) -> Result<PlaneFeatures> {
    let all: Vec<usize> = (0..trace.m).collect();
    extract_on_subset(m, cfg, trace, &all)
}

/// Like [`extract_all`] for a matrix computed over `objects`; the
/// sensitivity subsample is `cfg.r`% of those objects.
pub(crate) fn extract_on_subset(
    m: &VarianceMatrix,
    cfg: &FeatureConfig,
    trace: &SignalTrace,
    objects: &[usize],
) -> Result<PlaneFeatures> {
    cfg.validate()?;
    let picks = varmat::sample_positions(objects.len(), cfg.r, cfg.sensitivity_seed)?;
    let subset: Vec<usize> = picks.into_iter().map(|p| objects[p]).collect();
    let sub = varmat::compute_variance_matrix(trace, &m.plane, Some(&subset))?;
    extract_with_reference(m, &sub, cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub feature: String,
    pub plane: String,
    pub value: f64,
}

/// 16 measurements for each canonical plane of one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub model_id: String,
    pub entries: Vec<FeatureEntry>,
}

impl FeatureVector {
    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.value).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, plane: &str, feature: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.plane == plane && e.feature == feature)
            .map(|e| e.value)
    }
}

/// Extracts the 16 measurements on each plane in `planes`.
pub fn assemble_for_planes(
    trace: &SignalTrace,
    cfg: &FeatureConfig,
    planes: &[PlaneKey],
) -> Result<FeatureVector> {
    cfg.validate()?;
    if let Some(missing) = planes.iter().find(|k| !trace.has_plane(k)) {
        return Err(Error::MissingPlane(missing.to_string()));
    }
    let mut entries = Vec::with_capacity(planes.len() * FEATURES_PER_PLANE);
    for key in planes {
        let m = varmat::compute_variance_matrix(trace, key, None)?;
        let feats = extract_all(&m, cfg, trace)?;
        let plane = key.to_string();
        entries.extend(feats.iter().map(|(name, value)| FeatureEntry {
            feature: name.to_string(),
            plane: plane.clone(),
            value,
        }));
    }
    Ok(FeatureVector {
        model_id: trace.model_id.clone(),
        entries,
    })
}

/// The 80-entry vector over the five canonical planes.
pub fn assemble_vector(trace: &SignalTrace, cfg: &FeatureConfig) -> Result<FeatureVector> {
    assemble_for_planes(trace, cfg, &canonical_planes())
}

/// CSV with header `model_id,plane,feature,value`, values at 17 significant digits.
pub fn write_feature_csv<W: Write>(vectors: &[FeatureVector], mut out: W) -> Result<()> {
    let io = |e| Error::io("<feature csv>", e);
    writeln!(out, "model_id,plane,feature,value").map_err(io)?;
    for v in vectors {
        for e in &v.entries {
            writeln!(
                out,
                "{},{},{},{:.16e}",
                v.model_id, e.plane, e.feature, e.value
            )
            .map_err(io)?;
        }
    }
    Ok(())
}

/// The squared-value mean evaluated two ways: from the variance matrix, and
/// as pooled variance minus averaged pairwise covariance of the signals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SquareMeanCheck {
    pub svm: f64,
    pub var_minus_cov: f64,
    pub abs_error: f64,
}

pub fn square_mean_check(trace: &SignalTrace, key: &PlaneKey) -> Result<SquareMeanCheck> {
    if trace.m < 2 {
        return Err(Error::invalid("identity check needs at least 2 objects"));
    }
    let svm = basic_stats(&varmat::compute_variance_matrix(trace, key, None)?).svm;

    let rows = varmat::plane_rows(trace, key)?;
    let tau = rows.len() as f64;
    let m = trace.m as f64;
    let means: Vec<f64> = rows.iter().map(|r| r.iter().sum::<f64>() / m).collect();
    let pooled_mean = means.iter().sum::<f64>() / tau;
    let pooled_var = rows
        .iter()
        .flatten()
        .map(|g| (g - pooled_mean).powi(2))
        .sum::<f64>()
        / (tau * m);
    let centered: Vec<Vec<f64>> = rows
        .iter()
        .zip(&means)
        .map(|(r, mu)| r.iter().map(|g| g - mu).collect())
        .collect();
    let mut cov_sum = 0.0;
    for a in &centered {
        for b in &centered {
            cov_sum += a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / m;
        }
    }
    let var_minus_cov = pooled_var - cov_sum / (tau * tau);
    Ok(SquareMeanCheck {
        svm,
        var_minus_cov,
        abs_error: (svm - var_minus_cov).abs(),
    })
}
