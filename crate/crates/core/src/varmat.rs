//! Variance matrices built from signal traces.
//!
//! For a plane with summaries `g[j][k]`, the difference between transformations
//! `i` and `j` on object `k` is `g[i][k] - g[j][k]`, and the matrix entry is the
//! root of the mean squared difference over the test objects.

use std::io::Write;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::{self, FeatureConfig, PlaneFeatures};
use crate::trace::{Modality, PlaneKey, SignalTrace};

/// `(n+1) x (n+1)` grid of non-negative deltas, symmetric with a zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct VarianceMatrix {
    size: usize,
    delta: Vec<f64>,
    pub plane: PlaneKey,
    pub modality: Modality,
    pub model_id: String,
    pub m_used: usize,
}

impl VarianceMatrix {
    /// Builds a matrix from a lower-triangle generator `f(i, j)` with `i > j`.
    /// The upper triangle is mirrored and the diagonal is zero.
    pub fn from_lower(size: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut delta = vec![0.0; size * size];
        for i in 1..size {
            for j in 0..i {
                let v = f(i, j);
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::invalid(format!(
                        "delta[{i}][{j}] = {v} is not finite and non-negative"
                    )));
                }
                delta[i * size + j] = v;
                delta[j * size + i] = v;
            }
        }
        Ok(Self {
            size,
            delta,
            plane: PlaneKey::new("NONE", crate::trace::DifKind::Max),
            modality: Modality::new(crate::trace::DifKind::Max),
            model_id: String::new(),
            m_used: 0,
        })
    }

    /// Zero matrix of the given size.
    pub fn zeros(size: usize) -> Self {
        Self::from_lower(size, |_, _| 0.0).expect("zeros are valid")
    }

    /// `n + 1`.
    pub fn size(&self) -> usize {
        self.size
    }

    /// `n`, the largest transformation index.
    pub fn n(&self) -> usize {
        self.size.saturating_sub(1)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.delta[i * self.size + j]
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.delta
    }

    pub fn max(&self) -> f64 {
        self.delta.iter().copied().fold(0.0, f64::max)
    }

    /// Every entry multiplied by `c >= 0`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.delta.iter_mut().for_each(|d| *d *= c);
        out
    }

    /// CSV with header `i,j,delta`, one row per cell.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io("<matrix csv>", e);
        writeln!(out, "i,j,delta").map_err(io)?;
        for i in 0..self.size {
            for j in 0..self.size {
                writeln!(out, "{i},{j},{}", self.get(i, j)).map_err(io)?;
            }
        }
        Ok(())
    }

    /// Little-endian f64, row-major.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.delta.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}

/// Plane values widened to f64, one row per transformation.
pub(crate) fn plane_rows(trace: &SignalTrace, key: &PlaneKey) -> Result<Vec<Vec<f64>>> {
    let plane = trace.plane(key)?;
    let m = trace.m;
    if plane.values.len() != trace.n_transforms() * m {
        return Err(Error::Shape(format!("plane {key} has wrong length")));
    }
    Ok(plane
        .values
        .chunks_exact(m.max(1))
        .map(|row| row.iter().map(|&v| f64::from(v)).collect())
        .collect())
}

fn check_index(trace: &SignalTrace, i: usize) -> Result<()> {
    if i >= trace.n_transforms() {
        return Err(Error::invalid(format!(
            "transformation index {i} out of range 0..={}",
            trace.n_transforms().saturating_sub(1)
        )));
    }
    Ok(())
}

/// `g[i][k] - g[j][k]` for every object `k`.
pub fn compute_dif(trace: &SignalTrace, key: &PlaneKey, i: usize, j: usize) -> Result<Vec<f64>> {
    check_index(trace, i)?;
    check_index(trace, j)?;
    let rows = plane_rows(trace, key)?;
    Ok(rows[i].iter().zip(&rows[j]).map(|(a, b)| a - b).collect())
}

fn matrix_from_rows(
    rows: &[Vec<f64>],
    objects: &[usize],
    key: &PlaneKey,
    model_id: &str,
) -> VarianceMatrix {
    let size = rows.len();
    let count = objects.len() as f64;
    let mut m = VarianceMatrix::from_lower(size, |i, j| {
        let (gi, gj) = (&rows[i], &rows[j]);
        let sum: f64 = objects
            .iter()
            .map(|&k| {
                let d = gi[k] - gj[k];
                d * d
            })
            .sum();
        (sum / count).sqrt()
    })
    .expect("finite signals give finite deltas");
    m.plane = key.clone();
    m.modality = key.modality();
    m.model_id = model_id.to_string();
    m.m_used = objects.len();
    m
}

/// Variance matrix over all objects, or over `object_subset` when given.
pub fn compute_variance_matrix(
    trace: &SignalTrace,
    key: &PlaneKey,
    object_subset: Option<&[usize]>,
) -> Result<VarianceMatrix> {
    let rows = plane_rows(trace, key)?;
    let all: Vec<usize>;
    let objects = match object_subset {
        Some(s) => {
            if s.is_empty() {
                return Err(Error::EmptySubset);
            }
            if let Some(&bad) = s.iter().find(|&&k| k >= trace.m) {
                return Err(Error::invalid(format!("object index {bad} out of range")));
            }
            s
        }
        None => {
            all = (0..trace.m).collect();
            &all
        }
    };
    if objects.is_empty() {
        return Err(Error::EmptySubset);
    }
    Ok(matrix_from_rows(&rows, objects, key, &trace.model_id))
}

/// Seeded uniform draw of `floor(len * percent / 100)` positions out of
/// `0..len` without replacement, sorted ascending.
pub fn sample_positions(len: usize, percent: f64, seed: u64) -> Result<Vec<usize>> {
    if !(percent > 0.0 && percent <= 100.0) {
        return Err(Error::invalid(format!(
            "percent {percent} outside (0, 100]"
        )));
    }
    let count = ((len as f64) * percent / 100.0 + 1e-9).floor() as usize;
    let count = count.min(len);
    if count == 0 {
        return Err(Error::EmptySubset);
    }
    if count == len {
        return Ok((0..len).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, len, count).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Object subset used for an `r`% subsample with `0 < r < 100`.
pub fn subsample_objects(m: usize, r: f64, seed: u64) -> Result<Vec<usize>> {
    if !(r > 0.0 && r < 100.0) {
        return Err(Error::invalid(format!(
            "subsample percent {r} outside (0, 100)"
        )));
    }
    sample_positions(m, r, seed)
}

/// Variance matrix over a seeded `r`% subset of the objects.
pub fn subsample_matrix(
    trace: &SignalTrace,
    key: &PlaneKey,
    r: f64,
    seed: u64,
) -> Result<VarianceMatrix> {
    let subset = subsample_objects(trace.m, r, seed)?;
    compute_variance_matrix(trace, key, Some(&subset))
}

/// Two-sided Hoeffding bound `min(1, 2 exp(-2 m eps^2 / f_plus^2))`.
pub fn hoeffding_bound(f_plus: f64, m: usize, epsilon: f64) -> Result<f64> {
    if !(f_plus > 0.0) || m == 0 || !(epsilon > 0.0) {
        return Err(Error::invalid(
            "hoeffding bound needs f_plus > 0, m >= 1 and epsilon > 0",
        ));
    }
    let exponent = -2.0 * m as f64 * epsilon * epsilon / (f_plus * f_plus);
    Ok((2.0 * exponent.exp()).min(1.0))
}

#[derive(Clone, Debug, Serialize)]
pub struct QuantilePoint {
    pub quantile: f64,
    pub deviation: f64,
    pub bound: f64,
}

/// Spread of subsampled mean-squared differences around the full-data values.
#[derive(Clone, Debug, Serialize)]
pub struct ConcentrationReport {
    pub plane: String,
    pub m: usize,
    pub m_sub: usize,
    pub r: f64,
    pub seed: u64,
    /// Largest `|dif|` over the full trace; the default `f+`.
    pub f_plus: f64,
    /// Per trial, `max_{i,j} |msd_sub - msd_full|`.
    pub deviations: Vec<f64>,
    pub quantiles: Vec<QuantilePoint>,
}

impl ConcentrationReport {
    /// Hoeffding bound at `epsilon` for the subsample size.
    pub fn bound(&self, epsilon: f64) -> f64 {
        if !(epsilon > 0.0) {
            return 1.0;
        }
        if self.f_plus == 0.0 {
            // Every dif is zero, so no deviation can occur.
            return 0.0;
        }
        hoeffding_bound(self.f_plus, self.m_sub, epsilon).unwrap_or(1.0)
    }

    /// Fraction of trials whose deviation reached `epsilon`.
    pub fn violation_rate(&self, epsilon: f64) -> f64 {
        let hits = self.deviations.iter().filter(|&&d| d >= epsilon).count();
        hits as f64 / self.deviations.len() as f64
    }
}

pub const REPORT_QUANTILES: [f64; 5] = [0.5, 0.9, 0.95, 0.99, 1.0];

/// Nearest-rank quantile of an ascending slice.
fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn concentration_report(
    trace: &SignalTrace,
    key: &PlaneKey,
    trials: usize,
    r: f64,
    seed: u64,
) -> Result<ConcentrationReport> {
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let rows = plane_rows(trace, key)?;
    let size = rows.len();
    let m = trace.m;

    // Squared differences per unordered pair, per object.
    let mut sq = Vec::with_capacity(size * size.saturating_sub(1) / 2);
    let mut f_plus = 0.0_f64;
    for i in 1..size {
        for j in 0..i {
            let d: Vec<f64> = (0..m)
                .map(|k| {
                    let d = rows[i][k] - rows[j][k];
                    f_plus = f_plus.max(d.abs());
                    d * d
                })
                .collect();
            sq.push(d);
        }
    }
    let full: Vec<f64> = sq
        .iter()
        .map(|d| d.iter().sum::<f64>() / m as f64)
        .collect();

    let mut deviations = Vec::with_capacity(trials);
    let mut m_sub = 0;
    for t in 0..trials {
        let subset = subsample_objects(m, r, seed.wrapping_add(t as u64))?;
        m_sub = subset.len();
        let dev = sq
            .iter()
            .zip(&full)
            .map(|(d, &f)| {
                let s: f64 = subset.iter().map(|&k| d[k]).sum::<f64>() / subset.len() as f64;
                (s - f).abs()
            })
            .fold(0.0, f64::max);
        deviations.push(dev);
    }

    let mut sorted = deviations.clone();
    sorted.sort_by(f64::total_cmp);
    let mut report = ConcentrationReport {
        plane: key.to_string(),
        m,
        m_sub,
        r,
        seed,
        f_plus,
        deviations,
        quantiles: Vec::new(),
    };
    report.quantiles = REPORT_QUANTILES
        .iter()
        .map(|&q| {
            let deviation = nearest_rank(&sorted, q);
            QuantilePoint {
                quantile: q,
                deviation,
                bound: report.bound(deviation),
            }
        })
        .collect();
    Ok(report)
}

/// One row of a data-proportion sweep.
#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub percent: f64,
    pub matrix: VarianceMatrix,
    pub features: PlaneFeatures,
}

/// Matrices and their 16 features computed on growing proportions of the
/// test objects. The 100% row uses every object.
pub fn proportion_sweep(
    trace: &SignalTrace,
    key: &PlaneKey,
    proportions: &[f64],
    seed: u64,
    cfg: &FeatureConfig,
) -> Result<Vec<SweepPoint>> {
    proportions
        .iter()
        .map(|&percent| {
            let subset = sample_positions(trace.m, percent, seed)?;
            let matrix = compute_variance_matrix(trace, key, Some(&subset))?;
            let features = features::extract_on_subset(&matrix, cfg, trace, &subset)?;
            Ok(SweepPoint {
                percent,
                matrix,
                features,
            })
        })
        .collect()
}

/// Both sides of the sample identity
/// `delta^2/2 = (Var_i + Var_j)/2 + (mu_i - mu_j)^2/2 - Cov_ij`
/// with population estimators over the objects.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub abs_error: f64,
}

pub fn pairwise_check(
    trace: &SignalTrace,
    key: &PlaneKey,
    i: usize,
    j: usize,
) -> Result<IdentityCheck> {
    check_index(trace, i)?;
    check_index(trace, j)?;
    if trace.m < 2 {
        return Err(Error::invalid("identity check needs at least 2 objects"));
    }
    let rows = plane_rows(trace, key)?;
    let (gi, gj) = (&rows[i], &rows[j]);
    let m = trace.m as f64;

    let msd: f64 = gi
        .iter()
        .zip(gj)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / m;
    let lhs = msd / 2.0;

    let mu_i = gi.iter().sum::<f64>() / m;
    let mu_j = gj.iter().sum::<f64>() / m;
    let var_i = gi.iter().map(|a| (a - mu_i).powi(2)).sum::<f64>() / m;
    let var_j = gj.iter().map(|b| (b - mu_j).powi(2)).sum::<f64>() / m;
    let cov = gi
        .iter()
        .zip(gj)
        .map(|(a, b)| (a - mu_i) * (b - mu_j))
        .sum::<f64>()
        / m;
    let rhs = (var_i + var_j) / 2.0 + (mu_i - mu_j).powi(2) / 2.0 - cov;
    Ok(IdentityCheck {
        lhs,
        rhs,
        abs_error: (lhs - rhs).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{DifKind, FamilyKind, SignalPlane, TransformationFamily};

    fn key() -> PlaneKey {
        PlaneKey::new("CONF", DifKind::Max)
    }

    fn trace_from(rows: &[&[f32]]) -> SignalTrace {
        let n1 = rows.len();
        let half = (n1 / 2) as f64;
        let v = (0..n1).map(|i| i as f64 - half).collect();
        let mut t = SignalTrace::new(
            "t",
            TransformationFamily::new(FamilyKind::Custom, v),
            rows[0].len(),
        );
        t.planes.push(SignalPlane {
            key: key(),
            values: rows.iter().flat_map(|r| r.iter().copied()).collect(),
        });
        t
    }

    #[test]
    fn dif_examples() {
        let t = trace_from(&[&[0.5, 0.5], &[0.9, 0.8], &[0.7, 0.8]]);
        assert_eq!(compute_dif(&t, &key(), 1, 1).unwrap(), vec![0.0, 0.0]);
        let d = compute_dif(&t, &key(), 1, 2).unwrap();
        assert!((d[0] - 0.2).abs() < 1e-6 && d[1] == 0.0);
        let back = compute_dif(&t, &key(), 2, 1).unwrap();
        assert!(d.iter().zip(&back).all(|(a, b)| *a == -*b));
        assert!(compute_dif(&t, &key(), 3, 0).is_err());
    }

    #[test]
    fn hand_summed_matrix() {
        let t = trace_from(&[&[1.0, 1.0], &[1.0, 3.0], &[2.0, 2.0]]);
        let m = compute_variance_matrix(&t, &key(), None).unwrap();
        assert_eq!(m.get(1, 0), 2.0_f64.sqrt());
        assert_eq!(m.get(2, 0), 1.0);
        assert_eq!(m.get(2, 1), 1.0);
        assert_eq!(m.get(0, 1), m.get(1, 0));
        assert_eq!(m.m_used, 2);
    }

    #[test]
    fn constant_signals_give_zero_matrix() {
        let t = trace_from(&[&[0.3; 4], &[0.3; 4], &[0.3; 4]]);
        let m = compute_variance_matrix(&t, &key(), None).unwrap();
        assert!(m.as_slice().iter().all(|&d| d == 0.0));
        let s = subsample_matrix(&t, &key(), 50.0, 3).unwrap();
        assert!(s.as_slice().iter().all(|&d| d == 0.0));
        assert_eq!(s.m_used, 2);
    }

    #[test]
    fn empty_subset_rejected() {
        let t = trace_from(&[&[0.3; 4], &[0.3; 4], &[0.3; 4]]);
        assert!(matches!(
            compute_variance_matrix(&t, &key(), Some(&[])),
            Err(Error::EmptySubset)
        ));
        assert!(matches!(
            subsample_matrix(&t, &key(), 10.0, 0),
            Err(Error::EmptySubset)
        ));
        assert!(subsample_matrix(&t, &key(), 100.0, 0).is_err());
    }

    #[test]
    fn subsample_size_and_determinism() {
        let idx = subsample_objects(10, 90.0, 7).unwrap();
        assert_eq!(idx.len(), 9);
        assert_eq!(idx, subsample_objects(10, 90.0, 7).unwrap());
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn hoeffding_examples() {
        let b = hoeffding_bound(1.0, 100, 0.2).unwrap();
        assert!((b - 2.0 * (-8.0_f64).exp()).abs() < 1e-15);
        assert!((b - 0.000671).abs() < 1e-6);
        assert_eq!(hoeffding_bound(1.0, 10, 1e-6).unwrap(), 1.0);
        let mut prev = 1.0;
        for e in [0.05, 0.1, 0.2, 0.5, 1.0, 2.0] {
            let v = hoeffding_bound(1.0, 50, e).unwrap();
            assert!(v <= prev);
            prev = v;
        }
        assert!(prev < 1e-80);
        assert!(hoeffding_bound(0.0, 10, 0.1).is_err());
        assert!(hoeffding_bound(1.0, 0, 0.1).is_err());
        assert!(hoeffding_bound(1.0, 10, -0.1).is_err());
    }

    #[test]
    fn concentration_on_constant_signals() {
        let t = trace_from(&[&[0.3; 20], &[0.3; 20], &[0.3; 20]]);
        let r = concentration_report(&t, &key(), 10, 50.0, 1).unwrap();
        assert!(r.deviations.iter().all(|&d| d == 0.0));
        assert_eq!(r.violation_rate(0.01), 0.0);
        assert_eq!(r.bound(0.01), 0.0);
    }

    #[test]
    fn identity_check_degenerate_cases() {
        let t = trace_from(&[&[1.0, 2.0, 4.0], &[1.0, 2.0, 4.0], &[0.5, 0.1, 0.0]]);
        let c = pairwise_check(&t, &key(), 0, 1).unwrap();
        assert_eq!((c.lhs, c.abs_error), (0.0, 0.0));
        assert!(c.rhs.abs() < 1e-15);
        let c = pairwise_check(&t, &key(), 2, 2).unwrap();
        assert_eq!(c.lhs, 0.0);
        assert!(c.rhs.abs() < 1e-15);
        let c = pairwise_check(&t, &key(), 0, 2).unwrap();
        assert!(c.abs_error <= 1e-12);
    }

    #[test]
    fn matrix_exports() {
        let t = trace_from(&[&[1.0, 1.0], &[1.0, 3.0], &[2.0, 2.0]]);
        let m = compute_variance_matrix(&t, &key(), None).unwrap();
        let mut csv = Vec::new();
        m.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 10);
        assert_eq!(text.lines().nth(2).unwrap(), "0,1,1.4142135623730951");
        let bytes = m.to_le_bytes();
        assert_eq!(bytes.len(), 72);
        assert_eq!(
            f64::from_le_bytes(bytes[8..16].try_into().unwrap()),
            2.0_f64.sqrt()
        );
    }
}
