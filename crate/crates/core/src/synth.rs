//! Synthetic model repository.
//!
//! Each synthetic model is a set of latent per-object response curves over
//! the sampling variable, written out as an ordinary signal trace. For object
//! `k` at normalized sampling value `x_j = v_j / alpha` a plane holds
//!
//! ```text
//! g[j][k] = scale * ( base_k
//!                   + a_k * s(x_j)                   incremental rate
//!                   + smoothness * b_k * w_j         transitional roughness
//!                   + dot_amplitude * c_k * |x_j|    dot pattern
//!                   + [j == spike] amplitude * e_k ) abrupt transition
//! ```
//!
//! where `s` is linear with slope `base_rate`, steepened by a multiplier past
//! the sub-domain boundary. Noise lives on `g`, so every matrix is symmetric
//! with a zero diagonal by construction.
//!
//! Labels follow a mechanical rule: a model is invariant (0) iff its rate is
//! at most [`INVARIANT_RATE_CAP`], its roughness at most [`ROUGHNESS_CAP`] and
//! no sub-domain, dot or abrupt irregularity is present.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{
    canonical_planes, read_trace, write_trace, SignalPlane, SignalTrace, TransformationFamily,
};

/// Largest incremental rate still labelled invariant.
pub const INVARIANT_RATE_CAP: f64 = 0.06;
/// Largest roughness still labelled invariant.
pub const ROUGHNESS_CAP: f64 = 0.02;
pub const NUM_CLASSES: u16 = 10;
/// Error probability added per unit of latent response magnitude.
const ERROR_SLOPE: f64 = 2.0;

pub const REPO_FORMAT_VERSION: u64 = 1;

/// Response steepens by `multiplier` for sampling values at or above `boundary`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubdomainSplit {
    pub boundary: f64,
    pub multiplier: f64,
}

/// Extra object-specific response at one transformation index.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbruptTransition {
    pub index: usize,
    pub amplitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub model_id: String,
    pub family: TransformationFamily,
    pub m: usize,
    pub base_rate: f64,
    pub smoothness: f64,
    pub subdomain_split: Option<SubdomainSplit>,
    pub dot_amplitude: f64,
    pub abrupt: Option<AbruptTransition>,
    /// Misclassification rate on untransformed objects.
    pub clean_error: f64,
    pub label: u8,
    pub seed: u64,
}

impl SyntheticSpec {
    /// A perfectly invariant model: flat responses, no irregularities.
    pub fn new(
        model_id: impl Into<String>,
        family: TransformationFamily,
        m: usize,
        seed: u64,
    ) -> Self {
        Self {
            model_id: model_id.into(),
            family,
            m,
            base_rate: 0.0,
            smoothness: 0.0,
            subdomain_split: None,
            dot_amplitude: 0.0,
            abrupt: None,
            clean_error: 0.0,
            label: 0,
            seed,
        }
    }

    pub fn has_irregularity(&self) -> bool {
        self.smoothness > ROUGHNESS_CAP
            || self.dot_amplitude > 0.0
            || self
                .subdomain_split
                .is_some_and(|s| (s.multiplier - 1.0).abs() > 1e-12)
            || self.abrupt.is_some_and(|a| a.amplitude > 0.0)
    }

    /// Label implied by the generator rule.
    pub fn rule_label(&self) -> u8 {
        u8::from(self.base_rate > INVARIANT_RATE_CAP || self.has_irregularity())
    }

    /// Sets `label` from the generator rule.
    pub fn labelled(mut self) -> Self {
        self.label = self.rule_label();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let amplitudes = [
            self.base_rate,
            self.smoothness,
            self.dot_amplitude,
            self.abrupt.map_or(0.0, |a| a.amplitude),
        ];
        if amplitudes.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::invalid(
                "synthetic amplitudes must be finite and >= 0",
            ));
        }
        if !(0.0..=1.0).contains(&self.clean_error) {
            return Err(Error::invalid("clean_error must be in [0, 1]"));
        }
        if self.m == 0 {
            return Err(Error::invalid("m must be at least 1"));
        }
        if let Some(s) = self.subdomain_split {
            if !(s.multiplier.is_finite() && s.multiplier >= 0.0 && s.boundary.is_finite()) {
                return Err(Error::invalid("invalid sub-domain split"));
            }
        }
        if let Some(a) = self.abrupt {
            if a.index >= self.family.len() {
                return Err(Error::invalid("abrupt transition index out of range"));
            }
        }
        if self.label != self.rule_label() {
            return Err(Error::invalid(format!(
                "label {} disagrees with the generator rule ({})",
                self.label,
                self.rule_label()
            )));
        }
        let violations: Vec<_> = SignalTrace::new(&self.model_id, self.family.clone(), self.m)
            .validate()
            .into_iter()
            .filter(|v| v.field.starts_with("family"))
            .collect();
        if !violations.is_empty() {
            return Err(Error::Validation(violations));
        }
        Ok(())
    }

    /// Latent response `s(x)` at normalized sampling value `x`.
    fn response(&self, x: f64, alpha: f64) -> f64 {
        match self.subdomain_split {
            Some(split) => {
                let xb = split.boundary / alpha;
                if x < xb {
                    self.base_rate * x
                } else {
                    self.base_rate * (xb + split.multiplier * (x - xb))
                }
            }
            None => self.base_rate * x,
        }
    }
}

/// (base level, scale) per canonical plane.
const PLANE_PROFILES: [(f64, f64); 5] =
    [(0.85, 1.0), (6.0, 2.0), (1.2, 0.8), (8.0, 2.5), (1.5, 1.0)];

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Builds the trace for `spec` over the five canonical planes, with
/// predictions and truth.
pub fn generate_trace(spec: &SyntheticSpec) -> Result<SignalTrace> {
    spec.validate()?;
    let rows = spec.family.len();
    let m = spec.m;
    let alpha = spec.family.alpha().max(f64::MIN_POSITIVE);
    let xs: Vec<f64> = spec.family.v_values.iter().map(|v| v / alpha).collect();
    let s: Vec<f64> = xs.iter().map(|&x| spec.response(x, alpha)).collect();

    let mut trace = SignalTrace::new(&spec.model_id, spec.family.clone(), m);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for (key, &(level, scale)) in canonical_planes().into_iter().zip(PLANE_PROFILES.iter()) {
        let w: Vec<f64> = (0..rows).map(|_| normal(&mut rng)).collect();
        let mut values = vec![0.0_f32; rows * m];
        for k in 0..m {
            let base = level / scale + 0.1 * normal(&mut rng);
            let a = 1.0 + 0.25 * normal(&mut rng);
            let b = normal(&mut rng);
            let c = normal(&mut rng);
            let e = normal(&mut rng);
            for j in 0..rows {
                let mut g = base
                    + a * s[j]
                    + spec.smoothness * b * w[j]
                    + spec.dot_amplitude * c * xs[j].abs();
                if let Some(ab) = spec.abrupt {
                    if ab.index == j {
                        g += ab.amplitude * e;
                    }
                }
                values[j * m + k] = (scale * g) as f32;
            }
        }
        trace.planes.push(SignalPlane { key, values });
    }

    // Object k is misclassified under t_j when u_k falls below its error level.
    let mut prng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
    let truth: Vec<u16> = (0..m).map(|_| prng.random_range(0..NUM_CLASSES)).collect();
    let u: Vec<f64> = (0..m).map(|_| prng.random::<f64>()).collect();
    let mut predictions = vec![0u16; rows * m];
    for j in 0..rows {
        let mut level = spec.clean_error + ERROR_SLOPE * s[j].abs();
        if let Some(ab) = spec.abrupt {
            if ab.index == j {
                level += 0.5 * ERROR_SLOPE * ab.amplitude;
            }
        }
        for k in 0..m {
            predictions[j * m + k] = if u[k] < level {
                (truth[k] + 1 + ((j + k) % (NUM_CLASSES as usize - 1)) as u16) % NUM_CLASSES
            } else {
                truth[k]
            };
        }
    }
    trace.num_classes = Some(NUM_CLASSES);
    trace.truth = Some(truth);
    trace.predictions = Some(predictions);
    trace
        .labels
        .insert(spec.family.kind.to_string(), spec.label);

    let md = &mut trace.metadata;
    md.insert("generator".into(), "ivtest-synth".into());
    md.insert(
        "label_rule".into(),
        format!(
            "invariant iff base_rate <= {INVARIANT_RATE_CAP} and smoothness <= {ROUGHNESS_CAP} \
             and no sub-domain, dot or abrupt irregularity"
        ),
    );
    md.insert("base_rate".into(), spec.base_rate.to_string());
    md.insert("smoothness".into(), spec.smoothness.to_string());
    md.insert("dot_amplitude".into(), spec.dot_amplitude.to_string());
    md.insert("clean_error".into(), spec.clean_error.to_string());
    md.insert("seed".into(), spec.seed.to_string());
    if let Some(sd) = spec.subdomain_split {
        md.insert(
            "subdomain_split".into(),
            format!("{}:{}", sd.boundary, sd.multiplier),
        );
    }
    if let Some(ab) = spec.abrupt {
        md.insert("abrupt".into(), format!("{}:{}", ab.index, ab.amplitude));
    }
    Ok(trace)
}

/// Pattern families the repository generator draws from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Archetype {
    SlowIncrement,
    SteadyIncrement,
    RapidIncrement,
    RoughTransition,
    SubdomainPartition,
    DotPattern,
    AbruptTransition,
}

impl Archetype {
    pub const INVARIANT: [Archetype; 2] = [Archetype::SlowIncrement, Archetype::SteadyIncrement];
    pub const VARIANT: [Archetype; 5] = [
        Archetype::RapidIncrement,
        Archetype::RoughTransition,
        Archetype::SubdomainPartition,
        Archetype::DotPattern,
        Archetype::AbruptTransition,
    ];

    /// Draws a spec of this archetype.
    pub fn spec(
        self,
        model_id: &str,
        family: &TransformationFamily,
        m: usize,
        rng: &mut ChaCha8Rng,
    ) -> SyntheticSpec {
        let mut s = SyntheticSpec::new(model_id, family.clone(), m, rng.random());
        s.clean_error = rng.random_range(0.02..0.15);
        s.smoothness = rng.random_range(0.0..0.012);
        let alpha = family.alpha();
        match self {
            Archetype::SlowIncrement => s.base_rate = rng.random_range(0.0..0.03),
            Archetype::SteadyIncrement => s.base_rate = rng.random_range(0.03..0.055),
            Archetype::RapidIncrement => s.base_rate = rng.random_range(0.075..0.3),
            Archetype::RoughTransition => {
                s.base_rate = rng.random_range(0.0..0.055);
                s.smoothness = rng.random_range(0.035..0.08);
            }
            Archetype::SubdomainPartition => {
                s.base_rate = rng.random_range(0.015..0.05);
                let b = [-1.0, 0.0, 1.0][rng.random_range(0..3)] * alpha / 3.0;
                s.subdomain_split = Some(SubdomainSplit {
                    boundary: b,
                    multiplier: rng.random_range(2.5..4.0),
                });
            }
            Archetype::DotPattern => {
                s.base_rate = rng.random_range(0.0..0.04);
                s.dot_amplitude = rng.random_range(0.1..0.2);
            }
            Archetype::AbruptTransition => {
                s.base_rate = rng.random_range(0.0..0.05);
                let id = family.identity_index();
                let mut index = rng.random_range(0..family.len() - 1);
                if index >= id {
                    index += 1;
                }
                s.abrupt = Some(AbruptTransition {
                    index,
                    amplitude: rng.random_range(0.08..0.25),
                });
            }
        }
        s.labelled()
    }

    pub fn name(self) -> &'static str {
        match self {
            Archetype::SlowIncrement => "slow_increment",
            Archetype::SteadyIncrement => "steady_increment",
            Archetype::RapidIncrement => "rapid_increment",
            Archetype::RoughTransition => "rough_transition",
            Archetype::SubdomainPartition => "subdomain_partition",
            Archetype::DotPattern => "dot_pattern",
            Archetype::AbruptTransition => "abrupt_transition",
        }
    }
}

impl fmt::Display for Archetype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepoEntry {
    pub model_id: String,
    /// Trace directory relative to the manifest.
    pub dir: String,
    pub label: u8,
    pub holdout: bool,
    pub archetype: Archetype,
    pub spec: SyntheticSpec,
}

/// Contents of `repo.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepoManifest {
    pub format_version: u64,
    pub seed: u64,
    pub count: usize,
    pub balance: f64,
    pub models: Vec<RepoEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RepoOptions {
    pub count: usize,
    /// Requested fraction of variant models.
    pub balance: f64,
    pub seed: u64,
    /// Test objects per model.
    pub m: usize,
}

impl Default for RepoOptions {
    fn default() -> Self {
        Self {
            count: 150,
            balance: 0.5,
            seed: 0,
            m: 100,
        }
    }
}

/// Specs, labels and hold-out tags for a repository, without touching disk.
/// Every third model (after a seeded shuffle) is held out.
pub fn plan_repository(opts: &RepoOptions) -> Result<RepoManifest> {
    if opts.count < 2 {
        return Err(Error::invalid("a repository needs at least 2 models"));
    }
    if !(0.0..=1.0).contains(&opts.balance) {
        return Err(Error::invalid("balance must be in [0, 1]"));
    }
    let family = TransformationFamily::rotation_default();
    let variants = (opts.count as f64 * opts.balance).round() as usize;
    let mut archetypes: Vec<Archetype> = (0..variants)
        .map(|i| Archetype::VARIANT[i % Archetype::VARIANT.len()])
        .chain(
            (0..opts.count - variants)
                .map(|i| Archetype::INVARIANT[i % Archetype::INVARIANT.len()]),
        )
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    archetypes.shuffle(&mut rng);

    let models = archetypes
        .into_iter()
        .enumerate()
        .map(|(idx, archetype)| {
            let model_id = format!("M{idx:03}");
            let spec = archetype.spec(&model_id, &family, opts.m, &mut rng);
            RepoEntry {
                dir: format!("models/{model_id}"),
                model_id,
                label: spec.label,
                holdout: idx % 3 == 2,
                archetype,
                spec,
            }
        })
        .collect();
    Ok(RepoManifest {
        format_version: REPO_FORMAT_VERSION,
        seed: opts.seed,
        count: opts.count,
        balance: opts.balance,
        models,
    })
}

/// Writes every trace plus `repo.json` under `out`.
pub fn generate_repository(opts: &RepoOptions, out: &Path) -> Result<RepoManifest> {
    let manifest = plan_repository(opts)?;
    for entry in &manifest.models {
        let trace = generate_trace(&entry.spec)?;
        write_trace(&trace, &out.join(&entry.dir))?;
    }
    let path = out.join("repo.json");
    let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    json.push(b'\n');
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn read_repo_manifest(path: &Path) -> Result<RepoManifest> {
    let text = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let manifest: RepoManifest = serde_json::from_slice(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    if manifest.format_version != REPO_FORMAT_VERSION {
        return Err(Error::UnsupportedFormat(manifest.format_version));
    }
    Ok(manifest)
}

/// Loads every trace listed in `repo.json`, in manifest order.
pub fn load_repository(path: &Path) -> Result<(RepoManifest, Vec<SignalTrace>)> {
    let manifest = read_repo_manifest(path)?;
    let root: PathBuf = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let traces = manifest
        .models
        .iter()
        .map(|e| read_trace(&root.join(&e.dir)))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, traces))
}

/// Archetype counts, for coverage checks and reports.
pub fn archetype_counts(manifest: &RepoManifest) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for e in &manifest.models {
        *out.entry(e.archetype.to_string()).or_insert(0) += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assessors::robust_accuracy;
    use crate::trace::{DifKind, PlaneKey};
    use crate::varmat::compute_variance_matrix;

    fn conf() -> PlaneKey {
        PlaneKey::new("CONF", DifKind::Max)
    }

    fn base_spec() -> SyntheticSpec {
        SyntheticSpec::new("s", TransformationFamily::rotation_default(), 200, 5)
    }

    #[test]
    fn flat_model_is_perfectly_invariant() {
        let t = generate_trace(&base_spec()).unwrap();
        for key in canonical_planes() {
            let m = compute_variance_matrix(&t, &key, None).unwrap();
            assert!(m.as_slice().iter().all(|&d| d == 0.0));
        }
        assert_eq!(robust_accuracy(&t).unwrap(), 1.0);
        assert_eq!(t.labels["rotation"], 0);
        assert!(t.validate().is_empty());
    }

    #[test]
    fn dot_pattern_relation() {
        let mut s = base_spec();
        s.base_rate = 0.03;
        s.dot_amplitude = 0.15;
        let t = generate_trace(&s.labelled()).unwrap();
        let m = compute_variance_matrix(&t, &conf(), None).unwrap();
        let (id, n) = (15, 30);
        assert!(m.get(id, 0) > m.get(n, 0));
        assert!(m.get(id, n) > m.get(n, 0));
    }

    #[test]
    fn subdomain_quadrants() {
        let mut s = base_spec();
        s.base_rate = 0.05;
        s.subdomain_split = Some(SubdomainSplit {
            boundary: 0.0,
            multiplier: 3.0,
        });
        let t = generate_trace(&s.labelled()).unwrap();
        let m = compute_variance_matrix(&t, &conf(), None).unwrap();
        let quadrant = |range: std::ops::Range<usize>| {
            let cells: Vec<f64> = range
                .clone()
                .flat_map(|i| range.clone().filter(move |&j| j < i).map(move |j| (i, j)))
                .map(|(i, j)| m.get(i, j))
                .collect();
            cells.iter().sum::<f64>() / cells.len() as f64
        };
        let negative = quadrant(0..15);
        let positive = quadrant(16..31);
        assert!(positive >= 2.0 * negative, "{positive} vs {negative}");
    }

    #[test]
    fn robust_accuracy_falls_with_rate() {
        let mut prev = f64::INFINITY;
        for rate in [0.0, 0.02, 0.05, 0.1, 0.2, 0.4] {
            let mut s = base_spec();
            s.base_rate = rate;
            s.clean_error = 0.05;
            let phi = robust_accuracy(&generate_trace(&s.labelled()).unwrap()).unwrap();
            assert!(phi <= prev);
            prev = phi;
        }
        assert!(prev < 0.5);
    }

    #[test]
    fn inconsistent_label_rejected() {
        let mut s = base_spec();
        s.base_rate = 0.2;
        assert!(generate_trace(&s).is_err());
        assert_eq!(s.labelled().label, 1);
    }

    #[test]
    fn repository_balance_and_coverage() {
        let plan = plan_repository(&RepoOptions::default()).unwrap();
        let variant = plan.models.iter().filter(|e| e.label == 1).count();
        assert!((70..=80).contains(&variant), "{variant}");
        let counts = archetype_counts(&plan);
        assert_eq!(counts.len(), 7);
        assert_eq!(plan.models.iter().filter(|e| e.holdout).count(), 50);
        assert_eq!(plan, plan_repository(&RepoOptions::default()).unwrap());
    }
}
