//! Signal traces: the per-model capture every other module consumes.
//!
//! A trace holds scalar summaries `g[j][k]` (the max or mean of the signal set
//! observed at one model position) for every transformation `t_j` of every
//! test object `x_k`. On disk a trace is a directory:
//!
//! ```text
//! manifest.json
//! signals/<position>/<modality>.f32   little-endian f32, row-major [n+1][m]
//! predictions.u16                     optional, little-endian u16, [n+1][m]
//! truth.u16                           optional, little-endian u16, [m]
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u64 = 1;

const SYMMETRY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Rotation,
    Brightness,
    Scaling,
    Custom,
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FamilyKind::Rotation => "rotation",
            FamilyKind::Brightness => "brightness",
            FamilyKind::Scaling => "scaling",
            FamilyKind::Custom => "custom",
        })
    }
}

/// Ordered sampling-variable values `v_0 < … < v_n` of a transformation
/// family. The middle entry is the identity transformation (`v = 0`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformationFamily {
    pub kind: FamilyKind,
    pub v_values: Vec<f64>,
}

impl TransformationFamily {
    pub fn new(kind: FamilyKind, v_values: Vec<f64>) -> Self {
        Self { kind, v_values }
    }

    /// `[-alpha, alpha]` sampled every `step`; `alpha` must be a multiple of `step`.
    pub fn symmetric(kind: FamilyKind, alpha: f64, step: f64) -> Result<Self> {
        if !(alpha > 0.0 && step > 0.0) {
            return Err(Error::invalid("alpha and step must be positive"));
        }
        let half = (alpha / step).round();
        if ((half * step) - alpha).abs() > 1e-9 * alpha.max(1.0) {
            return Err(Error::invalid("alpha not a multiple of step"));
        }
        let half = half as i64;
        let v_values = (-half..=half).map(|i| i as f64 * step).collect();
        Ok(Self { kind, v_values })
    }

    /// Rotation in `[-15°, 15°]` with 1° steps (31 transformations).
    pub fn rotation_default() -> Self {
        Self::symmetric(FamilyKind::Rotation, 15.0, 1.0).expect("valid default family")
    }

    /// Number of transformations, `n + 1`.
    pub fn len(&self) -> usize {
        self.v_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v_values.is_empty()
    }

    /// Index of the identity transformation.
    pub fn identity_index(&self) -> usize {
        self.v_values.len() / 2
    }

    /// Largest absolute sampling value (`alpha`).
    pub fn alpha(&self) -> f64 {
        self.v_values.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    fn check(&self, out: &mut Vec<Violation>) {
        let v = &self.v_values;
        if v.is_empty() || v.len() % 2 == 0 {
            out.push(Violation::new(
                "family.v_values",
                format!("v_values length {} is not odd", v.len()),
            ));
            return;
        }
        if v.iter().any(|x| !x.is_finite()) {
            out.push(Violation::new(
                "family.v_values",
                "v_values contain non-finite entries",
            ));
            return;
        }
        if v.windows(2).any(|w| w[1] <= w[0]) {
            out.push(Violation::new(
                "family.v_values",
                "v_values not strictly increasing",
            ));
        }
        let k = v.len() / 2;
        if v[k] != 0.0 {
            out.push(Violation::new(
                "family.v_values",
                "identity sample v=0 missing",
            ));
        }
        let n = v.len() - 1;
        if (0..k).any(|i| (v[i] + v[n - i]).abs() > SYMMETRY_TOL) {
            out.push(Violation::new(
                "family.v_values",
                "v_values not symmetric about 0",
            ));
        }
    }
}

/// Difference function used by a modality: `max(S_i) - max(S_j)` or
/// `mean(S_i) - mean(S_j)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DifKind {
    Max,
    Mean,
}

impl DifKind {
    /// File stem under `signals/<position>/`.
    pub fn file_stem(self) -> &'static str {
        match self {
            DifKind::Max => "max",
            DifKind::Mean => "mean",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DifKind::Max => "Max",
            DifKind::Mean => "Mean",
        }
    }
}

impl fmt::Display for DifKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.file_stem())
    }
}

impl FromStr for DifKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "max" | "max_dif" => Ok(DifKind::Max),
            "mean" | "mean_dif" => Ok(DifKind::Mean),
            other => Err(Error::invalid(format!("unknown modality {other:?}"))),
        }
    }
}

/// Cross-object aggregator. Only the root-mean-square expectation is defined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CmlKind {
    #[default]
    RmsExpectation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Modality {
    pub dif: DifKind,
    pub cml: CmlKind,
}

impl Modality {
    pub fn new(dif: DifKind) -> Self {
        Self {
            dif,
            cml: CmlKind::RmsExpectation,
        }
    }
}

/// A (position, dif) pair naming one signal plane, printed as `Max@CONF`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlaneKey {
    pub position: String,
    pub dif: DifKind,
}

impl PlaneKey {
    pub fn new(position: impl Into<String>, dif: DifKind) -> Self {
        Self {
            position: position.into(),
            dif,
        }
    }

    pub fn modality(&self) -> Modality {
        Modality::new(self.dif)
    }
}

impl fmt::Display for PlaneKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.dif.label(), self.position)
    }
}

impl FromStr for PlaneKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (dif, pos) = s
            .split_once('@')
            .ok_or_else(|| Error::invalid(format!("plane {s:?} is not of the form Max@POS")))?;
        Ok(PlaneKey::new(pos, dif.parse()?))
    }
}

/// The five planes making up the 80-dimensional feature vector, in order.
pub fn canonical_planes() -> Vec<PlaneKey> {
    vec![
        PlaneKey::new("CONF", DifKind::Max),
        PlaneKey::new("CONV-1", DifKind::Max),
        PlaneKey::new("CONV-1", DifKind::Mean),
        PlaneKey::new("CONV-2", DifKind::Max),
        PlaneKey::new("CONV-2", DifKind::Mean),
    ]
}

/// Scalar summaries `g[j][k]` for one plane, row-major `[n+1][m]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalPlane {
    pub key: PlaneKey,
    pub values: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SignalTrace {
    pub model_id: String,
    pub family: TransformationFamily,
    /// Number of test objects.
    pub m: usize,
    pub num_classes: Option<u16>,
    /// Planes grouped by position, in manifest order.
    pub planes: Vec<SignalPlane>,
    /// Predicted class ids, row-major `[n+1][m]`.
    pub predictions: Option<Vec<u16>>,
    /// True class ids, `[m]`.
    pub truth: Option<Vec<u16>>,
    /// Invariance type (e.g. `rotation`) to 0 = invariant / 1 = variant.
    /// Absent types are unlabelled.
    pub labels: BTreeMap<String, u8>,
    pub metadata: BTreeMap<String, String>,
}

impl SignalTrace {
    pub fn new(model_id: impl Into<String>, family: TransformationFamily, m: usize) -> Self {
        Self {
            model_id: model_id.into(),
            family,
            m,
            num_classes: None,
            planes: Vec::new(),
            predictions: None,
            truth: None,
            labels: BTreeMap::new(),
            metadata: BTreeMap::new(),
        }
    }

    /// `n + 1`.
    pub fn n_transforms(&self) -> usize {
        self.family.len()
    }

    pub fn plane(&self, key: &PlaneKey) -> Result<&SignalPlane> {
        self.planes
            .iter()
            .find(|p| &p.key == key)
            .ok_or_else(|| Error::MissingPlane(key.to_string()))
    }

    pub fn has_plane(&self, key: &PlaneKey) -> bool {
        self.planes.iter().any(|p| &p.key == key)
    }

    /// Distinct positions in order of first appearance.
    pub fn positions(&self) -> Vec<String> {
        let mut seen = Vec::<String>::new();
        for p in &self.planes {
            if !seen.contains(&p.key.position) {
                seen.push(p.key.position.clone());
            }
        }
        seen
    }

    /// Prediction for transformation `j`, object `k`.
    pub fn prediction(&self, j: usize, k: usize) -> Option<u16> {
        self.predictions.as_ref().map(|p| p[j * self.m + k])
    }

    /// Reports every violated invariant; an empty list means the trace is valid.
    pub fn validate(&self) -> Vec<Violation> {
        validate_trace(self)
    }
}

/// One broken invariant: the offending field and a human-readable rule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn valid_position_name(name: &str) -> bool {
    !name.is_empty()
        && name != "."
        && name != ".."
        && !name.contains(['/', '\\', '@'])
        && !name.chars().any(char::is_control)
}

pub fn validate_trace(trace: &SignalTrace) -> Vec<Violation> {
    let mut out = Vec::new();
    trace.family.check(&mut out);

    let rows = trace.family.len();
    let cells = rows * trace.m;
    if trace.m == 0 {
        out.push(Violation::new("m", "m must be at least 1"));
    }
    if trace.model_id.is_empty() {
        out.push(Violation::new("model_id", "model_id is empty"));
    }

    let mut seen = HashSet::new();
    let mut closed_positions = HashSet::new();
    let mut current: Option<&str> = None;
    for plane in &trace.planes {
        let key = &plane.key;
        if !valid_position_name(&key.position) {
            out.push(Violation::new(
                "positions",
                format!("invalid position name {:?}", key.position),
            ));
        }
        if !seen.insert(key.clone()) {
            out.push(Violation::new("signals", format!("duplicate plane {key}")));
        }
        if current != Some(key.position.as_str()) {
            if let Some(prev) = current {
                closed_positions.insert(prev.to_string());
            }
            if closed_positions.contains(&key.position) {
                out.push(Violation::new(
                    "signals",
                    format!("planes of position {} are not contiguous", key.position),
                ));
            }
            current = Some(&key.position);
        }
        if plane.values.len() != cells {
            out.push(Violation::new(
                "signals",
                format!(
                    "plane {key} has {} values, expected {} ({}x{})",
                    plane.values.len(),
                    cells,
                    rows,
                    trace.m
                ),
            ));
            continue;
        }
        if let Some(idx) = plane.values.iter().position(|v| !v.is_finite()) {
            let (j, k) = (idx / trace.m, idx % trace.m);
            out.push(Violation::new(
                "signals",
                format!(
                    "non-finite signal at ({},{}_dif,j={j},k={k})",
                    key.position,
                    key.dif.file_stem()
                ),
            ));
        }
    }

    match (&trace.predictions, &trace.truth) {
        (None, None) => {}
        (Some(_), None) | (None, Some(_)) => out.push(Violation::new(
            "predictions",
            "predictions and truth must be present together",
        )),
        (Some(pred), Some(truth)) => {
            if pred.len() != cells {
                out.push(Violation::new(
                    "predictions",
                    format!("predictions has {} entries, expected {cells}", pred.len()),
                ));
            }
            if truth.len() != trace.m {
                out.push(Violation::new(
                    "truth",
                    format!("truth has {} entries, expected {}", truth.len(), trace.m),
                ));
            }
            match trace.num_classes {
                None => out.push(Violation::new(
                    "num_classes",
                    "num_classes required when predictions are present",
                )),
                Some(c) => {
                    if pred.iter().chain(truth.iter()).any(|&id| id >= c) {
                        out.push(Violation::new(
                            "predictions",
                            format!("class id out of range (num_classes = {c})"),
                        ));
                    }
                }
            }
        }
    }

    for (kind, &label) in &trace.labels {
        if label > 1 {
            out.push(Violation::new(
                "labels",
                format!("label for {kind:?} is {label}, expected 0 or 1"),
            ));
        }
    }
    out
}

#[derive(Serialize, Deserialize)]
struct ManifestPosition {
    name: String,
    modalities: Vec<DifKind>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u64,
    model_id: String,
    family: TransformationFamily,
    m: usize,
    num_classes: Option<u16>,
    positions: Vec<ManifestPosition>,
    labels: BTreeMap<String, u8>,
    metadata: BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u64,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn plane_path(dir: &Path, key: &PlaneKey) -> std::path::PathBuf {
    dir.join("signals")
        .join(&key.position)
        .join(format!("{}.f32", key.dif.file_stem()))
}

/// Writes `trace` as a trace directory, creating `dir` if needed.
pub fn write_trace(trace: &SignalTrace, dir: &Path) -> Result<()> {
    let violations = validate_trace(trace);
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }

    let mut positions: Vec<ManifestPosition> = Vec::new();
    for plane in &trace.planes {
        match positions.last_mut() {
            Some(last) if last.name == plane.key.position => last.modalities.push(plane.key.dif),
            _ => positions.push(ManifestPosition {
                name: plane.key.position.clone(),
                modalities: vec![plane.key.dif],
            }),
        }
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        model_id: trace.model_id.clone(),
        family: trace.family.clone(),
        m: trace.m,
        num_classes: trace.num_classes,
        positions,
        labels: trace.labels.clone(),
        metadata: trace.metadata.clone(),
    };

    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    json.push(b'\n');
    write_file(&dir.join("manifest.json"), &json)?;

    for plane in &trace.planes {
        let path = plane_path(dir, &plane.key);
        let parent = path.parent().expect("plane path has a parent");
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        let bytes: Vec<u8> = plane.values.iter().flat_map(|v| v.to_le_bytes()).collect();
        write_file(&path, &bytes)?;
    }

    if let (Some(pred), Some(truth)) = (&trace.predictions, &trace.truth) {
        write_file(&dir.join("predictions.u16"), &u16_bytes(pred))?;
        write_file(&dir.join("truth.u16"), &u16_bytes(truth))?;
    }
    Ok(())
}

fn u16_bytes(values: &[u16]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn read_exact_len(path: &Path, expected: usize) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected {
        return Err(Error::PayloadSize {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len(),
        });
    }
    Ok(bytes)
}

fn read_u16s(path: &Path, count: usize) -> Result<Vec<u16>> {
    let bytes = read_exact_len(path, count * 2)?;
    Ok(bytes
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect())
}

/// Reads and validates a trace directory.
pub fn read_trace(dir: &Path) -> Result<SignalTrace> {
    let manifest_path = dir.join("manifest.json");
    let text = fs::read(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let probe: VersionProbe = serde_json::from_slice(&text).map_err(|e| Error::Json {
        path: manifest_path.clone(),
        source: e,
    })?;
    if probe.format_version != FORMAT_VERSION {
        return Err(Error::UnsupportedFormat(probe.format_version));
    }
    let manifest: Manifest = serde_json::from_slice(&text).map_err(|e| Error::Json {
        path: manifest_path.clone(),
        source: e,
    })?;

    let rows = manifest.family.v_values.len();
    let cells = rows * manifest.m;
    let mut planes = Vec::new();
    for pos in &manifest.positions {
        if !valid_position_name(&pos.name) {
            return Err(Error::Validation(vec![Violation::new(
                "positions",
                format!("invalid position name {:?}", pos.name),
            )]));
        }
        for &dif in &pos.modalities {
            let key = PlaneKey::new(pos.name.clone(), dif);
            let path = plane_path(dir, &key);
            let bytes = read_exact_len(&path, cells * 4)?;
            let values: Vec<f32> = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            planes.push(SignalPlane { key, values });
        }
    }

    let pred_path = dir.join("predictions.u16");
    let truth_path = dir.join("truth.u16");
    let (predictions, truth) = match (pred_path.exists(), truth_path.exists()) {
        (false, false) => (None, None),
        (true, true) => (
            Some(read_u16s(&pred_path, cells)?),
            Some(read_u16s(&truth_path, manifest.m)?),
        ),
        (true, false) => return Err(Error::io(&truth_path, not_found())),
        (false, true) => return Err(Error::io(&pred_path, not_found())),
    };

    let trace = SignalTrace {
        model_id: manifest.model_id,
        family: manifest.family,
        m: manifest.m,
        num_classes: manifest.num_classes,
        planes,
        predictions,
        truth,
        labels: manifest.labels,
        metadata: manifest.metadata,
    };
    let violations = validate_trace(&trace);
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    Ok(trace)
}

fn not_found() -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::NotFound, "file not found")
}

/// Writes one signal plane as CSV with header `j,k,value`.
pub fn write_plane_csv<W: Write>(trace: &SignalTrace, key: &PlaneKey, mut out: W) -> Result<()> {
    let plane = trace.plane(key)?;
    let io = |e| Error::io("<csv output>", e);
    writeln!(out, "j,k,value").map_err(io)?;
    for (idx, v) in plane.values.iter().enumerate() {
        writeln!(out, "{},{},{}", idx / trace.m, idx % trace.m, v).map_err(io)?;
    }
    Ok(())
}
