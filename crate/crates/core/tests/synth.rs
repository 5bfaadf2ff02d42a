mod support;

use std::path::Path;

use ivtest_core::features::{assemble_vector, basic_stats, FeatureConfig};
use ivtest_core::synth::{
    generate_repository, generate_trace, load_repository, plan_repository, Archetype, RepoOptions,
    SyntheticSpec,
};
use ivtest_core::trace::{canonical_planes, DifKind, PlaneKey, TransformationFamily};
use ivtest_core::varmat::compute_variance_matrix;
use proptest::prelude::*;

fn dir_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn small_opts(seed: u64) -> RepoOptions {
    RepoOptions {
        count: 14,
        balance: 0.5,
        seed,
        m: 12,
    }
}

#[test]
fn same_seed_gives_identical_directories() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate_repository(&small_opts(9), a.path()).unwrap();
    generate_repository(&small_opts(9), b.path()).unwrap();
    let (x, y) = (dir_bytes(a.path()), dir_bytes(b.path()));
    // Manifest, five planes, predictions and truth per model, plus repo.json.
    assert_eq!(x.len(), 14 * 8 + 1);
    assert_eq!(x, y);
}

#[test]
fn repository_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate_repository(&small_opts(1), dir.path()).unwrap();
    let (loaded, traces) = load_repository(&dir.path().join("repo.json")).unwrap();
    assert_eq!(loaded, manifest);
    for (e, t) in manifest.models.iter().zip(&traces) {
        assert_eq!(t, &generate_trace(&e.spec).unwrap());
        assert_eq!(t.labels["rotation"], e.label);
    }
}

#[test]
fn default_repository_covers_every_archetype_and_balance() {
    let plan = plan_repository(&RepoOptions::default()).unwrap();
    for a in Archetype::INVARIANT.iter().chain(&Archetype::VARIANT) {
        assert!(plan.models.iter().any(|e| e.archetype == *a), "{a} missing");
    }
    let variant = plan.models.iter().filter(|e| e.label == 1).count();
    assert!((70..=80).contains(&variant));
    for e in &plan.models {
        let invariant = Archetype::INVARIANT.contains(&e.archetype);
        assert_eq!(e.label, u8::from(!invariant), "{}", e.model_id);
    }
}

#[test]
fn anomalous_square_mean_spread() {
    // A rapid-increment model against the smooth invariant ones on Max@CONF.
    let family = TransformationFamily::rotation_default();
    let svm = |rate: f64, seed: u64| {
        let mut s = SyntheticSpec::new("x", family.clone(), 100, seed);
        s.base_rate = rate;
        let t = generate_trace(&s.labelled()).unwrap();
        basic_stats(&compute_variance_matrix(&t, &canonical_planes()[0], None).unwrap()).svm
    };
    let typical = (0..5).map(|s| svm(0.05, s)).fold(0.0, f64::max);
    let anomalous = svm(0.1, 99);
    assert!(anomalous >= 2.0 * typical, "{anomalous} vs {typical}");
}

#[test]
fn invariant_models_have_small_mean() {
    let plan = plan_repository(&RepoOptions::default()).unwrap();
    let cfg = FeatureConfig::default();
    for e in plan.models.iter().filter(|e| e.label == 0) {
        let v = assemble_vector(&generate_trace(&e.spec).unwrap(), &cfg).unwrap();
        let mean = v.get("Max@CONF", "mean").unwrap();
        assert!(mean < 0.05, "{} mean {mean}", e.model_id);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn regular_specs_are_valid_symmetric_and_monotone(
        seed in any::<u64>(),
        rate in 0.0f64..0.5,
        smoothness in prop::sample::select(vec![0.0, 1e-4]),
    ) {
        let mut s = SyntheticSpec::new("p", TransformationFamily::rotation_default(), 40, seed);
        s.base_rate = rate;
        s.smoothness = smoothness;
        let t = generate_trace(&s.labelled()).unwrap();
        prop_assert!(t.validate().is_empty());
        let key = PlaneKey::new("CONF", DifKind::Max);
        let m = compute_variance_matrix(&t, &key, None).unwrap();
        let n = m.n();
        // Tolerance covers f32 storage plus the roughness term.
        let tol = 1e-5 * (1.0 + rate) + 6.0 * smoothness;
        for i in 0..=n {
            for j in 0..i {
                prop_assert!((m.get(i, j) - m.get(n - j, n - i)).abs() <= tol);
            }
            // Moving away from the diagonal along row i never decreases delta.
            for j in 1..i {
                prop_assert!(m.get(i, j - 1) + tol >= m.get(i, j));
            }
        }
    }
}
