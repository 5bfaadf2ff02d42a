//! Random traces for property tests.

#![allow(dead_code)]

use ivtest_core::trace::{
    canonical_planes, FamilyKind, SignalPlane, SignalTrace, TransformationFamily,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Trace with `size` (odd) transformations, `m` objects and all canonical
/// planes filled with uniform values in `[lo, hi)`.
pub fn random_trace(seed: u64, size: usize, m: usize, lo: f32, hi: f32) -> SignalTrace {
    assert!(size % 2 == 1);
    let half = (size / 2) as i64;
    let v_values = (-half..=half).map(|v| v as f64).collect();
    let family = TransformationFamily::new(FamilyKind::Rotation, v_values);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = SignalTrace::new(format!("r{seed}"), family, m);
    for key in canonical_planes() {
        let values = (0..size * m).map(|_| rng.random_range(lo..hi)).collect();
        t.planes.push(SignalPlane { key, values });
    }
    t
}

/// Same trace with objects reordered by `perm` (new object `k` is old `perm[k]`).
pub fn permute_objects(t: &SignalTrace, perm: &[usize]) -> SignalTrace {
    let mut out = t.clone();
    for plane in &mut out.planes {
        let old = plane.values.clone();
        for (j, row) in plane.values.chunks_mut(t.m).enumerate() {
            for (k, v) in row.iter_mut().enumerate() {
                *v = old[j * t.m + perm[k]];
            }
        }
    }
    out
}
