//! Helpers shared by the integration tests: seeded random tensors, dense
//! oracles, and locating the MNIST files.
#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsvd_core::identification::{FeatureVector, RocCurve};
use tsvd_core::{frob_norm, tprod_reference, ttranspose, Tensor3};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut impl Rng, ell: usize, m: usize, n: usize) -> Tensor3 {
    Tensor3::from_fn(ell, m, n, |_, _, _| rng.random_range(-1.0..1.0)).unwrap()
}

pub fn rel_diff(a: &Tensor3, b: &Tensor3) -> f64 {
    frob_norm(&a.sub(b).unwrap()) / frob_norm(b).max(f64::MIN_POSITIVE)
}

/// `|B - U * U^T * B|_F` through block-circulant products.
pub fn dense_residual(u: &Tensor3, b: &Tensor3) -> f64 {
    let ut_b = tprod_reference(&ttranspose(u), b).unwrap();
    let proj = tprod_reference(u, &ut_b).unwrap();
    frob_norm(&b.sub(&proj).unwrap())
}

/// Exhaustive `(fpr, tpr)` at threshold `t` over all `i < j` pairs, rule `score >= t`.
pub fn exhaustive_rates(scores: &[(f64, bool)], t: f64) -> (f64, f64) {
    let pos = scores.iter().filter(|s| s.1).count().max(1) as f64;
    let neg = scores.iter().filter(|s| !s.1).count().max(1) as f64;
    let tp = scores.iter().filter(|s| s.1 && s.0 >= t).count() as f64;
    let fp = scores.iter().filter(|s| !s.1 && s.0 >= t).count() as f64;
    (fp / neg, tp / pos)
}

/// All pair scores computed one by one, with same-label flags.
pub fn pair_scores(features: &[FeatureVector]) -> Vec<(f64, bool)> {
    let mut out = Vec::new();
    for i in 0..features.len() {
        for j in i + 1..features.len() {
            let s = tsvd_core::identification::cosine_similarity(&features[i], &features[j]).unwrap();
            out.push((s, features[i].label() == features[j].label()));
        }
    }
    out
}

/// Every finite histogram point lies between the exhaustive curve one bin width
/// above and one bin width below its threshold.
pub fn roc_matches_exhaustive(roc: &RocCurve, scores: &[(f64, bool)], bins: usize) -> bool {
    let w = 1.0 / bins as f64;
    roc.points.iter().filter(|p| p.threshold.is_finite()).all(|p| {
        let hi = exhaustive_rates(scores, p.threshold + w);
        let lo = exhaustive_rates(scores, p.threshold - w);
        let eps = 1e-12;
        hi.0 - eps <= p.fpr && p.fpr <= lo.0 + eps && hi.1 - eps <= p.tpr && p.tpr <= lo.1 + eps
    })
}

/// Synthetic labelled feature vectors clustered around one prototype per label.
pub fn synthetic_features(rng: &mut impl Rng, count: usize, dim: usize, labels: usize) -> Vec<FeatureVector> {
    let protos: Vec<Vec<f64>> = (0..labels)
        .map(|_| (0..dim).map(|_| rng.random_range(0.1..1.0)).collect())
        .collect();
    (0..count)
        .map(|_| {
            let label = rng.random_range(0..labels);
            let values = protos[label]
                .iter()
                .map(|p| p + rng.random_range(0.0..0.3))
                .collect();
            FeatureVector::new(values, label).unwrap()
        })
        .collect()
}

pub fn mnist_dir() -> PathBuf {
    std::env::var_os("MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

/// Image and label paths for `train` or `t10k`, accepting raw or `.gz` files.
pub fn mnist_files(split: &str) -> Option<(PathBuf, PathBuf)> {
    let dir = mnist_dir();
    let find = |stem: String| {
        [stem.clone(), format!("{stem}.gz")]
            .into_iter()
            .map(|f| dir.join(f))
            .find(|p| p.is_file())
    };
    Some((
        find(format!("{split}-images-idx3-ubyte"))?,
        find(format!("{split}-labels-idx1-ubyte"))?,
    ))
}
