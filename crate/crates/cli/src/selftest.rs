//! Seeded synthetic checks of the fast paths against dense oracles and of the
//! tSVD invariants. Output depends only on the seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsvd_core::container;
use tsvd_core::identification::{cosine_similarity, roc_curve, FeatureVector};
use tsvd_core::{
    frob_norm, identity_tensor, is_f_diagonal, project_residual, tprod_fast, tprod_reference,
    truncate, tsvd, ttranspose, tube_spectrum, Parallelism, Result, Tensor3,
};

use crate::exit::{CliError, SELFTEST};

struct Suite {
    name: &'static str,
    cases: usize,
    run: fn(&mut ChaCha8Rng, bool) -> Result<bool>,
}

const SUITES: [Suite; 6] = [
    Suite { name: "t-product fast vs block-circulant", cases: 60, run: tprod_case },
    Suite { name: "projection residual vs dense", cases: 40, run: residual_case },
    Suite { name: "tSVD invariants", cases: 40, run: tsvd_case },
    Suite { name: "truncation optimality", cases: 10, run: optimality_case },
    Suite { name: "container round trip", cases: 10, run: container_case },
    Suite { name: "streaming ROC vs exhaustive", cases: 6, run: roc_case },
];

pub fn run(seed: u64, inject_fault: bool, par: Parallelism) -> Result<(), CliError> {
    let mut failed = 0;
    par.install(|| {
        for (i, suite) in SUITES.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let mut passed = 0;
            for _ in 0..suite.cases {
                match (suite.run)(&mut rng, inject_fault) {
                    Ok(true) => passed += 1,
                    Ok(false) => {}
                    Err(e) => eprintln!("{}: {e}", suite.name),
                }
            }
            println!("{}: {passed}/{} passed", suite.name, suite.cases);
            failed += suite.cases - passed;
        }
    });
    if failed > 0 {
        return Err(CliError::new(SELFTEST, format!("{failed} self-test case(s) failed")));
    }
    Ok(())
}

fn random(rng: &mut ChaCha8Rng, ell: usize, m: usize, n: usize) -> Tensor3 {
    Tensor3::from_fn(ell, m, n, |_, _, _| rng.random_range(-1.0..1.0)).expect("finite")
}

fn rel(a: &Tensor3, b: &Tensor3) -> f64 {
    frob_norm(&a.sub(b).expect("same shape")) / frob_norm(b).max(f64::MIN_POSITIVE)
}

fn tprod_case(rng: &mut ChaCha8Rng, fault: bool) -> Result<bool> {
    let (ell, p, m, n) = (
        rng.random_range(1..=7),
        rng.random_range(1..=7),
        rng.random_range(1..=7),
        rng.random_range(1..=7),
    );
    let a = random(rng, ell, p, n);
    let b = random(rng, p, m, n);
    let mut fast = tprod_fast(&a, &b)?;
    if fault {
        fast = fast.add(&Tensor3::from_fn(ell, m, n, |_, _, _| 1e-6)?)?;
    }
    Ok(rel(&fast, &tprod_reference(&a, &b)?) <= 1e-11)
}

fn residual_case(rng: &mut ChaCha8Rng, _: bool) -> Result<bool> {
    let (ell, m, n) = (rng.random_range(2..=8), rng.random_range(2..=8), rng.random_range(1..=6));
    let k = rng.random_range(1..=ell.min(m));
    let u = truncate(&tsvd(&random(rng, ell, m, n))?, k)?.into_u();
    let b = random(rng, ell, 1, n);
    let proj = tprod_reference(&u, &tprod_reference(&ttranspose(&u), &b)?)?;
    let dense = frob_norm(&b.sub(&proj)?);
    Ok((project_residual(&u, &b)? - dense).abs() <= 1e-10)
}

fn tsvd_case(rng: &mut ChaCha8Rng, _: bool) -> Result<bool> {
    let (ell, m, n) = (rng.random_range(1..=9), rng.random_range(1..=9), rng.random_range(1..=9));
    let a = random(rng, ell, m, n);
    let f = tsvd(&a)?;
    let eye = identity_tensor(f.rank(), n)?;
    let orth = [f.u(), f.v()].into_iter().try_fold(0.0f64, |acc, q| {
        Ok::<_, tsvd_core::Error>(acc.max(frob_norm(&tprod_fast(&ttranspose(q), q)?.sub(&eye)?)))
    })?;
    Ok(rel(&f.reconstruct()?, &a) <= 1e-10
        && orth <= 1e-10
        && is_f_diagonal(f.s(), 0.0)
        && tube_spectrum(&f).is_non_increasing())
}

fn optimality_case(rng: &mut ChaCha8Rng, _: bool) -> Result<bool> {
    let (ell, m, n) = (rng.random_range(2..=7), rng.random_range(2..=7), rng.random_range(1..=5));
    let a = random(rng, ell, m, n);
    let k = rng.random_range(1..ell.min(m).max(2));
    let best = frob_norm(&a.sub(&truncate(&tsvd(&a)?, k)?.reconstruct()?)?);
    for _ in 0..50 {
        let b = tprod_fast(&random(rng, ell, k, n), &random(rng, k, m, n))?;
        let c = dot(&a, &b) / dot(&b, &b);
        if frob_norm(&a.sub(&b.scale(c)?)?) < best {
            return Ok(false);
        }
    }
    Ok(true)
}

fn dot(a: &Tensor3, b: &Tensor3) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn container_case(rng: &mut ChaCha8Rng, _: bool) -> Result<bool> {
    let (ell, m, n) = (rng.random_range(1..=8), rng.random_range(1..=8), rng.random_range(1..=8));
    let f = tsvd(&random(rng, ell, m, n))?;
    let bytes = container::encode_factors(&f);
    let back = container::decode(&bytes)?.into_factors()?;
    Ok(back == f && container::encode_factors(&back) == bytes)
}

fn roc_case(rng: &mut ChaCha8Rng, _: bool) -> Result<bool> {
    let count = rng.random_range(2..=120);
    let bins = [8, 64, 4096][rng.random_range(0..3)];
    let features: Vec<FeatureVector> = (0..count)
        .map(|_| {
            let label = rng.random_range(0..3usize);
            let values = (0..10)
                .map(|d| if d % 3 == label { 1.0 } else { 0.2 } + rng.random_range(0.0..0.4))
                .collect();
            FeatureVector::new(values, label)
        })
        .collect::<Result<_>>()?;
    let roc = roc_curve(&features, bins, Parallelism::sequential())?;
    let mut scores = Vec::new();
    for i in 0..count {
        for j in i + 1..count {
            scores.push((
                cosine_similarity(&features[i], &features[j])?,
                features[i].label() == features[j].label(),
            ));
        }
    }
    let rates = |t: f64| {
        let count = |same: bool| scores.iter().filter(|s| s.1 == same).count().max(1) as f64;
        let above = |same: bool| scores.iter().filter(|s| s.1 == same && s.0 >= t).count() as f64;
        (above(false) / count(false), above(true) / count(true))
    };
    let w = 1.0 / bins as f64;
    Ok(roc.points.iter().filter(|p| p.threshold.is_finite()).all(|p| {
        let (hi, lo) = (rates(p.threshold + w), rates(p.threshold - w));
        hi.0 <= p.fpr + 1e-12 && p.fpr <= lo.0 + 1e-12 && hi.1 <= p.tpr + 1e-12 && p.tpr <= lo.1 + 1e-12
    }))
}
