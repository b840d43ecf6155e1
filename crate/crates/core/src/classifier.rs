//! Local tSVD classifier: one truncated basis per class, nearest subspace wins.
//!
//! Training keeps only the leading `k` left singular slices `U_i` of each class
//! tensor. A test image `b`, stored as a lateral slice, is scored against each
//! class by `||b - U_i * U_i^T * b||_F` and assigned to the class with the
//! smallest residual.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mnist::ClassPartition;
use crate::parallel::Parallelism;
use crate::spectral::dft_tubes;
use crate::tensor::Tensor3;
use crate::tsvd::{left_factor, SpectralBasis, TubeSpectrum, DEFAULT_TOL};

/// One trained class: `U_i` in real and spectral form.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassBasis {
    label: usize,
    /// Number of training images the basis was learned from.
    source_count: usize,
    u: Tensor3,
    spectral: SpectralBasis,
}

impl ClassBasis {
    pub fn label(&self) -> usize {
        self.label
    }

    pub fn source_count(&self) -> usize {
        self.source_count
    }

    pub fn u(&self) -> &Tensor3 {
        &self.u
    }

    pub fn spectral(&self) -> &SpectralBasis {
        &self.spectral
    }
}

/// Trained bases for every class, sharing `ell`, `n` and truncation `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassBasisSet {
    bases: Vec<ClassBasis>,
    k: usize,
    ell: usize,
    n: usize,
}

impl ClassBasisSet {
    /// Validates orthonormality and shared shape of `(label, U, source_count)` entries.
    pub fn new(entries: Vec<(usize, Tensor3, usize)>) -> Result<Self> {
        let first = entries
            .first()
            .ok_or_else(|| Error::Shape("no class bases".into()))?
            .1
            .dims();
        let mut bases = Vec::with_capacity(entries.len());
        for (label, u, source_count) in entries {
            let d = u.dims();
            if d != first {
                return Err(Error::DimensionMismatch(format!(
                    "basis for class {label} is {d}, expected {first}"
                )));
            }
            let spectral = SpectralBasis::new(&u);
            let residual = spectral.orthonormality_residual();
            if residual > DEFAULT_TOL {
                return Err(Error::NotOrthonormal {
                    residual,
                    tol: DEFAULT_TOL,
                });
            }
            bases.push(ClassBasis {
                label,
                source_count,
                u,
                spectral,
            });
        }
        Ok(ClassBasisSet {
            bases,
            k: first.m,
            ell: first.ell,
            n: first.n,
        })
    }

    pub fn bases(&self) -> &[ClassBasis] {
        &self.bases
    }

    pub fn len(&self) -> usize {
        self.bases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bases.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// `(ell, n)`: the image shape the bases accept.
    pub fn slice_shape(&self) -> (usize, usize) {
        (self.ell, self.n)
    }

    /// Stored reals: `N * ell * k * n`.
    pub fn storage(&self) -> usize {
        self.bases.len() * self.ell * self.k * self.n
    }

    fn check_slice(&self, b: &Tensor3) -> Result<()> {
        let d = b.dims();
        if d.ell != self.ell || d.m != 1 || d.n != self.n {
            return Err(Error::DimensionMismatch(format!(
                "image {d} against bases for {}x1x{}",
                self.ell, self.n
            )));
        }
        Ok(())
    }

    /// Projection residual of `b` against every class, in basis order.
    pub fn residuals(&self, b: &Tensor3) -> Result<Vec<f64>> {
        self.check_slice(b)?;
        let spec = dft_tubes(b);
        Ok(self
            .bases
            .iter()
            .map(|basis| basis.spectral.residual_unchecked(&spec))
            .collect())
    }

    pub fn classify(&self, b: &Tensor3) -> Result<Classification> {
        let residuals = self.residuals(b)?;
        let best = argmin(&residuals);
        Ok(Classification {
            label: self.bases[best].label,
            residuals,
        })
    }
}

/// Index of the smallest value; the lowest index wins ties.
fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub label: usize,
    pub residuals: Vec<f64>,
}

fn check_ranks(partition: &ClassPartition, ks: &[usize]) -> Result<usize> {
    let mut limit = usize::MAX;
    for label in 0..partition.num_classes() {
        let cap = partition
            .class(label)
            .map_or(0, |t| t.dims().ell.min(t.dims().m));
        limit = limit.min(cap);
    }
    let k_max = ks.iter().copied().max().unwrap_or(0);
    if let Some(&bad) = ks.iter().find(|&&k| k == 0 || k > limit) {
        return Err(Error::RankOutOfRange { k: bad, max: limit });
    }
    Ok(k_max)
}

/// Bases for several truncation levels from a single decomposition per class.
#[derive(Debug, Clone)]
pub struct TrainedSweep {
    pub sets: Vec<ClassBasisSet>,
    /// Singular-tube norms of every class tensor, all `min(ell, m_i)` of them.
    pub spectra: Vec<TubeSpectrum>,
}

/// Trains tubal-rank-`k` bases for every `k` in `ks`.
///
/// Each class is decomposed once at the largest `k`; smaller bases are its
/// leading lateral slices, which is exactly what truncating at that `k` gives.
pub fn train_sweep(partition: &ClassPartition, ks: &[usize], par: Parallelism) -> Result<TrainedSweep> {
    let k_max = check_ranks(partition, ks)?;
    par.install(|| {
        let mut full = Vec::with_capacity(partition.num_classes());
        let mut spectra = Vec::with_capacity(partition.num_classes());
        for label in 0..partition.num_classes() {
            let tensor = partition
                .class(label)
                .ok_or(Error::RankOutOfRange { k: k_max, max: 0 })?;
            let (u, spectrum) = left_factor(tensor, k_max)?;
            full.push((label, u, tensor.dims().m));
            spectra.push(spectrum);
        }
        let sets = ks
            .iter()
            .map(|&k| {
                let entries = full
                    .iter()
                    .map(|(label, u, count)| Ok((*label, u.leading_lateral_slices(k)?, *count)))
                    .collect::<Result<Vec<_>>>()?;
                ClassBasisSet::new(entries)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TrainedSweep { sets, spectra })
    })
}

/// Trains one tubal-rank-`k` basis per class; only `U_i` is kept.
pub fn train(partition: &ClassPartition, k: usize, par: Parallelism) -> Result<ClassBasisSet> {
    let mut sweep = train_sweep(partition, &[k], par)?;
    Ok(sweep.sets.remove(0))
}

/// Residuals of every image in `partition` against every basis.
///
/// Rows follow [`ClassPartition::samples`] order; each row carries the true
/// label and the image's position in its source file.
pub fn score_partition(
    bases: &ClassBasisSet,
    partition: &ClassPartition,
    par: Parallelism,
) -> Result<Vec<ScoredImage>> {
    if let Some((ell, n)) = partition.slice_shape() {
        if (ell, n) != bases.slice_shape() {
            return Err(Error::DimensionMismatch(format!(
                "images are {ell}x1x{n}, bases expect {}x1x{}",
                bases.ell, bases.n
            )));
        }
    }
    let jobs: Vec<(usize, usize)> = (0..partition.num_classes())
        .flat_map(|label| {
            let m = partition.class(label).map_or(0, |t| t.dims().m);
            (0..m).map(move |j| (label, j))
        })
        .collect();
    par.install(|| {
        jobs.par_iter()
            .map(|&(label, j)| {
                let tensor = partition.class(label).expect("class listed in jobs");
                let residuals = bases.residuals(&tensor.lateral_slice(j))?;
                Ok(ScoredImage {
                    label,
                    origin: partition.origins()[label][j],
                    residuals,
                })
            })
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredImage {
    pub label: usize,
    pub origin: usize,
    pub residuals: Vec<f64>,
}

impl ScoredImage {
    pub fn predicted(&self, bases: &ClassBasisSet) -> usize {
        bases.bases[argmin(&self.residuals)].label
    }
}

/// Recognition rates, confusion matrix and most-frequent predictions per class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationReport {
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    /// Predicted label of every test image, in partition sample order.
    pub predictions: Vec<usize>,
}

impl ClassificationReport {
    pub fn from_predictions(num_classes: usize, pairs: &[(usize, usize)]) -> Self {
        let mut confusion = vec![vec![0u64; num_classes]; num_classes];
        for &(truth, pred) in pairs {
            confusion[truth][pred] += 1;
        }
        ClassificationReport {
            confusion,
            predictions: pairs.iter().map(|p| p.1).collect(),
        }
    }

    pub fn total(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.confusion.len()).map(|i| self.confusion[i][i]).sum()
    }

    /// Correct / total over the whole test set.
    pub fn overall_rate(&self) -> f64 {
        self.correct() as f64 / self.total().max(1) as f64
    }

    /// Correct / count for class `i`; `None` when the class has no test images.
    pub fn class_rate(&self, i: usize) -> Option<f64> {
        let row = &self.confusion[i];
        let count: u64 = row.iter().sum();
        (count > 0).then(|| row[i] as f64 / count as f64)
    }

    pub fn class_count(&self, i: usize) -> u64 {
        self.confusion[i].iter().sum()
    }

    /// Predicted classes of true class `i`, most frequent first; ties by lowest label.
    /// Classes never predicted are omitted.
    pub fn ranked_predictions(&self, i: usize) -> Vec<usize> {
        let row = &self.confusion[i];
        let mut order: Vec<usize> = (0..row.len()).filter(|&j| row[j] > 0).collect();
        order.sort_by(|&a, &b| row[b].cmp(&row[a]).then(a.cmp(&b)));
        order
    }

    pub fn most_frequent(&self, i: usize) -> Option<usize> {
        self.ranked_predictions(i).first().copied()
    }

    pub fn second_most_frequent(&self, i: usize) -> Option<usize> {
        self.ranked_predictions(i).get(1).copied()
    }
}

/// Classifies every image of `test` and tallies the results.
pub fn evaluate(
    bases: &ClassBasisSet,
    test: &ClassPartition,
    par: Parallelism,
) -> Result<ClassificationReport> {
    if test.num_classes() != bases.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} test classes against {} bases",
            test.num_classes(),
            bases.len()
        )));
    }
    let scored = score_partition(bases, test, par)?;
    let pairs: Vec<(usize, usize)> = scored
        .iter()
        .map(|s| (s.label, s.predicted(bases)))
        .collect();
    Ok(ClassificationReport::from_predictions(bases.len(), &pairs))
}

/// Round-trippable rendering used in every CSV.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

/// `k,rate` rows, one per truncation level.
pub fn write_rates_csv(path: &Path, rows: &[(usize, &ClassificationReport)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["k", "rate", "correct", "total"])?;
    for (k, report) in rows {
        w.write_record([
            k.to_string(),
            fmt_real(report.overall_rate()),
            report.correct().to_string(),
            report.total().to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Per-class table: rate plus most and second most frequent prediction.
pub fn write_per_class_csv(path: &Path, report: &ClassificationReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["digit", "most_freq", "second_most", "rate", "count"])?;
    let opt = |x: Option<usize>| x.map(|v| v.to_string()).unwrap_or_default();
    for i in 0..report.confusion.len() {
        w.write_record([
            i.to_string(),
            opt(report.most_frequent(i)),
            opt(report.second_most_frequent(i)),
            report.class_rate(i).map(fmt_real).unwrap_or_default(),
            report.class_count(i).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Raw confusion matrix: header row of predicted labels, one row per true label.
pub fn write_confusion_csv(path: &Path, report: &ClassificationReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    let n = report.confusion.len();
    let mut header = vec!["true\\pred".to_string()];
    header.extend((0..n).map(|j| j.to_string()));
    w.write_record(&header)?;
    for (i, row) in report.confusion.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(row.iter().map(u64::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::frob_norm;

    fn blob(ell: usize, m: usize, n: usize, seed: usize) -> Tensor3 {
        Tensor3::from_fn(ell, m, n, |i, j, k| {
            (((i + 1) * (seed + 3)) as f64 * 0.41 + (j * (seed + 1)) as f64 * 0.29 + (k * 7) as f64 * 0.13)
                .sin()
                .abs()
        })
        .unwrap()
    }

    fn three_classes() -> ClassPartition {
        ClassPartition::from_tensors(vec![blob(5, 6, 4, 0), blob(5, 7, 4, 1), blob(5, 5, 4, 2)]).unwrap()
    }

    #[test]
    fn argmin_prefers_lowest_index_on_ties() {
        assert_eq!(argmin(&[3.0, 1.0, 1.0, 2.0]), 1);
        assert_eq!(argmin(&[0.5]), 0);
    }

    #[test]
    fn train_shapes_and_rank_limits() {
        let part = three_classes();
        let bases = train(&part, 2, Parallelism::sequential()).unwrap();
        assert_eq!(bases.len(), 3);
        assert_eq!(bases.k(), 2);
        assert_eq!(bases.bases()[1].u().dims().m, 2);
        assert_eq!(bases.storage(), 3 * 5 * 2 * 4);
        assert!(matches!(
            train(&part, 6, Parallelism::sequential()),
            Err(Error::RankOutOfRange { k: 6, max: 5 })
        ));
        assert!(train(&part, 0, Parallelism::sequential()).is_err());
    }

    #[test]
    fn basis_slice_is_classified_into_its_class() {
        let part = three_classes();
        let bases = train(&part, 2, Parallelism::sequential()).unwrap();
        for c in 0..3 {
            let b = bases.bases()[c].u().lateral_slice(0);
            let out = bases.classify(&b).unwrap();
            assert_eq!(out.label, c);
            assert!(out.residuals[c] <= 1e-10 * frob_norm(&b));
        }
    }

    #[test]
    fn scaling_scales_residuals() {
        let part = three_classes();
        let bases = train(&part, 2, Parallelism::sequential()).unwrap();
        let b = blob(5, 1, 4, 9);
        let base = bases.classify(&b).unwrap();
        let scaled = bases.classify(&b.scale(3.5).unwrap()).unwrap();
        assert_eq!(base.label, scaled.label);
        for (x, y) in base.residuals.iter().zip(&scaled.residuals) {
            assert!((3.5 * x - y).abs() <= 1e-12 * y.max(1.0));
        }
    }

    #[test]
    fn single_image_class() {
        let img = blob(4, 1, 3, 5);
        let other = blob(4, 3, 3, 6);
        let part = ClassPartition::from_tensors(vec![img.clone(), other]).unwrap();
        let bases = train(&part, 1, Parallelism::sequential()).unwrap();
        let out = bases.classify(&img).unwrap();
        assert_eq!(out.label, 0);
        assert!(out.residuals[0] <= 1e-10 * frob_norm(&img));
    }

    #[test]
    fn full_rank_training_images_land_in_their_class() {
        // k = m_i: every training image lies in its class span
        let part = ClassPartition::from_tensors(vec![blob(6, 3, 4, 0), blob(6, 3, 4, 4)]).unwrap();
        let bases = train(&part, 3, Parallelism::sequential()).unwrap();
        let report = evaluate(&bases, &part, Parallelism::sequential()).unwrap();
        assert_eq!(report.correct(), 6);
    }

    #[test]
    fn classify_rejects_wrong_shape() {
        let bases = train(&three_classes(), 2, Parallelism::sequential()).unwrap();
        assert!(bases.classify(&blob(4, 1, 4, 0)).is_err());
        assert!(bases.classify(&blob(5, 2, 4, 0)).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let part = three_classes();
        let a = train(&part, 2, Parallelism::new(2).unwrap()).unwrap();
        let b = train(&part, 2, Parallelism::sequential()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_matches_individual_training() {
        let part = three_classes();
        let sweep = train_sweep(&part, &[1, 3], Parallelism::sequential()).unwrap();
        let single = train(&part, 1, Parallelism::sequential()).unwrap();
        let b = blob(5, 1, 4, 11);
        assert_eq!(sweep.sets[0].residuals(&b).unwrap(), single.residuals(&b).unwrap());
        assert_eq!(sweep.spectra.len(), 3);
        assert_eq!(sweep.spectra[2].norms().len(), 5);
    }

    #[test]
    fn report_bookkeeping() {
        let pairs = [(0, 0), (0, 1), (0, 1), (0, 2), (1, 1), (2, 2), (2, 0)];
        let r = ClassificationReport::from_predictions(3, &pairs);
        assert_eq!(r.total(), 7);
        assert_eq!(r.correct(), 3);
        assert!((r.overall_rate() - 3.0 / 7.0).abs() < 1e-15);
        assert_eq!(r.class_rate(0), Some(0.25));
        assert_eq!(r.most_frequent(0), Some(1));
        assert_eq!(r.second_most_frequent(0), Some(0));
        assert_eq!(r.second_most_frequent(1), None);
        // tie between 0 and 2 for class 2 resolves to label 0
        assert_eq!(r.most_frequent(2), Some(0));
        let empty = ClassificationReport::from_predictions(2, &[(0, 0)]);
        assert_eq!(empty.class_rate(1), None);
    }

    #[test]
    fn csv_exports() {
        let dir = tempfile::tempdir().unwrap();
        let r = ClassificationReport::from_predictions(2, &[(0, 0), (1, 0), (1, 1)]);
        write_rates_csv(&dir.path().join("rates.csv"), &[(4, &r)]).unwrap();
        write_per_class_csv(&dir.path().join("per.csv"), &r).unwrap();
        write_confusion_csv(&dir.path().join("conf.csv"), &r).unwrap();
        let rates = std::fs::read_to_string(dir.path().join("rates.csv")).unwrap();
        let line = rates.lines().nth(1).unwrap();
        let rate: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(rate, 2.0 / 3.0);
        let conf = std::fs::read_to_string(dir.path().join("conf.csv")).unwrap();
        assert_eq!(conf, "true\\pred,0,1\n0,1,0\n1,1,1\n");
        let per = std::fs::read_to_string(dir.path().join("per.csv")).unwrap();
        assert!(per.starts_with("digit,most_freq,second_most,rate,count\n0,0,,"));
    }
}
