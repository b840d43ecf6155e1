//! Pairwise same-class verification from projection-residual feature vectors.
//!
//! Each image is described by its residuals against all class bases. Two images
//! are compared by the cosine of their feature vectors; ROC curves sweep a
//! threshold over these scores for all unordered pairs, with pairs of equal
//! true labels counted as positives.

use std::io::Write;
use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;

use crate::classifier::{fmt_real, score_partition, ClassBasisSet};
use crate::error::{Error, Result};
use crate::mnist::ClassPartition;
use crate::parallel::Parallelism;

/// Default number of histogram bins on `[0, 1]`.
pub const DEFAULT_BINS: usize = 4096;

/// Score window shown in heatmaps; lower scores map to black.
pub const HEATMAP_WINDOW: (f64, f64) = (0.98, 1.0);

/// Residuals of one image against every class basis, plus its true label.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Vec<f64>,
    label: usize,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, label: usize) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Shape(
                "feature entries must be finite and nonnegative".into(),
            ));
        }
        Ok(FeatureVector { values, label })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label(&self) -> usize {
        self.label
    }

    fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// One feature vector per image of `partition`, in source-file order.
pub fn feature_vectors(
    bases: &ClassBasisSet,
    partition: &ClassPartition,
    par: Parallelism,
) -> Result<Vec<FeatureVector>> {
    let mut scored = score_partition(bases, partition, par)?;
    scored.sort_by_key(|s| s.origin);
    scored
        .into_iter()
        .map(|s| FeatureVector::new(s.residuals, s.label))
        .collect()
}

/// Indices of `features` sorted by label, file order kept within a label.
pub fn order_by_label(features: &[FeatureVector]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..features.len()).collect();
    idx.sort_by_key(|&i| features[i].label);
    idx
}

#[inline]
fn cosine_raw(f: &[f64], nf: f64, g: &[f64], ng: f64) -> f64 {
    let dot: f64 = f.iter().zip(g).map(|(a, b)| a * b).sum();
    (dot / (nf * ng)).clamp(0.0, 1.0)
}

/// `f . g / (|f| |g|)`; in `[0, 1]` since entries are nonnegative.
pub fn cosine_similarity(f: &FeatureVector, g: &FeatureVector) -> Result<f64> {
    let (nf, ng) = (f.norm(), g.norm());
    if nf == 0.0 {
        return Err(Error::ZeroFeature { index: 0 });
    }
    if ng == 0.0 {
        return Err(Error::ZeroFeature { index: 1 });
    }
    if f.values.len() != g.values.len() {
        return Err(Error::DimensionMismatch(format!(
            "feature lengths {} and {}",
            f.values.len(),
            g.values.len()
        )));
    }
    Ok(cosine_raw(&f.values, nf, &g.values, ng))
}

fn norms_checked(features: &[FeatureVector]) -> Result<Vec<f64>> {
    features
        .iter()
        .enumerate()
        .map(|(index, f)| {
            let n = f.norm();
            if n == 0.0 {
                Err(Error::ZeroFeature { index })
            } else {
                Ok(n)
            }
        })
        .collect()
}

/// Dense block of similarity scores, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityBlock {
    pub rows: Range<usize>,
    pub cols: Range<usize>,
    pub scores: Vec<f64>,
}

impl SimilarityBlock {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.scores[(i - self.rows.start) * self.cols.len() + (j - self.cols.start)]
    }
}

fn check_range(r: &Range<usize>, len: usize) -> Result<()> {
    if r.start > r.end || r.end > len {
        return Err(Error::RangeOutOfBounds {
            start: r.start,
            end: r.end,
            len,
        });
    }
    Ok(())
}

/// Scores `(i, j)` for `i` in `rows`, `j` in `cols`.
pub fn similarity_block(
    features: &[FeatureVector],
    rows: Range<usize>,
    cols: Range<usize>,
) -> Result<SimilarityBlock> {
    check_range(&rows, features.len())?;
    check_range(&cols, features.len())?;
    let norms: Vec<f64> = features[rows.start..rows.end]
        .iter()
        .chain(&features[cols.start..cols.end])
        .enumerate()
        .map(|(k, f)| {
            let n = f.norm();
            let index = if k < rows.len() { rows.start + k } else { cols.start + k - rows.len() };
            if n == 0.0 {
                Err(Error::ZeroFeature { index })
            } else {
                Ok(n)
            }
        })
        .collect::<Result<_>>()?;
    let (rn, cn) = norms.split_at(rows.len());
    let scores = rows
        .clone()
        .into_par_iter()
        .flat_map_iter(|i| {
            let f = &features[i].values;
            let nf = rn[i - rows.start];
            cols.clone()
                .map(move |j| cosine_raw(f, nf, &features[j].values, cn[j - cols.start]))
        })
        .collect();
    Ok(SimilarityBlock { rows, cols, scores })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC curve over all unordered pairs, thresholds ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub positives: u64,
    pub negatives: u64,
}

impl RocCurve {
    /// Builds the curve from per-slot pair counts.
    ///
    /// Slot `b < bins` holds scores in `[b/bins, (b+1)/bins)`; slot `bins` holds
    /// scores of exactly 1. The point at threshold `t = b/bins` counts every
    /// pair in slots `>= b`, i.e. every pair with score `>= t`.
    fn from_histograms(pos: &[u64], neg: &[u64]) -> Self {
        let bins = pos.len() - 1;
        let positives: u64 = pos.iter().sum();
        let negatives: u64 = neg.iter().sum();
        let rate = |count: u64, total: u64| {
            if total == 0 {
                0.0
            } else {
                count as f64 / total as f64
            }
        };
        let mut points = Vec::with_capacity(bins + 3);
        points.push(RocPoint {
            threshold: f64::NEG_INFINITY,
            fpr: 1.0,
            tpr: 1.0,
        });
        let mut tp_above = vec![0u64; bins + 2];
        let mut fp_above = vec![0u64; bins + 2];
        for b in (0..=bins).rev() {
            tp_above[b] = tp_above[b + 1] + pos[b];
            fp_above[b] = fp_above[b + 1] + neg[b];
        }
        for b in 0..=bins {
            points.push(RocPoint {
                threshold: b as f64 / bins as f64,
                fpr: rate(fp_above[b], negatives),
                tpr: rate(tp_above[b], positives),
            });
        }
        points.push(RocPoint {
            threshold: f64::INFINITY,
            fpr: 0.0,
            tpr: 0.0,
        });
        RocCurve {
            points,
            positives,
            negatives,
        }
    }

    /// Trapezoidal area under the curve.
    pub fn auc(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[0].fpr - w[1].fpr) * (w[0].tpr + w[1].tpr) / 2.0)
            .sum()
    }

    /// `tpr` at the grid point nearest `threshold`.
    pub fn point_at(&self, threshold: f64) -> Option<&RocPoint> {
        self.points
            .iter()
            .filter(|p| p.threshold.is_finite())
            .min_by(|a, b| {
                (a.threshold - threshold)
                    .abs()
                    .total_cmp(&(b.threshold - threshold).abs())
            })
    }
}

#[inline]
fn slot(score: f64, bins: usize) -> usize {
    if score >= 1.0 {
        bins
    } else {
        ((score * bins as f64) as usize).min(bins - 1)
    }
}

/// ROC over all `i < j` pairs using two streaming score histograms.
///
/// `bins` uniform bins on `[0, 1]` give thresholds `b / bins`; no pair matrix is
/// stored. Rows are scored in parallel and histograms merged by addition.
pub fn roc_curve(features: &[FeatureVector], bins: usize, par: Parallelism) -> Result<RocCurve> {
    if bins < 2 {
        return Err(Error::Shape(format!("need at least 2 bins, got {bins}")));
    }
    let norms = norms_checked(features)?;
    let count = features.len();
    let (pos, neg) = par.install(|| {
        (0..count)
            .into_par_iter()
            .fold(
                || (vec![0u64; bins + 1], vec![0u64; bins + 1]),
                |(mut pos, mut neg), i| {
                    let f = &features[i];
                    for j in i + 1..count {
                        let g = &features[j];
                        let s = cosine_raw(&f.values, norms[i], &g.values, norms[j]);
                        if f.label == g.label {
                            pos[slot(s, bins)] += 1;
                        } else {
                            neg[slot(s, bins)] += 1;
                        }
                    }
                    (pos, neg)
                },
            )
            .reduce(
                || (vec![0u64; bins + 1], vec![0u64; bins + 1]),
                |(mut p1, mut n1), (p2, n2)| {
                    p1.iter_mut().zip(&p2).for_each(|(a, b)| *a += b);
                    n1.iter_mut().zip(&n2).for_each(|(a, b)| *a += b);
                    (p1, n1)
                },
            )
    });
    Ok(RocCurve::from_histograms(&pos, &neg))
}

/// Mean similarity of same-label pairs and of different-label pairs (`i < j`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockContrast {
    pub within_mean: f64,
    pub cross_mean: f64,
}

pub fn block_contrast(features: &[FeatureVector], par: Parallelism) -> Result<BlockContrast> {
    let norms = norms_checked(features)?;
    let count = features.len();
    // per-row partial sums, added in row order so the result is reproducible
    let rows: Vec<(f64, u64, f64, u64)> = par.install(|| {
        (0..count)
            .into_par_iter()
            .map(|i| {
                let f = &features[i];
                let mut acc = (0.0, 0, 0.0, 0);
                for j in i + 1..count {
                    let g = &features[j];
                    let s = cosine_raw(&f.values, norms[i], &g.values, norms[j]);
                    if f.label == g.label {
                        acc.0 += s;
                        acc.1 += 1;
                    } else {
                        acc.2 += s;
                        acc.3 += 1;
                    }
                }
                acc
            })
            .collect()
    });
    let (ws, wc, cs, cc) = rows
        .iter()
        .fold((0.0, 0u64, 0.0, 0u64), |a, r| (a.0 + r.0, a.1 + r.1, a.2 + r.2, a.3 + r.3));
    Ok(BlockContrast {
        within_mean: ws / wc.max(1) as f64,
        cross_mean: cs / cc.max(1) as f64,
    })
}

/// `threshold,fpr,tpr` rows.
pub fn write_roc_csv(path: &Path, roc: &RocCurve) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["threshold", "fpr", "tpr"])?;
    for p in &roc.points {
        let t = if p.threshold.is_finite() {
            fmt_real(p.threshold)
        } else if p.threshold > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
        w.write_record([t, fmt_real(p.fpr), fmt_real(p.tpr)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Maps a score to a gray level: below the window is 0, the window spans 0..=255.
pub fn heatmap_intensity(score: f64) -> u8 {
    let (lo, hi) = HEATMAP_WINDOW;
    if score < lo {
        0
    } else {
        (((score - lo) / (hi - lo)) * 255.0).round().clamp(0.0, 255.0) as u8
    }
}

/// Binary PGM (P5) with one pixel per `(i, j)` pair, rows of the image are `rows`.
pub fn write_heatmap_pgm(
    path: &Path,
    features: &[FeatureVector],
    rows: Range<usize>,
    cols: Range<usize>,
) -> Result<()> {
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::RangeOutOfBounds {
            start: rows.start.min(cols.start),
            end: rows.end.min(cols.end),
            len: features.len(),
        });
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    write!(out, "P5\n{} {}\n255\n", cols.len(), rows.len()).map_err(io)?;
    // one band of rows at a time keeps memory bounded
    const BAND: usize = 256;
    let mut start = rows.start;
    while start < rows.end {
        let end = (start + BAND).min(rows.end);
        let block = similarity_block(features, start..end, cols.clone())?;
        let pixels: Vec<u8> = block.scores.iter().map(|&s| heatmap_intensity(s)).collect();
        out.write_all(&pixels).map_err(io)?;
        start = end;
    }
    out.flush().map_err(io)
}
