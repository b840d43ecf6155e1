//! Tensor SVD under the t-product, tubal-rank truncation and projection residuals.
//!
//! `A = U * S * V^T` is computed one frequency at a time: every stored slice of
//! the half spectrum gets an economy SVD `A_f = U_f S_f V_f^H`, and the factors
//! are brought back with the inverse tube DFT. Frequency 0 and (for even `n`)
//! the Nyquist slice are real matrices and are decomposed in real arithmetic so
//! their factors stay real; the remaining slices are decomposed as complex
//! matrices and their conjugate partners are implied.
//!
//! Because the frequency slices are independent, they are farmed out to the
//! current rayon pool (see [`Parallelism`]).

use nalgebra::{DMatrix, SVD};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::parallel::Parallelism;
use crate::spectral::{
    dft_tubes, idft_tubes, is_self_conjugate, parseval_weight, CMatrix, SpectralTensor,
};
use crate::tensor::{Dims, Tensor3};

/// Relative tolerance for reconstruction, orthonormality and f-diagonality checks.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Iteration cap handed to the per-slice SVD; hitting it is reported as a failure.
const SVD_MAX_ITER: usize = 100_000;

/// Factors of `A = U * S * V^T`.
///
/// `u` is `ell x r x n`, `s` is `r x r x n` f-diagonal, `v` is `m x r x n`, where
/// `r = min(ell, m)` for a full decomposition or the truncation level after
/// [`truncate`].
#[derive(Debug, Clone)]
pub struct TsvdFactors {
    u: Tensor3,
    s: Tensor3,
    v: Tensor3,
    /// Per stored frequency, the descending singular values of that slice.
    sigma: Vec<Vec<f64>>,
}

impl PartialEq for TsvdFactors {
    fn eq(&self, other: &Self) -> bool {
        self.u == other.u && self.s == other.s && self.v == other.v
    }
}

impl TsvdFactors {
    /// Reassembles factors from stored tensors, recovering per-slice singular
    /// values from the spectrum of the diagonal tubes of `s`.
    pub fn from_parts(u: Tensor3, s: Tensor3, v: Tensor3) -> Result<Self> {
        let (du, ds, dv) = (u.dims(), s.dims(), v.dims());
        let r = du.m;
        if ds.ell != r || ds.m != r || dv.m != r || ds.n != du.n || dv.n != du.n {
            return Err(Error::DimensionMismatch(format!(
                "factors U {du}, S {ds}, V {dv} are not conformable"
            )));
        }
        let spec = dft_tubes(&s);
        let sigma = spec
            .slices()
            .iter()
            .map(|m| {
                let mut d: Vec<f64> = (0..r).map(|i| m[(i, i)].norm()).collect();
                d.sort_by(|a, b| b.total_cmp(a));
                d
            })
            .collect();
        Ok(TsvdFactors { u, s, v, sigma })
    }

    pub fn u(&self) -> &Tensor3 {
        &self.u
    }

    pub fn s(&self) -> &Tensor3 {
        &self.s
    }

    pub fn v(&self) -> &Tensor3 {
        &self.v
    }

    pub fn into_u(self) -> Tensor3 {
        self.u
    }

    /// Number of singular tubes kept.
    pub fn rank(&self) -> usize {
        self.u.dims().m
    }

    /// Singular values of stored frequency slice `f`, descending.
    pub fn slice_singular_values(&self, f: usize) -> &[f64] {
        &self.sigma[f]
    }

    /// `U * S * V^T`, evaluated in the spectral domain.
    pub fn reconstruct(&self) -> Result<Tensor3> {
        let (su, ss, sv) = (dft_tubes(&self.u), dft_tubes(&self.s), dft_tubes(&self.v));
        let slices: Vec<CMatrix> = (0..su.slices().len())
            .into_par_iter()
            .map(|f| (su.slice(f) * ss.slice(f)) * sv.slice(f).adjoint())
            .collect();
        let du = self.u.dims();
        let dims = Dims::new(du.ell, self.v.dims().ell, du.n)?;
        idft_tubes(&SpectralTensor::from_slices(dims, slices)?)
    }
}

struct SliceSvd {
    u: CMatrix,
    sigma: Vec<f64>,
    v: CMatrix,
}

fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

fn slice_svd(mat: &CMatrix, real: bool, f: usize, want_v: bool) -> Result<SliceSvd> {
    if real {
        let re = mat.map(|z| z.re);
        let svd = SVD::try_new(re, true, want_v, f64::EPSILON, SVD_MAX_ITER)
            .ok_or(Error::Decomposition { slice: f })?;
        let u = svd.u.as_ref().map(to_complex).ok_or(Error::Decomposition { slice: f })?;
        let v = match &svd.v_t {
            Some(vt) => to_complex(&vt.transpose()),
            None => CMatrix::zeros(0, 0),
        };
        Ok(SliceSvd {
            u,
            sigma: svd.singular_values.iter().copied().collect(),
            v,
        })
    } else {
        let svd = SVD::try_new(mat.clone(), true, want_v, f64::EPSILON, SVD_MAX_ITER)
            .ok_or(Error::Decomposition { slice: f })?;
        let u = svd.u.ok_or(Error::Decomposition { slice: f })?;
        let v = svd.v_t.map(|vt| vt.adjoint()).unwrap_or_else(|| CMatrix::zeros(0, 0));
        Ok(SliceSvd {
            u,
            sigma: svd.singular_values.iter().copied().collect(),
            v,
        })
    }
}

fn slice_svds(spec: &SpectralTensor, want_v: bool) -> Result<Vec<SliceSvd>> {
    let n = spec.dims().n;
    spec.slices()
        .par_iter()
        .enumerate()
        .map(|(f, m)| slice_svd(m, is_self_conjugate(f, n), f, want_v))
        .collect()
}

fn assemble(dims: Dims, parts: Vec<CMatrix>) -> Result<Tensor3> {
    idft_tubes(&SpectralTensor::from_slices(dims, parts)?)
}

fn diag_spectrum(sigma: &[Vec<f64>], r: usize) -> Vec<CMatrix> {
    sigma
        .iter()
        .map(|s| CMatrix::from_fn(r, r, |i, j| if i == j { Complex64::new(s[i], 0.0) } else { Complex64::new(0.0, 0.0) }))
        .collect()
}

/// Full economy tSVD using the current rayon pool.
pub fn tsvd(a: &Tensor3) -> Result<TsvdFactors> {
    let Dims { ell, m, n } = a.dims();
    let p = ell.min(m);
    let spec = dft_tubes(a);
    let parts = slice_svds(&spec, true)?;
    drop(spec);
    let sigma: Vec<Vec<f64>> = parts.iter().map(|s| s.sigma.clone()).collect();
    let (us, vs): (Vec<_>, Vec<_>) = parts.into_iter().map(|s| (s.u, s.v)).unzip();
    let u = assemble(Dims::new(ell, p, n)?, us)?;
    let v = assemble(Dims::new(m, p, n)?, vs)?;
    let s = assemble(Dims::new(p, p, n)?, diag_spectrum(&sigma, p))?;
    Ok(TsvdFactors { u, s, v, sigma })
}

/// [`tsvd`] on a dedicated pool of the given size.
pub fn tsvd_with(a: &Tensor3, par: Parallelism) -> Result<TsvdFactors> {
    par.install(|| tsvd(a))
}

/// Left factor and tube spectrum only; skips the right singular vectors.
///
/// Used for training, where `S` and `V` are discarded anyway. Equivalent to
/// `truncate(tsvd(a), k).u()` together with `tube_spectrum(tsvd(a))`.
pub fn left_factor(a: &Tensor3, k: usize) -> Result<(Tensor3, TubeSpectrum)> {
    let Dims { ell, m, n } = a.dims();
    let p = ell.min(m);
    if k == 0 || k > p {
        return Err(Error::RankOutOfRange { k, max: p });
    }
    let spec = dft_tubes(a);
    let parts = slice_svds(&spec, false)?;
    drop(spec);
    let sigma: Vec<Vec<f64>> = parts.iter().map(|s| s.sigma.clone()).collect();
    let us = parts
        .into_iter()
        .map(|s| s.u.columns(0, k).into_owned())
        .collect();
    let u = assemble(Dims::new(ell, k, n)?, us)?;
    Ok((u, TubeSpectrum::from_sigma(&sigma, n)))
}

/// Keeps the leading `k` singular tubes: the best tubal-rank-`k` approximation.
pub fn truncate(f: &TsvdFactors, k: usize) -> Result<TsvdFactors> {
    let r = f.rank();
    if k == 0 || k > r {
        return Err(Error::RankOutOfRange { k, max: r });
    }
    let n = f.s.dims().n;
    Ok(TsvdFactors {
        u: f.u.leading_lateral_slices(k)?,
        s: Tensor3::from_fn(k, k, n, |i, j, t| f.s.get(i, j, t))?,
        v: f.v.leading_lateral_slices(k)?,
        sigma: f.sigma.iter().map(|s| s[..k].to_vec()).collect(),
    })
}

/// Frobenius norms of the singular tubes `s_ii`.
#[derive(Debug, Clone, PartialEq)]
pub struct TubeSpectrum {
    norms: Vec<f64>,
}

impl TubeSpectrum {
    /// Norms via Parseval from per-frequency singular values. Each frequency's
    /// sequence is descending and the weights are shared, so the result is
    /// non-increasing exactly, not just up to rounding.
    fn from_sigma(sigma: &[Vec<f64>], n: usize) -> Self {
        let r = sigma.first().map_or(0, Vec::len);
        let norms = (0..r)
            .map(|i| {
                let total: f64 = sigma
                    .iter()
                    .enumerate()
                    .map(|(f, s)| parseval_weight(f, n) * s[i] * s[i])
                    .sum();
                (total / n as f64).sqrt()
            })
            .collect();
        TubeSpectrum { norms }
    }

    pub fn from_norms(norms: Vec<f64>) -> Result<Self> {
        if norms.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Integrity("tube norms must be finite and nonnegative".into()));
        }
        if norms.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Integrity("tube norms are not non-increasing".into()));
        }
        Ok(TubeSpectrum { norms })
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn is_non_increasing(&self) -> bool {
        self.norms.windows(2).all(|w| w[1] <= w[0])
    }

    /// Mean of `norms[i + 1] / norms[i]` over `i in range`.
    pub fn mean_decay_ratio(&self, range: std::ops::Range<usize>) -> Option<f64> {
        if range.is_empty() || range.end >= self.norms.len() {
            return None;
        }
        let count = range.len() as f64;
        let sum: f64 = range.map(|i| self.norms[i + 1] / self.norms[i]).sum();
        Some(sum / count)
    }
}

pub fn tube_spectrum(f: &TsvdFactors) -> TubeSpectrum {
    TubeSpectrum::from_sigma(&f.sigma, f.s.dims().n)
}

/// An `ell x k x n` tensor with orthonormal lateral slices, kept in spectral form.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    spectrum: SpectralTensor,
}

impl SpectralBasis {
    /// Transforms `u`; call [`SpectralBasis::orthonormality_residual`] to validate.
    pub fn new(u: &Tensor3) -> Self {
        SpectralBasis {
            spectrum: dft_tubes(u),
        }
    }

    pub fn from_spectrum(spectrum: SpectralTensor) -> Self {
        SpectralBasis { spectrum }
    }

    pub fn spectrum(&self) -> &SpectralTensor {
        &self.spectrum
    }

    pub fn dims(&self) -> Dims {
        self.spectrum.dims()
    }

    /// `||U^T * U - J||_F`, computed frequency-wise through Parseval.
    pub fn orthonormality_residual(&self) -> f64 {
        let Dims { m: k, n, .. } = self.dims();
        let eye = CMatrix::identity(k, k);
        let total: f64 = self
            .spectrum
            .slices()
            .iter()
            .enumerate()
            .map(|(f, u)| {
                let gram = u.ad_mul(u) - &eye;
                parseval_weight(f, n) * gram.iter().map(|z| z.norm_sqr()).sum::<f64>()
            })
            .sum();
        (total / n as f64).sqrt()
    }

    /// `||b - U * U^T * b||_F` for a lateral slice already in spectral form.
    pub fn residual(&self, b: &SpectralTensor) -> Result<f64> {
        let du = self.dims();
        let db = b.dims();
        if db.ell != du.ell || db.m != 1 || db.n != du.n {
            return Err(Error::DimensionMismatch(format!(
                "lateral slice {db} against basis {du}"
            )));
        }
        Ok(self.residual_unchecked(b))
    }

    pub(crate) fn residual_unchecked(&self, b: &SpectralTensor) -> f64 {
        let n = self.dims().n;
        let total: f64 = self
            .spectrum
            .slices()
            .iter()
            .zip(b.slices())
            .enumerate()
            .map(|(f, (u, bf))| {
                let coef = u.ad_mul(bf);
                let r = bf - u * coef;
                parseval_weight(f, n) * r.iter().map(|z| z.norm_sqr()).sum::<f64>()
            })
            .sum();
        (total / n as f64).sqrt()
    }
}

/// `||b - u * u^T * b||_F` for `u` with orthonormal lateral slices, computed spectrally.
pub fn project_residual(u: &Tensor3, b: &Tensor3) -> Result<f64> {
    let (du, db) = (u.dims(), b.dims());
    if db.ell != du.ell || db.m != 1 || db.n != du.n {
        return Err(Error::DimensionMismatch(format!(
            "lateral slice {db} against basis {du}"
        )));
    }
    SpectralBasis::new(u).residual(&dft_tubes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{frob_norm, identity_tensor, is_f_diagonal, tprod_reference, ttranspose};

    fn sample(ell: usize, m: usize, n: usize, seed: u64) -> Tensor3 {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        Tensor3::from_fn(ell, m, n, |_, _, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
        .unwrap()
    }

    #[test]
    fn depth_one_matches_matrix_svd() {
        let a = sample(5, 3, 1, 1);
        let f = tsvd(&a).unwrap();
        let mat = DMatrix::from_column_slice(5, 3, a.frontal_slice(0));
        let sv = mat.singular_values();
        for (i, s) in f.slice_singular_values(0).iter().enumerate() {
            assert!((s - sv[i]).abs() < 1e-12);
            assert!((tube_spectrum(&f).norms()[i] - sv[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_has_unit_tubes() {
        let f = tsvd(&identity_tensor(4, 5).unwrap()).unwrap();
        let norms = tube_spectrum(&f).norms().to_vec();
        assert_eq!(norms.len(), 4);
        for x in norms {
            assert!((x - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn random_tensor_reconstructs() {
        for (ell, m, n) in [(10, 7, 6), (3, 8, 5), (6, 6, 1), (1, 4, 4)] {
            let a = sample(ell, m, n, (ell * 100 + m * 10 + n) as u64);
            let f = tsvd(&a).unwrap();
            let err = frob_norm(&f.reconstruct().unwrap().sub(&a).unwrap());
            assert!(err <= DEFAULT_TOL * frob_norm(&a), "{ell}x{m}x{n}: {err}");
            let utu = tprod_reference(&ttranspose(f.u()), f.u()).unwrap();
            let p = ell.min(m);
            let gap = frob_norm(&utu.sub(&identity_tensor(p, n).unwrap()).unwrap());
            assert!(gap <= DEFAULT_TOL);
            assert!(is_f_diagonal(f.s(), DEFAULT_TOL * frob_norm(f.s())));
            assert!(tube_spectrum(&f).is_non_increasing());
        }
    }

    #[test]
    fn tube_norms_match_s_tubes() {
        let f = tsvd(&sample(6, 4, 7, 3)).unwrap();
        for (i, &x) in tube_spectrum(&f).norms().iter().enumerate() {
            let tube: f64 = f.s().tube(i, i).iter().map(|t| t * t).sum::<f64>().sqrt();
            assert!((tube - x).abs() <= 1e-12 * x.max(1.0));
        }
    }

    #[test]
    fn truncation_bounds() {
        let f = tsvd(&sample(6, 5, 4, 9)).unwrap();
        assert!(matches!(truncate(&f, 0), Err(Error::RankOutOfRange { .. })));
        assert!(matches!(truncate(&f, 6), Err(Error::RankOutOfRange { .. })));
        let same = truncate(&f, 5).unwrap();
        assert_eq!(same, f);
        let two = truncate(&f, 2).unwrap();
        assert_eq!(two.u().dims(), Dims::new(6, 2, 4).unwrap());
        assert_eq!(two.s().dims(), Dims::new(2, 2, 4).unwrap());
        assert_eq!(two.v().dims(), Dims::new(5, 2, 4).unwrap());
    }

    #[test]
    fn rank_one_slices_have_one_tube() {
        let x = [1.0, -2.0, 0.5];
        let y = [3.0, 1.0, -1.0, 2.0];
        let a = Tensor3::from_fn(3, 4, 5, |i, j, _| x[i] * y[j]).unwrap();
        let norms = tube_spectrum(&tsvd(&a).unwrap()).norms().to_vec();
        assert!(norms[0] > 0.0);
        for &v in &norms[1..] {
            assert!(v <= 1e-10 * norms[0]);
        }
    }

    #[test]
    fn left_factor_agrees_with_full() {
        let a = sample(7, 12, 6, 5);
        let full = tsvd(&a).unwrap();
        let (u, spec) = left_factor(&a, 3).unwrap();
        for (x, y) in spec.norms().iter().zip(tube_spectrum(&full).norms()) {
            assert!((x - y).abs() <= 1e-12 * y);
        }
        // same subspace: residuals of random slices agree
        let uf = truncate(&full, 3).unwrap().into_u();
        for seed in 0..5 {
            let b = sample(7, 1, 6, 100 + seed);
            let r1 = project_residual(&u, &b).unwrap();
            let r2 = project_residual(&uf, &b).unwrap();
            assert!((r1 - r2).abs() <= 1e-10 * frob_norm(&b));
        }
        assert!(left_factor(&a, 8).is_err());
    }

    #[test]
    fn residual_in_and_out_of_range() {
        let f = tsvd(&sample(6, 6, 5, 11)).unwrap();
        let u = truncate(&f, 3).unwrap().into_u();
        let inside = u.lateral_slice(0);
        assert!(project_residual(&u, &inside).unwrap() <= 1e-10 * frob_norm(&inside));
        let outside = f.u().lateral_slice(3);
        let r = project_residual(&u, &outside).unwrap();
        assert!((r - frob_norm(&outside)).abs() <= 1e-10);
        assert!(project_residual(&u, &sample(5, 1, 5, 1)).is_err());
        assert!(project_residual(&u, &sample(6, 2, 5, 1)).is_err());
    }

    #[test]
    fn decay_ratio_windows() {
        let s = TubeSpectrum::from_norms(vec![8.0, 4.0, 2.0, 1.5]).unwrap();
        assert_eq!(s.mean_decay_ratio(0..2), Some(0.5));
        assert_eq!(s.mean_decay_ratio(0..3), Some((0.5 + 0.5 + 0.75) / 3.0));
        assert_eq!(s.mean_decay_ratio(2..4), None);
        assert!(TubeSpectrum::from_norms(vec![1.0, 2.0]).is_err());
    }
}
