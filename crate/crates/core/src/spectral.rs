//! Tube-wise DFT and the spectral fast path for the t-product.
//!
//! `bcirc(A)` is block-diagonalized by the DFT along tubes, so a t-product turns
//! into one independent complex matrix product per frequency. Inputs are real,
//! hence frequency `n - f` is the conjugate of frequency `f` and only the half
//! spectrum `f = 0..=n/2` is stored.
//!
//! Normalization: the forward transform is unnormalized and the inverse carries
//! `1/n`. [`parseval_norm`] depends on this convention.

use std::cell::RefCell;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::tensor::{Dims, Tensor3};

pub type CMatrix = DMatrix<Complex64>;

/// Relative tolerance on imaginary parts of the frequency-0 and Nyquist slices.
pub const REALITY_TOL: f64 = 1e-12;

/// Number of stored frequencies for depth `n`.
pub fn half_len(n: usize) -> usize {
    n / 2 + 1
}

/// Parseval weight of stored frequency `f`: 1 for DC and (even `n`) Nyquist, 2 otherwise.
pub fn parseval_weight(f: usize, n: usize) -> f64 {
    if f == 0 || (n.is_multiple_of(2) && f == n / 2) {
        1.0
    } else {
        2.0
    }
}

/// Whether frequency `f` must be real for a real tensor of depth `n`.
pub fn is_self_conjugate(f: usize, n: usize) -> bool {
    f == 0 || 2 * f == n
}

/// Half-spectrum representation of a real tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralTensor {
    dims: Dims,
    slices: Vec<CMatrix>,
}

impl SpectralTensor {
    /// Checks slice count and shapes; reality of DC/Nyquist is checked by [`idft_tubes`].
    pub fn from_slices(dims: Dims, slices: Vec<CMatrix>) -> Result<Self> {
        let dims = Dims::new(dims.ell, dims.m, dims.n)?;
        if slices.len() != half_len(dims.n) {
            return Err(Error::Shape(format!(
                "depth {} needs {} frequency slices, got {}",
                dims.n,
                half_len(dims.n),
                slices.len()
            )));
        }
        if let Some(f) = slices
            .iter()
            .position(|s| s.nrows() != dims.ell || s.ncols() != dims.m)
        {
            return Err(Error::Shape(format!(
                "frequency slice {f} is not {}x{}",
                dims.ell, dims.m
            )));
        }
        Ok(SpectralTensor { dims, slices })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn slices(&self) -> &[CMatrix] {
        &self.slices
    }

    pub fn slice(&self, f: usize) -> &CMatrix {
        &self.slices[f]
    }

    pub fn into_slices(self) -> Vec<CMatrix> {
        self.slices
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft(n, direction))
}

/// Tubes handed to one FFT batch.
const TUBE_BATCH: usize = 512;

/// Forward DFT of every tube; keeps frequencies `0..=n/2`.
pub fn dft_tubes(a: &Tensor3) -> SpectralTensor {
    let dims = a.dims();
    let (n, h) = (dims.n, half_len(dims.n));
    let size = dims.ell * dims.m;
    let data = a.data();
    // tube-major batches: tube t occupies buf[t*n..(t+1)*n]
    let batches: Vec<Vec<Complex64>> = (0..size.div_ceil(TUBE_BATCH))
        .into_par_iter()
        .map(|b| {
            let tubes = b * TUBE_BATCH..((b + 1) * TUBE_BATCH).min(size);
            let mut buf = Vec::with_capacity(tubes.len() * n);
            for t in tubes {
                buf.extend((0..n).map(|k| Complex64::new(data[k * size + t], 0.0)));
            }
            plan(n, FftDirection::Forward).process(&mut buf);
            buf
        })
        .collect();
    let slices = (0..h)
        .into_par_iter()
        .map(|f| {
            let entries = batches.iter().flat_map(|buf| buf.chunks_exact(n).map(|tube| tube[f]));
            CMatrix::from_iterator(dims.ell, dims.m, entries)
        })
        .collect();
    SpectralTensor { dims, slices }
}

fn check_reality(s: &SpectralTensor) -> Result<()> {
    let n = s.dims.n;
    let scale = s
        .slices
        .iter()
        .flat_map(|m| m.iter())
        .fold(0.0f64, |acc, z| acc.max(z.norm()));
    let tol = REALITY_TOL * scale;
    for (f, slice) in s.slices.iter().enumerate() {
        if !is_self_conjugate(f, n) {
            continue;
        }
        let worst = slice.iter().fold(0.0f64, |acc, z| acc.max(z.im.abs()));
        if worst > tol {
            return Err(Error::Integrity(format!(
                "frequency {f} has imaginary part {worst:e} (tolerance {tol:e})"
            )));
        }
    }
    Ok(())
}

/// Inverse DFT from the half spectrum.
///
/// Each tube's full spectrum is rebuilt with exact conjugate symmetry (the
/// self-conjugate frequencies keep only their real part), so the inverse is
/// real up to rounding and its imaginary residue is dropped.
pub fn idft_tubes(s: &SpectralTensor) -> Result<Tensor3> {
    check_reality(s)?;
    let dims = s.dims;
    let n = dims.n;
    let size = dims.ell * dims.m;
    let inv_n = 1.0 / n as f64;
    let batches: Vec<Vec<f64>> = (0..size.div_ceil(TUBE_BATCH))
        .into_par_iter()
        .map(|b| {
            let tubes = b * TUBE_BATCH..((b + 1) * TUBE_BATCH).min(size);
            let mut buf = vec![Complex64::new(0.0, 0.0); tubes.len() * n];
            for (tube, t) in buf.chunks_exact_mut(n).zip(tubes) {
                for (f, slice) in s.slices.iter().enumerate() {
                    let z = slice[t];
                    if is_self_conjugate(f, n) {
                        tube[f] = Complex64::new(z.re, 0.0);
                    } else {
                        tube[f] = z;
                        tube[n - f] = z.conj();
                    }
                }
            }
            plan(n, FftDirection::Inverse).process(&mut buf);
            buf.iter().map(|z| z.re * inv_n).collect()
        })
        .collect();
    let mut data = vec![0.0; dims.len()];
    for (b, buf) in batches.iter().enumerate() {
        for (i, tube) in buf.chunks_exact(n).enumerate() {
            let t = b * TUBE_BATCH + i;
            for (k, &x) in tube.iter().enumerate() {
                data[k * size + t] = x;
            }
        }
    }
    Tensor3::from_vec(dims, data)
}

/// t-product computed as one complex matrix product per stored frequency.
pub fn tprod_fast(a: &Tensor3, b: &Tensor3) -> Result<Tensor3> {
    let (da, db) = (a.dims(), b.dims());
    if da.m != db.ell || da.n != db.n {
        return Err(Error::DimensionMismatch(format!(
            "t-product of {da} and {db}"
        )));
    }
    let (sa, sb) = (dft_tubes(a), dft_tubes(b));
    let slices = sa
        .slices
        .par_iter()
        .zip(sb.slices.par_iter())
        .map(|(x, y)| x * y)
        .collect();
    let dims = Dims::new(da.ell, db.m, da.n)?;
    idft_tubes(&SpectralTensor::from_slices(dims, slices)?)
}

/// Frobenius norm of the real tensor represented by `s`, without inverting.
pub fn parseval_norm(s: &SpectralTensor) -> f64 {
    let n = s.dims.n;
    let total: f64 = s
        .slices
        .iter()
        .enumerate()
        .map(|(f, m)| parseval_weight(f, n) * m.iter().map(|z| z.norm_sqr()).sum::<f64>())
        .sum();
    (total / n as f64).sqrt()
}
