//! t-product tensor algebra, tensor SVD, and local tSVD classification of
//! images stored as lateral slices of third-order tensors.

pub mod classifier;
pub mod container;
pub mod error;
pub mod identification;
pub mod mnist;
pub mod parallel;
pub mod spectral;
pub mod tensor;
pub mod tsvd;

pub use error::{Error, IdxError, Result};
pub use parallel::Parallelism;
pub use spectral::{dft_tubes, idft_tubes, parseval_norm, tprod_fast, SpectralTensor};
pub use tensor::{
    bcirc, fold, frob_norm, identity_tensor, is_f_diagonal, tprod_reference, ttranspose, unfold,
    BlockMatrix, Dims, Tensor3,
};
pub use tsvd::{
    project_residual, truncate, tsvd, tsvd_with, tube_spectrum, SpectralBasis, TsvdFactors,
    TubeSpectrum,
};
