//! Dense third-order tensors and the reference (non-spectral) t-product algebra.
//!
//! A [`Tensor3`] of shape `ell x m x n` stores its entries frontal-slice-major:
//! entry `(i, j, k)` lives at offset `(k * m + j) * ell + i`. Each frontal slice
//! is therefore a contiguous column-major `ell x m` matrix, while lateral slices
//! (`ell x 1 x n`, the image orientation used throughout the crate) and tubes
//! (`1 x 1 x n`) are strided views.
//!
//! The functions here materialize `bcirc` densely and are meant as ground truth
//! for the spectral fast path in [`crate::spectral`], not for production use.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Largest `n * max(dim)` accepted by [`tprod_reference`].
pub const REFERENCE_LIMIT: usize = 4096;

/// Shape of a third-order tensor: `ell` rows, `m` columns, `n` frontal slices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub ell: usize,
    pub m: usize,
    pub n: usize,
}

impl Dims {
    pub fn new(ell: usize, m: usize, n: usize) -> Result<Self> {
        if ell == 0 || m == 0 || n == 0 {
            return Err(Error::Shape(format!(
                "dimensions must be positive, got {ell}x{m}x{n}"
            )));
        }
        Ok(Dims { ell, m, n })
    }

    pub fn len(&self) -> usize {
        self.ell * self.m * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.m + j) * self.ell + i
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.ell, self.m, self.n)
    }
}

/// Dense real `ell x m x n` tensor. Immutable once built; every entry is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: Dims,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(ell: usize, m: usize, n: usize) -> Result<Self> {
        let dims = Dims::new(ell, m, n)?;
        Ok(Tensor3 {
            dims,
            data: vec![0.0; dims.len()],
        })
    }

    /// Wraps `data` laid out frontal-slice-major.
    pub fn from_vec(dims: Dims, data: Vec<f64>) -> Result<Self> {
        let dims = Dims::new(dims.ell, dims.m, dims.n)?;
        if data.len() != dims.len() {
            return Err(Error::Shape(format!(
                "{dims} tensor needs {} entries, got {}",
                dims.len(),
                data.len()
            )));
        }
        if let Some(offset) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { offset });
        }
        Ok(Tensor3 { dims, data })
    }

    /// Builds a tensor by evaluating `f(i, j, k)` at every index.
    pub fn from_fn(
        ell: usize,
        m: usize,
        n: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let dims = Dims::new(ell, m, n)?;
        let mut data = Vec::with_capacity(dims.len());
        for k in 0..n {
            for j in 0..m {
                for i in 0..ell {
                    data.push(f(i, j, k));
                }
            }
        }
        Self::from_vec(dims, data)
    }

    /// Builds a tensor from its frontal slices, each column-major `ell x m`.
    pub fn from_frontal_slices(ell: usize, m: usize, slices: &[Vec<f64>]) -> Result<Self> {
        let dims = Dims::new(ell, m, slices.len())?;
        let mut data = Vec::with_capacity(dims.len());
        for (k, s) in slices.iter().enumerate() {
            if s.len() != ell * m {
                return Err(Error::Shape(format!(
                    "frontal slice {k} has {} entries, expected {}",
                    s.len(),
                    ell * m
                )));
            }
            data.extend_from_slice(s);
        }
        Self::from_vec(dims, data)
    }

    /// Stacks `ell x 1 x n` lateral slices side by side into an `ell x count x n` tensor.
    pub fn from_lateral_slices(slices: &[Tensor3]) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::Shape("no lateral slices given".into()))?;
        let (ell, n) = (first.dims.ell, first.dims.n);
        for s in slices {
            if s.dims.ell != ell || s.dims.m != 1 || s.dims.n != n {
                return Err(Error::DimensionMismatch(format!(
                    "lateral slice {} does not match {ell}x1x{n}",
                    s.dims
                )));
            }
        }
        let m = slices.len();
        Self::from_fn(ell, m, n, |i, j, k| slices[j].get(i, 0, k))
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.dims.offset(i, j, k)]
    }

    /// Frontal slice `k` as a contiguous column-major `ell x m` matrix.
    pub fn frontal_slice(&self, k: usize) -> &[f64] {
        let size = self.dims.ell * self.dims.m;
        &self.data[k * size..(k + 1) * size]
    }

    /// Lateral slice `j` as an `ell x 1 x n` tensor.
    pub fn lateral_slice(&self, j: usize) -> Tensor3 {
        let Dims { ell, n, .. } = self.dims;
        let mut data = Vec::with_capacity(ell * n);
        for k in 0..n {
            let start = self.dims.offset(0, j, k);
            data.extend_from_slice(&self.data[start..start + ell]);
        }
        Tensor3 {
            dims: Dims { ell, m: 1, n },
            data,
        }
    }

    /// Lateral slices `0..count` as an `ell x count x n` tensor.
    pub fn leading_lateral_slices(&self, count: usize) -> Result<Tensor3> {
        if count == 0 || count > self.dims.m {
            return Err(Error::RankOutOfRange {
                k: count,
                max: self.dims.m,
            });
        }
        Tensor3::from_fn(self.dims.ell, count, self.dims.n, |i, j, k| self.get(i, j, k))
    }

    pub fn tube(&self, i: usize, j: usize) -> Vec<f64> {
        (0..self.dims.n).map(|k| self.get(i, j, k)).collect()
    }

    pub fn scale(&self, c: f64) -> Result<Tensor3> {
        Tensor3::from_vec(self.dims, self.data.iter().map(|x| x * c).collect())
    }

    pub fn sub(&self, other: &Tensor3) -> Result<Tensor3> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Tensor3) -> Result<Tensor3> {
        self.zip_with(other, |a, b| a + b)
    }

    fn zip_with(&self, other: &Tensor3, f: impl Fn(f64, f64) -> f64) -> Result<Tensor3> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch(format!(
                "{} vs {}",
                self.dims, other.dims
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Tensor3::from_vec(self.dims, data)
    }

    /// Debug dump: one frontal slice per block, rows as CSV lines, blocks separated by a blank line.
    pub fn to_csv_slices(&self) -> String {
        let Dims { ell, m, n } = self.dims;
        let mut out = String::new();
        for k in 0..n {
            if k > 0 {
                out.push('\n');
            }
            for i in 0..ell {
                for j in 0..m {
                    if j > 0 {
                        out.push(',');
                    }
                    let _ = write!(out, "{}", self.get(i, j, k));
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Dense real matrix, column-major. Holds `unfold` and `bcirc` results.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl BlockMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        BlockMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || rows * cols != data.len() {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix cannot hold {} entries",
                data.len()
            )));
        }
        Ok(BlockMatrix { rows, cols, data })
    }

    /// Builds from nested rows; convenient for literals in tests.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape("ragged rows".into()));
        }
        let mut data = vec![0.0; r * c];
        for (i, row) in rows.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                data[j * r + i] = x;
            }
        }
        Self::from_col_major(r, c, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[c * self.rows + r]
    }

    #[inline]
    fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[c * self.rows + r] = v;
    }

    pub fn matmul(&self, other: &BlockMatrix) -> Result<BlockMatrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = BlockMatrix::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            let dst = &mut out.data[j * self.rows..(j + 1) * self.rows];
            for p in 0..self.cols {
                let b = other.get(p, j);
                if b == 0.0 {
                    continue;
                }
                let src = &self.data[p * self.rows..(p + 1) * self.rows];
                for (d, &a) in dst.iter_mut().zip(src) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }
}

/// Stacks the frontal slices into an `ell*n x m` block column.
pub fn unfold(a: &Tensor3) -> BlockMatrix {
    let Dims { ell, m, n } = a.dims();
    let mut out = BlockMatrix::zeros(ell * n, m);
    for k in 0..n {
        for j in 0..m {
            for i in 0..ell {
                out.set(k * ell + i, j, a.get(i, j, k));
            }
        }
    }
    out
}

/// Inverse of [`unfold`].
pub fn fold(mtx: &BlockMatrix, dims: Dims) -> Result<Tensor3> {
    let dims = Dims::new(dims.ell, dims.m, dims.n)?;
    if mtx.rows != dims.ell * dims.n || mtx.cols != dims.m {
        return Err(Error::DimensionMismatch(format!(
            "cannot fold {}x{} matrix into {dims}",
            mtx.rows, mtx.cols
        )));
    }
    Tensor3::from_fn(dims.ell, dims.m, dims.n, |i, j, k| {
        mtx.get(k * dims.ell + i, j)
    })
}

/// Block-circulant `ell*n x m*n` matrix whose block `(r, c)` is frontal slice `(r - c) mod n`.
pub fn bcirc(a: &Tensor3) -> BlockMatrix {
    let Dims { ell, m, n } = a.dims();
    let mut out = BlockMatrix::zeros(ell * n, m * n);
    for r in 0..n {
        for c in 0..n {
            let k = (r + n - c) % n;
            for j in 0..m {
                for i in 0..ell {
                    out.set(r * ell + i, c * m + j, a.get(i, j, k));
                }
            }
        }
    }
    out
}

/// t-product `fold(bcirc(a) * unfold(b))` by dense multiplication.
///
/// Costs `O(ell * p * m * n^2)` and materializes `bcirc(a)`; refuses inputs with
/// `n * max(ell, p, m) > REFERENCE_LIMIT`.
pub fn tprod_reference(a: &Tensor3, b: &Tensor3) -> Result<Tensor3> {
    let (da, db) = (a.dims(), b.dims());
    if da.m != db.ell || da.n != db.n {
        return Err(Error::DimensionMismatch(format!(
            "t-product of {da} and {db}"
        )));
    }
    let size = da.n * da.ell.max(da.m).max(db.m);
    if size > REFERENCE_LIMIT {
        return Err(Error::TooLargeForReference {
            size,
            limit: REFERENCE_LIMIT,
        });
    }
    let product = bcirc(a).matmul(&unfold(b))?;
    fold(&product, Dims::new(da.ell, db.m, da.n)?)
}

/// Tensor transpose: transposes every frontal slice and reverses slices `1..n`.
pub fn ttranspose(a: &Tensor3) -> Tensor3 {
    let Dims { ell, m, n } = a.dims();
    Tensor3::from_fn(m, ell, n, |i, j, k| a.get(j, i, (n - k) % n))
        .expect("transpose of a valid tensor is valid")
}

/// `m x m x n` identity: first frontal slice is the identity matrix, the rest zero.
pub fn identity_tensor(m: usize, n: usize) -> Result<Tensor3> {
    Tensor3::from_fn(m, m, n, |i, j, k| {
        if k == 0 && i == j {
            1.0
        } else {
            0.0
        }
    })
}

pub fn frob_norm(a: &Tensor3) -> f64 {
    a.data().iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// True when every off-diagonal entry of every frontal slice is at most `tol` in magnitude.
pub fn is_f_diagonal(a: &Tensor3, tol: f64) -> bool {
    let Dims { ell, m, n } = a.dims();
    (0..n).all(|k| {
        (0..m).all(|j| (0..ell).all(|i| i == j || a.get(i, j, k).abs() <= tol))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two_by_two() -> Tensor3 {
        // A1 = [[1,2],[3,4]], A2 = [[5,6],[7,8]], column-major per slice
        Tensor3::from_frontal_slices(2, 2, &[vec![1., 3., 2., 4.], vec![5., 7., 6., 8.]]).unwrap()
    }

    fn ramp(ell: usize, m: usize, n: usize) -> Tensor3 {
        Tensor3::from_fn(ell, m, n, |i, j, k| {
            ((i * 7 + j * 13 + k * 29) % 17) as f64 - 8.0
        })
        .unwrap()
    }

    #[test]
    fn constructors_reject_bad_input() {
        assert!(Tensor3::zeros(0, 1, 1).is_err());
        let dims = Dims::new(1, 1, 2).unwrap();
        assert!(Tensor3::from_vec(dims, vec![1.0]).is_err());
        assert!(matches!(
            Tensor3::from_vec(dims, vec![1.0, f64::NAN]),
            Err(Error::NonFinite { offset: 1 })
        ));
        assert!(Tensor3::from_vec(dims, vec![f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn layout_is_frontal_slice_major() {
        let a = ramp(3, 4, 5);
        let d = a.dims();
        assert_eq!(a.data()[d.offset(2, 3, 4)], a.get(2, 3, 4));
        assert_eq!(d.offset(1, 2, 3), (3 * 4 + 2) * 3 + 1);
        assert_eq!(a.frontal_slice(2)[1 + 3 * 3], a.get(1, 3, 2));
    }

    #[test]
    fn unfold_stacks_frontal_slices() {
        let m = unfold(&two_by_two_by_two());
        let expected =
            BlockMatrix::from_rows(&[vec![1., 2.], vec![3., 4.], vec![5., 6.], vec![7., 8.]])
                .unwrap();
        assert_eq!(m, expected);
    }

    #[test]
    fn unfold_depth_one_is_the_slice() {
        let a = ramp(3, 2, 1);
        let u = unfold(&a);
        assert_eq!(u.data(), a.frontal_slice(0));
    }

    #[test]
    fn fold_inverts_unfold() {
        let a = two_by_two_by_two();
        let back = fold(&unfold(&a), a.dims()).unwrap();
        assert_eq!(back, a);
        let b = ramp(28, 1, 28);
        assert_eq!(fold(&unfold(&b), b.dims()).unwrap(), b);
    }

    #[test]
    fn fold_rejects_mismatch() {
        let m = BlockMatrix::zeros(5, 2);
        let err = fold(&m, Dims::new(2, 2, 2).unwrap()).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    #[test]
    fn bcirc_two_slices() {
        let b = bcirc(&two_by_two_by_two());
        let expected = BlockMatrix::from_rows(&[
            vec![1., 2., 5., 6.],
            vec![3., 4., 7., 8.],
            vec![5., 6., 1., 2.],
            vec![7., 8., 3., 4.],
        ])
        .unwrap();
        assert_eq!(b, expected);
    }

    #[test]
    fn bcirc_depth_one_is_the_slice() {
        let a = ramp(2, 3, 1);
        assert_eq!(bcirc(&a).data(), a.frontal_slice(0));
    }

    #[test]
    fn bcirc_block_columns_shift_down() {
        let a = ramp(2, 3, 3);
        let (ell, m, n) = (2, 3, 3);
        let b = bcirc(&a);
        let u = unfold(&a);
        for r in 0..ell * n {
            for j in 0..m {
                assert_eq!(b.get(r, j), u.get(r, j));
            }
        }
        for c in 1..n {
            for r in 0..ell * n {
                let src = (r + ell * n - ell) % (ell * n);
                for j in 0..m {
                    assert_eq!(b.get(r, c * m + j), b.get(src, (c - 1) * m + j));
                }
            }
        }
    }

    #[test]
    fn tube_product_is_circular_convolution() {
        let a = Tensor3::from_vec(Dims::new(1, 1, 2).unwrap(), vec![2.0, 3.0]).unwrap();
        let b = Tensor3::from_vec(Dims::new(1, 1, 2).unwrap(), vec![5.0, 7.0]).unwrap();
        let c = tprod_reference(&a, &b).unwrap();
        assert_eq!(c.data(), &[2.0 * 5.0 + 3.0 * 7.0, 3.0 * 5.0 + 2.0 * 7.0]);
    }

    #[test]
    fn identity_is_neutral() {
        let b = ramp(3, 4, 5);
        let left = tprod_reference(&identity_tensor(3, 5).unwrap(), &b).unwrap();
        let right = tprod_reference(&b, &identity_tensor(4, 5).unwrap()).unwrap();
        assert_eq!(left, b);
        assert_eq!(right, b);
    }

    #[test]
    fn reference_product_checks_shapes_and_size() {
        let a = ramp(2, 3, 4);
        assert!(matches!(
            tprod_reference(&a, &ramp(2, 2, 4)),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            tprod_reference(&a, &ramp(3, 2, 5)),
            Err(Error::DimensionMismatch(_))
        ));
        let big = Tensor3::zeros(100, 1, 50).unwrap();
        let tube = Tensor3::zeros(1, 1, 50).unwrap();
        assert!(matches!(
            tprod_reference(&big, &tube),
            Err(Error::TooLargeForReference { .. })
        ));
    }

    #[test]
    fn transpose_reverses_trailing_slices() {
        let a = ramp(3, 4, 5);
        let t = ttranspose(&a);
        assert_eq!(t.dims(), Dims::new(4, 3, 5).unwrap());
        assert_eq!(t.get(1, 2, 0), a.get(2, 1, 0));
        for k in 1..5 {
            assert_eq!(t.get(3, 0, k), a.get(0, 3, 5 - k));
        }
        assert_eq!(ttranspose(&t), a);
    }

    #[test]
    fn transpose_depth_one_is_matrix_transpose() {
        let a = ramp(2, 3, 1);
        let t = ttranspose(&a);
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(t.get(j, i, 0), a.get(i, j, 0));
            }
        }
    }

    #[test]
    fn identity_properties() {
        let j = identity_tensor(2, 2).unwrap();
        assert_eq!(j.data().iter().filter(|&&x| x != 0.0).count(), 2);
        assert_eq!(tprod_reference(&j, &j).unwrap(), j);
        assert_eq!(ttranspose(&j), j);
        assert!(is_f_diagonal(&j, 0.0));
    }

    #[test]
    fn frobenius_norms() {
        assert_eq!(frob_norm(&Tensor3::zeros(2, 3, 4).unwrap()), 0.0);
        assert!((frob_norm(&identity_tensor(5, 3).unwrap()) - 5f64.sqrt()).abs() < 1e-15);
        let tube = Tensor3::from_vec(Dims::new(1, 1, 2).unwrap(), vec![3.0, 4.0]).unwrap();
        assert_eq!(frob_norm(&tube), 5.0);
        // integer entries keep every partial sum exact, so order cannot matter
        let a = ramp(3, 4, 5);
        let sq: f64 = unfold(&a).data().iter().map(|x| x * x).sum();
        assert_eq!(frob_norm(&a), sq.sqrt());
    }

    #[test]
    fn f_diagonal_detects_off_diagonal() {
        let a = Tensor3::from_fn(3, 3, 2, |i, j, k| {
            if k == 1 && i == 0 && j == 2 {
                1.0
            } else if i == j {
                2.0
            } else {
                0.0
            }
        })
        .unwrap();
        assert!(!is_f_diagonal(&a, 1e-12));
        assert!(is_f_diagonal(&a, 1.0));
    }

    #[test]
    fn lateral_slices_round_trip() {
        let a = ramp(4, 3, 5);
        let slices: Vec<_> = (0..3).map(|j| a.lateral_slice(j)).collect();
        assert_eq!(slices[1].dims(), Dims::new(4, 1, 5).unwrap());
        assert_eq!(Tensor3::from_lateral_slices(&slices).unwrap(), a);
        assert_eq!(a.leading_lateral_slices(2).unwrap().lateral_slice(1), slices[1]);
        assert_eq!(a.tube(2, 1), (0..5).map(|k| a.get(2, 1, k)).collect::<Vec<_>>());
    }

    #[test]
    fn csv_dump_separates_slices() {
        let text = two_by_two_by_two().to_csv_slices();
        assert_eq!(text, "1,2\n3,4\n\n5,6\n7,8\n");
    }
}
