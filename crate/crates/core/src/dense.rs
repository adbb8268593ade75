//! Column-major dense matrices.
//!
//! Storage is column-major so that `vec(M)` (columns stacked left to right)
//! is the backing slice itself. Products go through nalgebra views over the
//! same buffer, so no copies are made to call into BLAS-style kernels.

use nalgebra::{Cholesky, DMatrix, DMatrixView, DMatrixViewMut, Dyn};

use crate::error::{mismatch, Error, Result};
use crate::parallel;

/// Rows per parallel work unit in the row-producing kernels.
pub(crate) const ROW_BLOCK: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_column_major(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            return Err(mismatch(
                "DenseMatrix::from_column_major",
                format!("{} entries", n_rows * n_cols),
                format!("{} entries", data.len()),
            ));
        }
        Ok(Self {
            n_rows,
            n_cols,
            data,
        })
    }

    /// Build from row slices; convenient for literals in tests.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::InvalidParameter("ragged rows".into()));
        }
        Ok(Self::from_fn(n_rows, n_cols, |i, j| rows[i][j]))
    }

    pub fn from_fn(n_rows: usize, n_cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for j in 0..n_cols {
            for i in 0..n_rows {
                data.push(f(i, j));
            }
        }
        Self {
            n_rows,
            n_cols,
            data,
        }
    }

    pub fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        Self {
            n_rows: m.nrows(),
            n_cols: m.ncols(),
            data: m.as_slice().to_vec(),
        }
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    /// `vec(M)`: the columns stacked left to right, as a view.
    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.n_rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.n_rows + i] = v;
    }

    #[inline]
    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.n_rows..(j + 1) * self.n_rows]
    }

    #[inline]
    pub fn column_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.n_rows..(j + 1) * self.n_rows]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.n_cols).map(|j| self.get(i, j)).collect()
    }

    pub fn view(&self) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice_generic(&self.data, Dyn(self.n_rows), Dyn(self.n_cols))
    }

    pub fn view_mut(&mut self) -> DMatrixViewMut<'_, f64> {
        DMatrixViewMut::from_slice_generic(&mut self.data, Dyn(self.n_rows), Dyn(self.n_cols))
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.n_rows, self.n_cols, &self.data)
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n_cols, self.n_rows, |i, j| self.get(j, i))
    }

    /// `self * other`.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<Self> {
        if self.n_cols != other.n_rows {
            return Err(mismatch(
                "matmul",
                format!("lhs cols = rhs rows ({})", self.n_cols),
                other.n_rows,
            ));
        }
        Ok(Self::from_nalgebra(&(self.view() * other.view())))
    }

    /// `selfᵀ * other`.
    pub fn t_matmul(&self, other: &DenseMatrix) -> Result<Self> {
        if self.n_rows != other.n_rows {
            return Err(mismatch(
                "t_matmul",
                format!("lhs rows = rhs rows ({})", self.n_rows),
                other.n_rows,
            ));
        }
        Ok(Self::from_nalgebra(&self.view().tr_mul(&other.view())))
    }

    /// `selfᵀ * self`.
    pub fn gram(&self) -> Self {
        Self::from_nalgebra(&self.view().tr_mul(&self.view()))
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut m = self.clone();
        m.scale(s);
        m
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, s: f64, other: &DenseMatrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(mismatch(
                "add_scaled",
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        axpy(s, &other.data, &mut self.data);
        Ok(())
    }

    pub fn add_diagonal(&mut self, s: f64) {
        for i in 0..self.n_rows.min(self.n_cols) {
            self.data[i * self.n_rows + i] += s;
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.n_rows.min(self.n_cols))
            .map(|i| self.get(i, i))
            .sum()
    }

    pub fn frobenius_sq(&self) -> f64 {
        dot(&self.data, &self.data)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_sq().sqrt()
    }

    /// Frobenius inner product `⟨self, other⟩`.
    pub fn inner(&self, other: &DenseMatrix) -> f64 {
        dot(&self.data, &other.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Copies a column-major matrix into row-major order for row-wise access.
pub(crate) fn row_major(m: &DenseMatrix) -> Vec<f64> {
    let (r, c) = m.shape();
    let mut out = vec![0.0; r * c];
    for j in 0..c {
        for (i, &v) in m.column(j).iter().enumerate() {
            out[i * c + j] = v;
        }
    }
    out
}

/// Builds an `n_rows × k` matrix whose rows are produced independently by
/// `f(row, out_row)`. Rows are computed in parallel blocks and scattered
/// into column-major storage.
pub(crate) fn fill_rows<F>(n_rows: usize, k: usize, f: F) -> DenseMatrix
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    let n_blocks = n_rows.div_ceil(ROW_BLOCK);
    let blocks = parallel::map_range(n_blocks, |b| {
        let lo = b * ROW_BLOCK;
        let hi = (lo + ROW_BLOCK).min(n_rows);
        let mut buf = vec![0.0; (hi - lo) * k];
        for r in lo..hi {
            f(r, &mut buf[(r - lo) * k..(r - lo + 1) * k]);
        }
        buf
    });
    let mut out = DenseMatrix::zeros(n_rows, k);
    let data = out.as_mut_slice();
    for (b, buf) in blocks.iter().enumerate() {
        let lo = b * ROW_BLOCK;
        for (off, row) in buf.chunks(k.max(1)).enumerate() {
            for (j, &v) in row.iter().enumerate() {
                data[j * n_rows + lo + off] = v;
            }
        }
    }
    out
}

/// `vec(M)`: stacks the columns of `m` left to right.
pub fn vec_flatten(m: &DenseMatrix) -> Vec<f64> {
    m.as_slice().to_vec()
}

/// Inverse of [`vec_flatten`].
pub fn unvec(v: &[f64], n_rows: usize, n_cols: usize) -> Result<DenseMatrix> {
    DenseMatrix::from_column_major(n_rows, n_cols, v.to_vec())
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += a * xi);
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `‖a − b‖₂ / ‖b‖₂`, falling back to `‖a‖₂` when `b` is zero.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let denom = norm2(b);
    if denom > 0.0 {
        diff / denom
    } else {
        diff
    }
}

/// Cholesky factor of a symmetric positive-definite matrix, used to apply
/// inverses of the small and item-sized blocks of Kronecker preconditioners.
#[derive(Clone, Debug)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    n: usize,
}

impl SpdFactor {
    pub fn new(m: &DenseMatrix, what: &'static str) -> Result<Self> {
        if m.n_rows() != m.n_cols() {
            return Err(mismatch(
                "SpdFactor::new",
                "square matrix",
                format!("{:?}", m.shape()),
            ));
        }
        let chol = Cholesky::new(m.to_nalgebra()).ok_or(Error::NotPositiveDefinite(what))?;
        Ok(Self {
            chol,
            n: m.n_rows(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Overwrites each column of the column-major `n × k` block with `M⁻¹` applied to it.
    pub fn solve_columns(&self, data: &mut [f64]) {
        debug_assert_eq!(data.len() % self.n.max(1), 0);
        let k = if self.n == 0 { 0 } else { data.len() / self.n };
        let mut view = DMatrixViewMut::from_slice_generic(data, Dyn(self.n), Dyn(k));
        self.chol.solve_mut(&mut view);
    }

    /// Returns `R · M⁻¹` for a column-major `m × n` block `R` (M symmetric).
    pub fn solve_right(&self, r: &DenseMatrix) -> DenseMatrix {
        let mut t = r.transpose();
        self.solve_columns(t.as_mut_slice());
        t.transpose()
    }

    pub fn solve(&self, rhs: &DenseMatrix) -> DenseMatrix {
        let mut out = rhs.clone();
        self.solve_columns(out.as_mut_slice());
        out
    }
}
