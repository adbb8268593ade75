//! Binary interaction matrices and the sparse kernels built on them.
//!
//! `X` is stored twice, row-compressed (users) and column-compressed (items),
//! over the same coordinate set. The user-side Gram operators walk rows and
//! the item-side ones walk columns, so neither path pays for a transpose.

use crate::dense::{dot, fill_rows, row_major, DenseMatrix, ROW_BLOCK};
use crate::error::{mismatch, Error, Result};
use crate::parallel;

/// Sparse user × item matrix whose stored values are all exactly 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryInteractionMatrix {
    n_users: usize,
    n_items: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    /// For each CSC position, the CSR position of the same coordinate.
    csc_to_csr: Vec<usize>,
    /// Inverse of `csc_to_csr`.
    csr_to_csc: Vec<usize>,
}

impl BinaryInteractionMatrix {
    /// Builds the matrix from `(user, item)` coordinates. Duplicates collapse
    /// into one stored entry; out-of-range indices are an error.
    pub fn from_coordinates(
        n_users: usize,
        n_items: usize,
        coords: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut coords: Vec<(usize, usize)> = coords.into_iter().collect();
        for &(u, i) in &coords {
            if u >= n_users || i >= n_items {
                return Err(Error::IndexOutOfBounds {
                    row: u,
                    col: i,
                    n_rows: n_users,
                    n_cols: n_items,
                });
            }
        }
        coords.sort_unstable();
        coords.dedup();

        let nnz = coords.len();
        let mut row_ptr = vec![0usize; n_users + 1];
        let mut col_ptr = vec![0usize; n_items + 1];
        for &(u, i) in &coords {
            row_ptr[u + 1] += 1;
            col_ptr[i + 1] += 1;
        }
        for u in 0..n_users {
            row_ptr[u + 1] += row_ptr[u];
        }
        for i in 0..n_items {
            col_ptr[i + 1] += col_ptr[i];
        }
        let col_idx: Vec<usize> = coords.iter().map(|&(_, i)| i).collect();

        // Coordinates are sorted by (user, item), so filling columns in this
        // order leaves each column's users ascending.
        let mut row_idx = vec![0usize; nnz];
        let mut csc_to_csr = vec![0usize; nnz];
        let mut next = col_ptr.clone();
        for (pos, &(u, i)) in coords.iter().enumerate() {
            let slot = next[i];
            row_idx[slot] = u;
            csc_to_csr[slot] = pos;
            next[i] += 1;
        }

        let mut csr_to_csc = vec![0usize; nnz];
        for (csc, &csr) in csc_to_csr.iter().enumerate() {
            csr_to_csc[csr] = csc;
        }

        Ok(Self {
            n_users,
            n_items,
            row_ptr,
            col_idx,
            col_ptr,
            row_idx,
            csc_to_csr,
            csr_to_csc,
        })
    }

    /// Binarizes a dense matrix: every strictly positive entry becomes a 1.
    pub fn from_dense_positive(m: &DenseMatrix) -> Self {
        let coords = (0..m.n_rows())
            .flat_map(|u| (0..m.n_cols()).map(move |i| (u, i)))
            .filter(|&(u, i)| m.get(u, i) > 0.0);
        Self::from_coordinates(m.n_rows(), m.n_cols(), coords).expect("coordinates are in range")
    }

    #[inline]
    pub fn n_users(&self) -> usize {
        self.n_users
    }

    #[inline]
    pub fn n_items(&self) -> usize {
        self.n_items
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Items of user `u`, ascending.
    #[inline]
    pub fn row(&self, u: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[u]..self.row_ptr[u + 1]]
    }

    /// Users of item `i`, ascending.
    #[inline]
    pub fn col(&self, i: usize) -> &[usize] {
        &self.row_idx[self.col_ptr[i]..self.col_ptr[i + 1]]
    }

    pub fn contains(&self, u: usize, i: usize) -> bool {
        self.row(u).binary_search(&i).is_ok()
    }

    /// Coordinates in row-major order.
    pub fn coordinates(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_users).flat_map(move |u| self.row(u).iter().map(move |&i| (u, i)))
    }

    /// Coordinates in column-major order.
    pub fn coordinates_by_column(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_items).flat_map(move |i| self.col(i).iter().map(move |&u| (u, i)))
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.n_users, self.n_items);
        for (u, i) in self.coordinates() {
            m.set(u, i, 1.0);
        }
        m
    }

    /// Keeps only the listed users (in the given order) as the new rows.
    pub fn select_rows(&self, users: &[usize]) -> Self {
        let coords = users
            .iter()
            .enumerate()
            .flat_map(|(new_u, &u)| self.row(u).iter().map(move |&i| (new_u, i)));
        Self::from_coordinates(users.len(), self.n_items, coords).expect("rows are in range")
    }
}

/// `X · D` for `D` with `n_items` rows.
pub fn spmm(x: &BinaryInteractionMatrix, d: &DenseMatrix) -> Result<DenseMatrix> {
    if d.n_rows() != x.n_items {
        return Err(mismatch("spmm", format!("{} rows", x.n_items), d.n_rows()));
    }
    let k = d.n_cols();
    let dr = row_major(d);
    Ok(fill_rows(x.n_users, k, |u, out| {
        for &i in x.row(u) {
            for (o, v) in out.iter_mut().zip(&dr[i * k..(i + 1) * k]) {
                *o += v;
            }
        }
    }))
}

/// `Xᵀ · D` for `D` with `n_users` rows.
pub fn spmm_t(x: &BinaryInteractionMatrix, d: &DenseMatrix) -> Result<DenseMatrix> {
    if d.n_rows() != x.n_users {
        return Err(mismatch(
            "spmm_t",
            format!("{} rows", x.n_users),
            d.n_rows(),
        ));
    }
    let k = d.n_cols();
    let dr = row_major(d);
    Ok(fill_rows(x.n_items, k, |i, out| {
        for &u in x.col(i) {
            for (o, v) in out.iter_mut().zip(&dr[u * k..(u + 1) * k]) {
                *o += v;
            }
        }
    }))
}

/// `Xᵀ X` as a dense `n_items × n_items` matrix.
pub fn gram_dense(x: &BinaryInteractionMatrix) -> DenseMatrix {
    let n = x.n_items;
    let mut g = DenseMatrix::zeros(n, n);
    parallel::for_each_chunk_mut(g.as_mut_slice(), n, |i, col| {
        for &u in x.col(i) {
            for &j in x.row(u) {
                col[j] += 1.0;
            }
        }
    });
    g
}

/// Which compressed structure of the defining matrix a [`SparsePattern`]
/// follows: `Rows` is the pattern of `X`, `Columns` the pattern of `Xᵀ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orientation {
    Rows,
    Columns,
}

/// Real values on the coordinate set of an interaction matrix (or its
/// transpose), e.g. `X ⊙ (A·Bᵀ)`.
#[derive(Clone, Debug)]
pub struct SparsePattern<'a> {
    matrix: &'a BinaryInteractionMatrix,
    orientation: Orientation,
    values: Vec<f64>,
}

impl<'a> SparsePattern<'a> {
    pub fn new(
        matrix: &'a BinaryInteractionMatrix,
        orientation: Orientation,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != matrix.nnz() {
            return Err(mismatch("SparsePattern::new", matrix.nnz(), values.len()));
        }
        Ok(Self {
            matrix,
            orientation,
            values,
        })
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    /// Values in the compressed order of the orientation (CSR for `Rows`,
    /// CSC for `Columns`).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn shape(&self) -> (usize, usize) {
        match self.orientation {
            Orientation::Rows => (self.matrix.n_users, self.matrix.n_items),
            Orientation::Columns => (self.matrix.n_items, self.matrix.n_users),
        }
    }

    /// (outer pointer, inner indices) for this orientation.
    fn outer(&self) -> (&[usize], &[usize]) {
        match self.orientation {
            Orientation::Rows => (&self.matrix.row_ptr, &self.matrix.col_idx),
            Orientation::Columns => (&self.matrix.col_ptr, &self.matrix.row_idx),
        }
    }

    /// (outer pointer, inner indices, position map) of the other orientation,
    /// where the map sends its positions to this orientation's positions.
    fn inner(&self) -> (&[usize], &[usize], &[usize]) {
        match self.orientation {
            Orientation::Rows => (
                &self.matrix.col_ptr,
                &self.matrix.row_idx,
                &self.matrix.csc_to_csr,
            ),
            Orientation::Columns => (
                &self.matrix.row_ptr,
                &self.matrix.col_idx,
                &self.matrix.csr_to_csc,
            ),
        }
    }

    /// `S · D`.
    pub fn mul_dense(&self, d: &DenseMatrix) -> Result<DenseMatrix> {
        let (n_out, n_in) = self.shape();
        if d.n_rows() != n_in {
            return Err(mismatch("SparsePattern::mul_dense", n_in, d.n_rows()));
        }
        let k = d.n_cols();
        let dr = row_major(d);
        let (ptr, idx) = self.outer();
        Ok(fill_rows(n_out, k, |o, out| {
            for pos in ptr[o]..ptr[o + 1] {
                let s = self.values[pos];
                let j = idx[pos];
                for (acc, v) in out.iter_mut().zip(&dr[j * k..(j + 1) * k]) {
                    *acc += s * v;
                }
            }
        }))
    }

    /// `Sᵀ · D`.
    pub fn t_mul_dense(&self, d: &DenseMatrix) -> Result<DenseMatrix> {
        let (n_out, n_in) = self.shape();
        if d.n_rows() != n_out {
            return Err(mismatch("SparsePattern::t_mul_dense", n_out, d.n_rows()));
        }
        let k = d.n_cols();
        let dr = row_major(d);
        let (ptr, idx, map) = self.inner();
        Ok(fill_rows(n_in, k, |c, out| {
            for pos in ptr[c]..ptr[c + 1] {
                let s = self.values[map[pos]];
                let r = idx[pos];
                for (acc, v) in out.iter_mut().zip(&dr[r * k..(r + 1) * k]) {
                    *acc += s * v;
                }
            }
        }))
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let (n_out, n_in) = self.shape();
        let (ptr, idx) = self.outer();
        let mut m = DenseMatrix::zeros(n_out, n_in);
        for o in 0..n_out {
            for pos in ptr[o]..ptr[o + 1] {
                m.set(o, idx[pos], self.values[pos]);
            }
        }
        m
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Sampled product: for every stored `(u, i)` of `pattern_of`, the inner
/// product of row `u` of `a` with row `i` of `bt`, i.e. `X ⊙ (A·Btᵀ)`.
pub fn sddmm<'a>(
    pattern_of: &'a BinaryInteractionMatrix,
    a: &DenseMatrix,
    bt: &DenseMatrix,
) -> Result<SparsePattern<'a>> {
    let x = pattern_of;
    if a.n_rows() != x.n_users || bt.n_rows() != x.n_items || a.n_cols() != bt.n_cols() {
        return Err(mismatch(
            "sddmm",
            format!("A: {}×k, Bt: {}×k", x.n_users, x.n_items),
            format!("A: {:?}, Bt: {:?}", a.shape(), bt.shape()),
        ));
    }
    let k = a.n_cols();
    let ar = row_major(a);
    let br = row_major(bt);
    let n_blocks = x.n_users.div_ceil(ROW_BLOCK);
    let blocks = parallel::map_range(n_blocks, |b| {
        let lo = b * ROW_BLOCK;
        let hi = (lo + ROW_BLOCK).min(x.n_users);
        let mut vals = Vec::with_capacity(x.row_ptr[hi] - x.row_ptr[lo]);
        for u in lo..hi {
            let au = &ar[u * k..(u + 1) * k];
            vals.extend(x.row(u).iter().map(|&i| dot(au, &br[i * k..(i + 1) * k])));
        }
        vals
    });
    SparsePattern::new(x, Orientation::Rows, blocks.concat())
}

/// Transpose-pattern variant of [`sddmm`]: values on the coordinates of `Xᵀ`
/// (item-major), `value(i, u) = ⟨a[i,:], bt[u,:]⟩`.
pub fn sddmm_t<'a>(
    pattern_of: &'a BinaryInteractionMatrix,
    a: &DenseMatrix,
    bt: &DenseMatrix,
) -> Result<SparsePattern<'a>> {
    let x = pattern_of;
    if a.n_rows() != x.n_items || bt.n_rows() != x.n_users || a.n_cols() != bt.n_cols() {
        return Err(mismatch(
            "sddmm_t",
            format!("A: {}×k, Bt: {}×k", x.n_items, x.n_users),
            format!("A: {:?}, Bt: {:?}", a.shape(), bt.shape()),
        ));
    }
    let k = a.n_cols();
    let ar = row_major(a);
    let br = row_major(bt);
    let n_blocks = x.n_items.div_ceil(ROW_BLOCK);
    let blocks = parallel::map_range(n_blocks, |b| {
        let lo = b * ROW_BLOCK;
        let hi = (lo + ROW_BLOCK).min(x.n_items);
        let mut vals = Vec::with_capacity(x.col_ptr[hi] - x.col_ptr[lo]);
        for i in lo..hi {
            let ai = &ar[i * k..(i + 1) * k];
            vals.extend(x.col(i).iter().map(|&u| dot(ai, &br[u * k..(u + 1) * k])));
        }
        vals
    });
    SparsePattern::new(x, Orientation::Columns, blocks.concat())
}
