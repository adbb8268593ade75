use crate::dense::DenseMatrix;
use crate::error::{mismatch, Result};
use crate::gram::{check_lambda, WeightScheme};
use crate::parallel;
use crate::pcg::LinearOperator;
use crate::sparse::{gram_dense, BinaryInteractionMatrix};

/// `H(B, λ) = (I ⊗ Xᵀ)·diag(vec W)·(I ⊗ X) + λI`.
///
/// The operator is block diagonal over the columns of `B`: column `j` only
/// sees `Xᵀ·diag(W[:, j])·X + λI`, with `diag(W[:, j]) = I + (α − 1)·diag(x_j)`.
#[derive(Clone, Debug)]
pub struct FullRankGramOp<'a> {
    x: &'a BinaryInteractionMatrix,
    weight: WeightScheme,
    lambda: f64,
}

impl<'a> FullRankGramOp<'a> {
    pub fn new(x: &'a BinaryInteractionMatrix, weight: WeightScheme, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(Self { x, weight, lambda })
    }

    pub fn matrix(&self) -> &'a BinaryInteractionMatrix {
        self.x
    }

    pub fn weight(&self) -> WeightScheme {
        self.weight
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Applies the column-`j` block to `p`, writing into `out`.
    pub fn apply_column(&self, j: usize, p: &[f64], out: &mut [f64]) {
        let x = self.x;
        let mut y = vec![0.0; x.n_users()];
        for (u, yu) in y.iter_mut().enumerate() {
            *yu = x.row(u).iter().map(|&i| p[i]).sum();
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o = x.col(i).iter().map(|&u| y[u]).sum::<f64>() + self.lambda * p[i];
        }
        let extra = self.weight.extra();
        if extra != 0.0 {
            for &u in x.col(j) {
                let s = extra * y[u];
                for &i in x.row(u) {
                    out[i] += s;
                }
            }
        }
    }

    /// `Xᵀ(W ⊙ (XP)) + λP` for the full `n_items × n_items` block `P`.
    pub fn apply(&self, p: &DenseMatrix) -> Result<DenseMatrix> {
        let n = self.x.n_items();
        if p.shape() != (n, n) {
            return Err(mismatch(
                "FullRankGramOp::apply",
                format!("{n}x{n}"),
                format!("{:?}", p.shape()),
            ));
        }
        let cols: Vec<usize> = (0..n).collect();
        self.apply_columns(&cols, p)
    }

    /// Applies the blocks for the listed columns of `B`; column `c` of `p`
    /// is the slice of `vec(P)` belonging to column `columns[c]`.
    pub fn apply_columns(&self, columns: &[usize], p: &DenseMatrix) -> Result<DenseMatrix> {
        let n = self.x.n_items();
        if p.n_rows() != n || p.n_cols() != columns.len() {
            return Err(mismatch(
                "FullRankGramOp::apply_columns",
                format!("{n}x{}", columns.len()),
                format!("{:?}", p.shape()),
            ));
        }
        if let Some(&bad) = columns.iter().find(|&&j| j >= n) {
            return Err(mismatch(
                "FullRankGramOp::apply_columns",
                format!("column < {n}"),
                bad,
            ));
        }
        let mut out = DenseMatrix::zeros(n, columns.len());
        parallel::for_each_chunk_mut(out.as_mut_slice(), n, |c, dst| {
            self.apply_column(columns[c], p.column(c), dst)
        });
        Ok(out)
    }

    /// The single-column system for column `j` as a PCG operator.
    pub fn column_op(&self, j: usize) -> FullRankColumnOp<'_, 'a> {
        FullRankColumnOp {
            op: self,
            column: j,
        }
    }
}

impl LinearOperator for FullRankGramOp<'_> {
    fn dim(&self) -> usize {
        self.x.n_items() * self.x.n_items()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.x.n_items();
        parallel::for_each_chunk_mut(y, n, |c, dst| {
            self.apply_column(c, &x[c * n..(c + 1) * n], dst)
        });
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FullRankColumnOp<'o, 'a> {
    op: &'o FullRankGramOp<'a>,
    column: usize,
}

impl LinearOperator for FullRankColumnOp<'_, '_> {
    fn dim(&self) -> usize {
        self.op.x.n_items()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.op.apply_column(self.column, x, y)
    }
}

/// `Xᵀ(W ⊙ X)`, which is `α·XᵀX` because `W ⊙ X = αX` for binary `X`.
pub fn rhs_full_rank(x: &BinaryInteractionMatrix, w: WeightScheme) -> DenseMatrix {
    gram_dense(x).scaled(w.alpha())
}

/// Column `j` of [`rhs_full_rank`] without forming `XᵀX`.
pub fn rhs_full_rank_column(x: &BinaryInteractionMatrix, w: WeightScheme, j: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.n_items()];
    for &u in x.col(j) {
        for &i in x.row(u) {
            out[i] += w.alpha();
        }
    }
    out
}

/// `Xᵀ(W ⊙ T)` for an arbitrary dense target `T` in place of `X`, the
/// right-hand side of `min ‖√W ⊙ (T − XB)‖²`.
pub fn rhs_full_rank_target(
    x: &BinaryInteractionMatrix,
    w: WeightScheme,
    target: &DenseMatrix,
) -> Result<DenseMatrix> {
    if target.shape() != (x.n_users(), x.n_items()) {
        return Err(mismatch(
            "rhs_full_rank_target",
            format!("{}x{}", x.n_users(), x.n_items()),
            format!("{:?}", target.shape()),
        ));
    }
    let n = x.n_items();
    let mut out = DenseMatrix::zeros(n, n);
    parallel::for_each_chunk_mut(out.as_mut_slice(), n, |j, dst| {
        let t = target.column(j);
        // W[:, j] ⊙ t = t + (α − 1)·x_j ⊙ t
        let mut wt = t.to_vec();
        for &u in x.col(j) {
            wt[u] += w.extra() * t[u];
        }
        for (i, d) in dst.iter_mut().enumerate() {
            *d = x.col(i).iter().map(|&u| wt[u]).sum();
        }
    });
    Ok(out)
}
