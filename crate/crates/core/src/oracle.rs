//! Brute-force dense references for the weighted closed forms.
//!
//! Everything here materializes `W`, the Kronecker factors and the full
//! Gram matrices explicitly. It shares no code path with the matrix-free
//! operators it checks, and refuses problems larger than
//! [`ORACLE_MAX_ENTRIES`] so it can never become a production path.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::dense::DenseMatrix;
use crate::error::{mismatch, Error, Result};
use crate::gram::RegularizerKind;
use crate::sparse::BinaryInteractionMatrix;
use crate::train::ModelKind;

/// Upper bound on `n_users · n_items`.
pub const ORACLE_MAX_ENTRIES: usize = 10_000;

/// Finite-difference step for gradient cross-checks.
pub const FD_STEP: f64 = 1e-5;

/// A weighted least-squares problem with everything stored densely.
#[derive(Clone, Debug)]
pub struct DenseProblem {
    /// Design matrix `X` (predictions are `XUVᵀ`, `UVᵀ` or `XB`).
    pub x: DenseMatrix,
    /// Reconstruction target; `X` itself unless a general target is given.
    pub target: DenseMatrix,
    /// Positive weights, same shape as `X`.
    pub w: DenseMatrix,
    pub lambda: f64,
    pub kind: ModelKind,
}

/// Which block of unknowns a closed form solves for.
#[derive(Clone, Copy, Debug)]
pub enum Side<'a> {
    /// The full-rank `B`.
    B,
    /// `U` with the given `V` fixed.
    U { v: &'a DenseMatrix },
    /// `V` with the given `U` fixed.
    V { u: &'a DenseMatrix },
}

/// Parameters at which an objective is evaluated.
#[derive(Clone, Debug, PartialEq)]
pub enum Point {
    Factors { u: DenseMatrix, v: DenseMatrix },
    Full { b: DenseMatrix },
}

impl Point {
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            Point::Factors { u, v } => [u.as_slice(), v.as_slice()].concat(),
            Point::Full { b } => b.as_slice().to_vec(),
        }
    }

    pub fn with_vec(&self, flat: &[f64]) -> Point {
        match self {
            Point::Factors { u, v } => {
                let nu = u.as_slice().len();
                Point::Factors {
                    u: DenseMatrix::from_column_major(u.n_rows(), u.n_cols(), flat[..nu].to_vec())
                        .unwrap(),
                    v: DenseMatrix::from_column_major(v.n_rows(), v.n_cols(), flat[nu..].to_vec())
                        .unwrap(),
                }
            }
            Point::Full { b } => Point::Full {
                b: DenseMatrix::from_column_major(b.n_rows(), b.n_cols(), flat.to_vec()).unwrap(),
            },
        }
    }
}

fn check_size(n_users: usize, n_items: usize) -> Result<()> {
    if n_users * n_items > ORACLE_MAX_ENTRIES {
        return Err(Error::OracleTooLarge {
            n_users,
            n_items,
            limit: ORACLE_MAX_ENTRIES,
        });
    }
    Ok(())
}

impl DenseProblem {
    /// Weights `W = (α − 1)X + 1` over a binary `X`.
    pub fn from_binary(
        x: &BinaryInteractionMatrix,
        alpha: f64,
        lambda: f64,
        kind: ModelKind,
    ) -> Result<Self> {
        check_size(x.n_users(), x.n_items())?;
        let xd = x.to_dense();
        let w = DenseMatrix::from_fn(xd.n_rows(), xd.n_cols(), |u, i| {
            (alpha - 1.0) * xd.get(u, i) + 1.0
        });
        Ok(Self {
            target: xd.clone(),
            x: xd,
            w,
            lambda,
            kind,
        })
    }

    /// Arbitrary positive weights.
    pub fn with_weights(
        x: DenseMatrix,
        w: DenseMatrix,
        lambda: f64,
        kind: ModelKind,
    ) -> Result<Self> {
        check_size(x.n_rows(), x.n_cols())?;
        if w.shape() != x.shape() {
            return Err(mismatch(
                "DenseProblem::with_weights",
                format!("{:?}", x.shape()),
                format!("{:?}", w.shape()),
            ));
        }
        if w.as_slice().iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidParameter("weights must be positive".into()));
        }
        Ok(Self {
            target: x.clone(),
            x,
            w,
            lambda,
            kind,
        })
    }

    pub fn with_target(mut self, target: DenseMatrix) -> Result<Self> {
        if target.shape() != self.x.shape() {
            return Err(mismatch(
                "DenseProblem::with_target",
                format!("{:?}", self.x.shape()),
                format!("{:?}", target.shape()),
            ));
        }
        self.target = target;
        Ok(self)
    }

    fn n_users(&self) -> usize {
        self.x.n_rows()
    }

    fn n_items(&self) -> usize {
        self.x.n_cols()
    }

    /// The left factor `A` of the prediction `A·U·Vᵀ`: `X`, or `I` for WMF.
    fn design(&self) -> DenseMatrix {
        if self.kind == ModelKind::Wmf {
            DenseMatrix::identity(self.n_users())
        } else {
            self.x.clone()
        }
    }

    pub fn prediction(&self, point: &Point) -> Result<DenseMatrix> {
        match (point, self.kind) {
            (Point::Full { b }, ModelKind::FullRank) => self.x.matmul(b),
            (Point::Factors { u, v }, kind) if kind != ModelKind::FullRank => {
                self.design().matmul(u)?.matmul(&v.transpose())
            }
            _ => Err(Error::InvalidParameter(
                "point does not match model kind".into(),
            )),
        }
    }
}

/// `A ⊗ B`.
pub fn kron(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let (m, n) = a.shape();
    let (p, q) = b.shape();
    DenseMatrix::from_fn(m * p, n * q, |r, c| {
        a.get(r / p, c / q) * b.get(r % p, c % q)
    })
}

/// `diag(x)`.
pub fn diag(x: &[f64]) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(x.len(), x.len());
    for (i, &v) in x.iter().enumerate() {
        m.set(i, i, v);
    }
    m
}

fn hadamard(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    DenseMatrix::from_fn(a.n_rows(), a.n_cols(), |i, j| a.get(i, j) * b.get(i, j))
}

fn mv(m: &DenseMatrix, x: &[f64]) -> Vec<f64> {
    let out = m.view() * DVector::from_column_slice(x);
    out.as_slice().to_vec()
}

/// `Kᵀ·D·K` for a diagonal weight `D` given by its entries.
fn weighted_gram(k: &DenseMatrix, d: &[f64]) -> DenseMatrix {
    let dk = diag(d).matmul(k).unwrap();
    k.t_matmul(&dk).unwrap()
}

/// Explicitly assembled regularized Gram matrix for `side`.
pub fn dense_gram_assemble(problem: &DenseProblem, side: Side<'_>) -> Result<DenseMatrix> {
    check_size(problem.n_users(), problem.n_items())?;
    let lambda = problem.lambda;
    let n_items = problem.n_items();
    let w_bar = problem.w.as_slice().to_vec();
    let w_hat = problem.w.transpose().as_slice().to_vec();
    match side {
        Side::B => {
            if problem.kind != ModelKind::FullRank {
                return Err(Error::InvalidParameter(
                    "side B requires the full-rank model".into(),
                ));
            }
            let k = kron(&DenseMatrix::identity(n_items), &problem.x);
            let mut h = weighted_gram(&k, &w_bar);
            h.add_diagonal(lambda);
            Ok(h)
        }
        Side::U { v } => {
            let reg = factor_reg(problem)?;
            let a = problem.design();
            let k = kron(v, &a);
            let mut h = weighted_gram(&k, &w_bar);
            let m = a.n_cols();
            match reg {
                RegularizerKind::WeightDecay => h.add_diagonal(lambda),
                RegularizerKind::Dropout => {
                    h.add_scaled(lambda, &kron(&v.gram(), &DenseMatrix::identity(m)))?
                }
                RegularizerKind::DataWeightDecay => {
                    h.add_scaled(lambda, &kron(&DenseMatrix::identity(v.n_cols()), &a.gram()))?
                }
            }
            Ok(h)
        }
        Side::V { u } => {
            let reg = factor_reg(problem)?;
            let au = problem.design().matmul(u)?;
            let k = kron(&au, &DenseMatrix::identity(n_items));
            let mut h = weighted_gram(&k, &w_hat);
            match reg {
                RegularizerKind::Dropout => {
                    h.add_scaled(lambda, &kron(&u.gram(), &DenseMatrix::identity(n_items)))?
                }
                RegularizerKind::WeightDecay | RegularizerKind::DataWeightDecay => {
                    h.add_diagonal(lambda)
                }
            }
            Ok(h)
        }
    }
}

fn factor_reg(problem: &DenseProblem) -> Result<RegularizerKind> {
    problem
        .kind
        .regularizer()
        .ok_or_else(|| Error::InvalidParameter("factor sides require a factor model".into()))
}

/// Densely computed right-hand side for `side`, as a matrix shaped like the unknown.
pub fn dense_rhs(problem: &DenseProblem, side: Side<'_>) -> Result<DenseMatrix> {
    let wt = hadamard(&problem.w, &problem.target);
    match side {
        Side::B => problem.x.t_matmul(&wt),
        Side::U { v } => problem.design().t_matmul(&wt)?.matmul(v),
        Side::V { u } => wt.t_matmul(&problem.design().matmul(u)?),
    }
}

/// Direct solve of the assembled system against the dense right-hand side.
pub fn dense_closed_form(problem: &DenseProblem, side: Side<'_>) -> Result<DenseMatrix> {
    let h = dense_gram_assemble(problem, side)?;
    let rhs = dense_rhs(problem, side)?;
    let sol = h
        .to_nalgebra()
        .lu()
        .solve(&DVector::from_column_slice(rhs.as_slice()))
        .ok_or_else(|| Error::Singular("assembled Gram matrix".into()))?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("assembled Gram matrix".into()));
    }
    DenseMatrix::from_column_major(rhs.n_rows(), rhs.n_cols(), sol.as_slice().to_vec())
}

/// Densely evaluated objective.
pub fn dense_objective(problem: &DenseProblem, point: &Point) -> Result<f64> {
    let pred = problem.prediction(point)?;
    let mut data = 0.0;
    for j in 0..pred.n_cols() {
        for i in 0..pred.n_rows() {
            let r = pred.get(i, j) - problem.target.get(i, j);
            data += problem.w.get(i, j) * r * r;
        }
    }
    let lambda = problem.lambda;
    let reg = match point {
        Point::Full { b } => lambda * b.frobenius_sq(),
        Point::Factors { u, v } => match factor_reg(problem)? {
            RegularizerKind::WeightDecay => lambda * (u.frobenius_sq() + v.frobenius_sq()),
            RegularizerKind::Dropout => lambda * u.matmul(&v.transpose())?.frobenius_sq(),
            RegularizerKind::DataWeightDecay => {
                lambda * (problem.x.matmul(u)?.frobenius_sq() + v.frobenius_sq())
            }
        },
    };
    Ok(data + reg)
}

/// Objective value and its analytic gradient (same shape as `point`).
pub fn dense_objective_and_gradient(problem: &DenseProblem, point: &Point) -> Result<(f64, Point)> {
    let f = dense_objective(problem, point)?;
    let pred = problem.prediction(point)?;
    let mut resid = pred;
    resid.add_scaled(-1.0, &problem.target)?;
    let g = hadamard(&problem.w, &resid).scaled(2.0);
    let lambda = problem.lambda;
    let grad = match point {
        Point::Full { b } => {
            let mut gb = problem.x.t_matmul(&g)?;
            gb.add_scaled(2.0 * lambda, b)?;
            Point::Full { b: gb }
        }
        Point::Factors { u, v } => {
            let a = problem.design();
            let au = a.matmul(u)?;
            let mut gu = a.t_matmul(&g)?.matmul(v)?;
            let mut gv = g.t_matmul(&au)?;
            match factor_reg(problem)? {
                RegularizerKind::WeightDecay => {
                    gu.add_scaled(2.0 * lambda, u)?;
                    gv.add_scaled(2.0 * lambda, v)?;
                }
                RegularizerKind::Dropout => {
                    gu.add_scaled(2.0 * lambda, &u.matmul(&v.gram())?)?;
                    gv.add_scaled(2.0 * lambda, &v.matmul(&u.gram())?)?;
                }
                RegularizerKind::DataWeightDecay => {
                    gu.add_scaled(2.0 * lambda, &a.t_matmul(&au)?)?;
                    gv.add_scaled(2.0 * lambda, v)?;
                }
            }
            Point::Factors { u: gu, v: gv }
        }
    };
    Ok((f, grad))
}

/// Central finite-difference gradient with step `h`.
pub fn finite_difference_gradient(problem: &DenseProblem, point: &Point, h: f64) -> Result<Point> {
    let base = point.to_vec();
    let mut grad = vec![0.0; base.len()];
    let mut probe = base.clone();
    for k in 0..base.len() {
        probe[k] = base[k] + h;
        let fp = dense_objective(problem, &point.with_vec(&probe))?;
        probe[k] = base[k] - h;
        let fm = dense_objective(problem, &point.with_vec(&probe))?;
        probe[k] = base[k];
        grad[k] = (fp - fm) / (2.0 * h);
    }
    Ok(point.with_vec(&grad))
}

/// `vec(Aᵀ(W ⊙ (ABCᵀ))C)` computed directly.
pub fn middle_gram_direct(
    a: &DenseMatrix,
    w: &DenseMatrix,
    b: &DenseMatrix,
    c: &DenseMatrix,
) -> Result<Vec<f64>> {
    let abc = a.matmul(b)?.matmul(&c.transpose())?;
    Ok(a.t_matmul(&hadamard(w, &abc))?.matmul(c)?.into_vec())
}

/// `(C ⊗ A)ᵀ·diag(vec W)·(C ⊗ A)·vec(B)`.
pub fn middle_gram_kronecker(
    a: &DenseMatrix,
    w: &DenseMatrix,
    b: &DenseMatrix,
    c: &DenseMatrix,
) -> Result<Vec<f64>> {
    let k = kron(c, a);
    let h = weighted_gram(&k, w.as_slice());
    Ok(mv(&h, b.as_slice()))
}

/// `vec((Wᵀ ⊙ (CBᵀAᵀ))AB)` computed directly.
pub fn outer_gram_direct(
    a: &DenseMatrix,
    w: &DenseMatrix,
    b: &DenseMatrix,
    c: &DenseMatrix,
) -> Result<Vec<f64>> {
    let ab = a.matmul(b)?;
    let cbtat = c.matmul(&ab.transpose())?;
    Ok(hadamard(&w.transpose(), &cbtat).matmul(&ab)?.into_vec())
}

/// `(AB ⊗ I)ᵀ·diag(vec Wᵀ)·(AB ⊗ I)·vec(C)`.
pub fn outer_gram_kronecker(
    a: &DenseMatrix,
    w: &DenseMatrix,
    b: &DenseMatrix,
    c: &DenseMatrix,
) -> Result<Vec<f64>> {
    let ab = a.matmul(b)?;
    let k = kron(&ab, &DenseMatrix::identity(c.n_rows()));
    let h = weighted_gram(&k, w.transpose().as_slice());
    Ok(mv(&h, c.as_slice()))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DenseMatrix) -> f64 {
    let sym: DMatrix<f64> = m.to_nalgebra();
    sym.symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Random binary matrix whose first `n_items` rows form a unit
/// lower-triangular block (so its columns are independent) and whose other
/// rows each hold at least one item. Requires `n_users >= n_items`.
pub fn random_full_column_rank<R: Rng>(
    rng: &mut R,
    n_users: usize,
    n_items: usize,
    density: f64,
) -> Result<BinaryInteractionMatrix> {
    if n_users < n_items {
        return Err(Error::InvalidParameter(format!(
            "need n_users >= n_items, got {n_users} < {n_items}"
        )));
    }
    check_size(n_users, n_items)?;
    let mut coords = Vec::new();
    for u in 0..n_users {
        let start = coords.len();
        for i in 0..n_items {
            let forced = u == i;
            let allowed = u >= n_items || i < u;
            if forced || (allowed && rng.random::<f64>() < density) {
                coords.push((u, i));
            }
        }
        if coords.len() == start {
            coords.push((u, rng.random_range(0..n_items)));
        }
    }
    BinaryInteractionMatrix::from_coordinates(n_users, n_items, coords)
}

/// Matrix with entries uniform in `[lo, hi)`.
pub fn random_uniform<R: Rng>(
    rng: &mut R,
    n_rows: usize,
    n_cols: usize,
    lo: f64,
    hi: f64,
) -> DenseMatrix {
    DenseMatrix::from_fn(n_rows, n_cols, |_, _| rng.random_range(lo..hi))
}
