use nalgebra::{DMatrix, DVector};

use crate::dense::{row_major, DenseMatrix};
use crate::error::{Error, Result};
use crate::parallel;
use crate::sparse::BinaryInteractionMatrix;
use crate::train::{
    gaussian_init, objective_value, validate_hyper, FactorModel, Hyperparameters, Model, ModelKind,
    TrainConfig, TrainStats,
};

/// Solves one row of weighted ridge regression against the fixed factors
/// `other` (row-major `m × d`, with `gram = otherᵀother`):
/// `(gram + (α − 1)·O_Sᵀ O_S + λI)⁻¹ · α·O_Sᵀ1`, `S` the row's support.
pub fn wmf_row_solve(
    other_rows: &[f64],
    d: usize,
    gram: &DenseMatrix,
    support: &[usize],
    alpha: f64,
    lambda: f64,
) -> Result<Vec<f64>> {
    let mut a = DMatrix::from_column_slice(d, d, gram.as_slice());
    let mut b = DVector::zeros(d);
    let extra = alpha - 1.0;
    for &j in support {
        let o = &other_rows[j * d..(j + 1) * d];
        for c in 0..d {
            b[c] += alpha * o[c];
            if extra != 0.0 {
                for r in 0..d {
                    a[(r, c)] += extra * o[r] * o[c];
                }
            }
        }
    }
    for k in 0..d {
        a[(k, k)] += lambda;
    }
    if let Some(chol) = a.clone().cholesky() {
        return Ok(chol.solve(&b).as_slice().to_vec());
    }
    a.lu()
        .solve(&b)
        .filter(|s| s.iter().all(|v| v.is_finite()))
        .map(|s| s.as_slice().to_vec())
        .ok_or_else(|| Error::Singular("per-row weighted ridge system".into()))
}

/// Fold-in for a new user: the WMF user factor given its item set.
pub fn wmf_fold_in(
    v: &DenseMatrix,
    vtv: &DenseMatrix,
    items: &[usize],
    alpha: f64,
    lambda: f64,
) -> Result<Vec<f64>> {
    wmf_row_solve(&row_major(v), v.n_cols(), vtv, items, alpha, lambda)
}

/// One ALS half-step: re-solves every row of the `n × d` factor against
/// `other`, with `support(r)` the nonzeros of row `r`.
fn als_half<'s, S>(
    n: usize,
    other: &DenseMatrix,
    support: S,
    alpha: f64,
    lambda: f64,
) -> Result<DenseMatrix>
where
    S: Fn(usize) -> &'s [usize] + Sync + Send,
{
    let d = other.n_cols();
    let gram = other.gram();
    let rows = row_major(other);
    let solved = parallel::map_range(n, |r| {
        wmf_row_solve(&rows, d, &gram, support(r), alpha, lambda)
            .map_err(|e| Error::Singular(format!("row {r}: {e}")))
    });
    let mut out = DenseMatrix::zeros(n, d);
    for (r, res) in solved.into_iter().enumerate() {
        for (c, val) in res?.into_iter().enumerate() {
            out.set(r, c, val);
        }
    }
    Ok(out)
}

/// Re-solves every user row against fixed item factors `v`.
pub fn wmf_update_users(
    x: &BinaryInteractionMatrix,
    v: &DenseMatrix,
    alpha: f64,
    lambda: f64,
) -> Result<DenseMatrix> {
    als_half(x.n_users(), v, |r| x.row(r), alpha, lambda)
}

/// Re-solves every item row against fixed user factors `u`.
pub fn wmf_update_items(
    x: &BinaryInteractionMatrix,
    u: &DenseMatrix,
    alpha: f64,
    lambda: f64,
) -> Result<DenseMatrix> {
    als_half(x.n_items(), u, |c| x.col(c), alpha, lambda)
}

/// Per-row alternating least squares for `‖√W ⊙ (X − UVᵀ)‖² + λ(‖U‖² + ‖V‖²)`.
pub fn train_wmf(
    x: &BinaryInteractionMatrix,
    d: usize,
    alpha: f64,
    lambda: f64,
    cfg: &TrainConfig,
) -> Result<(FactorModel, TrainStats)> {
    validate_hyper(alpha, lambda)?;
    cfg.validate()?;
    if d == 0 || d > x.n_items() {
        return Err(Error::InvalidParameter(format!(
            "rank must be in 1..={}, got {d}",
            x.n_items()
        )));
    }
    let mut stats = TrainStats::default();
    if lambda == 0.0 {
        stats.warn(
            "wmf with lambda = 0: per-row systems are singular for rank-deficient factors".into(),
        );
    }
    let hyper = Hyperparameters {
        alpha,
        lambda,
        rank: d,
        seed: cfg.init_seed,
    };
    let mut v = gaussian_init(x.n_items(), d, cfg.init_scale, cfg.init_seed);
    let mut u = DenseMatrix::zeros(x.n_users(), d);

    for it in 0..cfg.n_alternations {
        u = wmf_update_users(x, &v, alpha, lambda)?;
        v = wmf_update_items(x, &u, alpha, lambda)?;
        let model = Model::Factor(FactorModel {
            kind: ModelKind::Wmf,
            u: u.clone(),
            v: v.clone(),
            n_users: x.n_users(),
            hyper,
        });
        let obj = objective_value(x, &model, alpha, lambda)?;
        stats.alternations = it + 1;
        let prev = stats.objective_history.last().copied();
        stats.objective_history.push(obj);
        if let Some(prev) = prev {
            if cfg.objective_tol > 0.0 && prev - obj < cfg.objective_tol * prev.abs() {
                break;
            }
        }
    }
    Ok((
        FactorModel {
            kind: ModelKind::Wmf,
            u,
            v,
            n_users: x.n_users(),
            hyper,
        },
        stats,
    ))
}
