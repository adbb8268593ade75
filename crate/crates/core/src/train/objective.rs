use crate::dense::DenseMatrix;
use crate::error::{mismatch, Error, Result};
use crate::gram::RegularizerKind;
use crate::parallel;
use crate::sparse::{sddmm, spmm, BinaryInteractionMatrix};
use crate::train::{Model, ModelKind};

/// `‖√W ⊙ (X − P)‖²_F + regularizer` without forming the dense prediction `P`.
///
/// Uses `‖√W ⊙ (X − P)‖² = ‖P‖² − 2⟨X, P⟩ + ‖X‖² + (α − 1)·Σ_{nnz}(1 − P_ui)²`,
/// with `‖P‖²` from a trace identity for the factor models and a
/// column-at-a-time pass for the full-rank model.
pub fn objective_value(
    x: &BinaryInteractionMatrix,
    model: &Model,
    alpha: f64,
    lambda: f64,
) -> Result<f64> {
    if model.n_items() != x.n_items() {
        return Err(mismatch("objective_value", x.n_items(), model.n_items()));
    }
    let nnz = x.nnz() as f64;
    let extra = alpha - 1.0;
    match model {
        Model::Factor(m) => {
            let (y, reg_user) = match m.kind {
                ModelKind::Wmf => {
                    if m.u.n_rows() != x.n_users() {
                        return Err(mismatch(
                            "objective_value (wmf U rows)",
                            x.n_users(),
                            m.u.n_rows(),
                        ));
                    }
                    (m.u.clone(), m.u.frobenius_sq())
                }
                _ => {
                    let y = spmm(x, &m.u)?;
                    let r = match m.kind.regularizer() {
                        Some(RegularizerKind::DataWeightDecay) => y.frobenius_sq(),
                        _ => m.u.frobenius_sq(),
                    };
                    (y, r)
                }
            };
            let vtv = m.v.gram();
            let yty = y.gram();
            let p_sq = yty.inner(&vtv);
            let s = sddmm(x, &y, &m.v)?;
            let x_dot_p = s.sum();
            let miss: f64 = s.values().iter().map(|p| (1.0 - p) * (1.0 - p)).sum();
            let data = p_sq - 2.0 * x_dot_p + nnz + extra * miss;
            let reg = match m.kind.regularizer() {
                Some(RegularizerKind::Dropout) => m.u.gram().inner(&vtv),
                Some(_) => reg_user + m.v.frobenius_sq(),
                None => {
                    return Err(Error::InvalidParameter(
                        "factor model without regularizer".into(),
                    ))
                }
            };
            Ok(data + lambda * reg)
        }
        Model::FullRank(m) => {
            let n = x.n_items();
            let b: &DenseMatrix = &m.b;
            // Per column j: y = X·b_j; contributes ‖y‖², Σ_{u∈col j} y_u and
            // Σ_{u∈col j} (1 − y_u)².
            let parts = parallel::map_range(n, |j| {
                let bj = b.column(j);
                let mut y_sq = 0.0;
                let mut y = vec![0.0; x.n_users()];
                for (u, yu) in y.iter_mut().enumerate() {
                    *yu = x.row(u).iter().map(|&i| bj[i]).sum();
                    y_sq += *yu * *yu;
                }
                let mut hit = 0.0;
                let mut miss = 0.0;
                for &u in x.col(j) {
                    hit += y[u];
                    miss += (1.0 - y[u]) * (1.0 - y[u]);
                }
                (y_sq, hit, miss)
            });
            let (p_sq, x_dot_p, miss) = parts
                .iter()
                .fold((0.0, 0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1, a.2 + p.2));
            Ok(p_sq - 2.0 * x_dot_p + nnz + extra * miss + lambda * b.frobenius_sq())
        }
    }
}
