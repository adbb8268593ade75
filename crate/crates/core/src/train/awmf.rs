use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::gram::{
    rhs_factor_u, rhs_factor_v, FactorGramOpU, FactorGramOpV, GramPreconditioner, ItemGram,
    Regularizer, RegularizerKind, WeightScheme,
};
use crate::pcg::{IdentityPreconditioner, Preconditioner, SolveReport};
use crate::sparse::BinaryInteractionMatrix;
use crate::train::{
    gaussian_init, objective_value, solve_block, validate_hyper, FactorModel, Hyperparameters,
    Model, ModelKind, TrainConfig, TrainStats,
};

/// Slack for the monotone-objective check: relative part plus an absolute
/// floor for the cancellation error of the trace-identity objective.
const INCREASE_REL_SLACK: f64 = 1e-10;
const INCREASE_ABS_SLACK: f64 = 1e-12;

/// Alternating minimization for the asymmetric models (predictions `XUVᵀ`).
///
/// `V` starts Gaussian; each alternation solves the `U` sub-problem exactly
/// (up to the PCG tolerance) with `V` fixed, then the `V` sub-problem with
/// `U` fixed, each warm-started from the previous iterate.
pub fn train_awmf(
    x: &BinaryInteractionMatrix,
    kind: ModelKind,
    d: usize,
    alpha: f64,
    lambda: f64,
    cfg: &TrainConfig,
) -> Result<(FactorModel, TrainStats)> {
    let reg_kind = match (kind.is_asymmetric(), kind.regularizer()) {
        (true, Some(r)) => r,
        _ => {
            return Err(Error::InvalidParameter(format!(
                "{kind} is not an asymmetric factor model"
            )))
        }
    };
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
        stats.warn(format!(
            "{kind} with lambda = 0: sub-problems are singular if V, X or XU lose column rank"
        ));
    }

    let n = x.n_items();
    let items = cfg.precondition.then(|| ItemGram::new(x));
    let mut v = gaussian_init(n, d, cfg.init_scale, cfg.init_seed);
    let mut u = DenseMatrix::zeros(n, d);
    let objective = |u: &DenseMatrix, v: &DenseMatrix| -> Result<f64> {
        objective_value(
            x,
            &Model::Factor(FactorModel {
                kind,
                u: u.clone(),
                v: v.clone(),
                n_users: x.n_users(),
                hyper: Hyperparameters {
                    alpha,
                    lambda,
                    rank: d,
                    seed: cfg.init_seed,
                },
            }),
            alpha,
            lambda,
        )
    };
    let abs_slack = INCREASE_ABS_SLACK * alpha * x.nnz() as f64;

    for it in 0..cfg.n_alternations {
        let (u_next, rep, warn) =
            awmf_update_u(x, &v, &u, reg_kind, alpha, lambda, items.as_ref(), cfg)?;
        if let Some(w) = warn {
            stats.warn(format!("alternation {it}: {w}"));
        }
        stats.record(|| format!("alternation {it} U"), &rep);
        u = u_next;

        let (v_next, rep, warn) = awmf_update_v(x, &u, &v, reg_kind, alpha, lambda, cfg)?;
        if let Some(w) = warn {
            stats.warn(format!("alternation {it}: {w}"));
        }
        stats.record(|| format!("alternation {it} V"), &rep);
        v = v_next;

        let obj = objective(&u, &v)?;
        if !obj.is_finite() {
            return Err(Error::NonFinite {
                iteration: it,
                what: "objective",
            });
        }
        stats.alternations = it + 1;
        let prev = stats.objective_history.last().copied();
        stats.objective_history.push(obj);
        if let Some(prev) = prev {
            if obj > prev + INCREASE_REL_SLACK * prev.abs() + abs_slack {
                stats.warn(format!(
                    "objective increased at alternation {it}: {prev:.12e} -> {obj:.12e}; tighten the solver tolerance"
                ));
            }
            if cfg.objective_tol > 0.0 && prev - obj < cfg.objective_tol * prev.abs() {
                break;
            }
        }
    }

    Ok((
        FactorModel {
            kind,
            u,
            v,
            n_users: x.n_users(),
            hyper: Hyperparameters {
                alpha,
                lambda,
                rank: d,
                seed: cfg.init_seed,
            },
        },
        stats,
    ))
}

/// Result of one sub-solve: the new block, its PCG report and, when the
/// unweighted-Gram preconditioner could not be built, the reason.
pub type StepOutcome = (DenseMatrix, SolveReport, Option<String>);

/// Solves the `U` sub-problem with `V` fixed, warm-started from `warm`.
///
/// `items` carries the cached `XᵀX` factorizations; `None` (or
/// `cfg.precondition == false`) selects the identity preconditioner.
#[allow(clippy::too_many_arguments)]
pub fn awmf_update_u(
    x: &BinaryInteractionMatrix,
    v: &DenseMatrix,
    warm: &DenseMatrix,
    reg_kind: RegularizerKind,
    alpha: f64,
    lambda: f64,
    items: Option<&ItemGram>,
    cfg: &TrainConfig,
) -> Result<StepOutcome> {
    let w = WeightScheme::new(alpha)?;
    let op = FactorGramOpU::new(x, v, w, Regularizer::new(reg_kind, lambda)?)?;
    let rhs = rhs_factor_u(x, v, w)?;
    let mut warning = None;
    let pre: Box<dyn Preconditioner> = match items.filter(|_| cfg.precondition) {
        Some(items) => match GramPreconditioner::factor_u(&op, items) {
            Ok(p) => Box::new(p),
            Err(e) => {
                warning = Some(format!(
                    "U preconditioner unavailable ({e}); using identity"
                ));
                Box::new(IdentityPreconditioner)
            }
        },
        None => Box::new(IdentityPreconditioner),
    };
    let (u, rep) = solve_block(&op, pre.as_ref(), &rhs, warm, cfg)?;
    Ok((u, rep, warning))
}

/// Solves the `V` sub-problem with `U` fixed, warm-started from `warm`.
pub fn awmf_update_v(
    x: &BinaryInteractionMatrix,
    u: &DenseMatrix,
    warm: &DenseMatrix,
    reg_kind: RegularizerKind,
    alpha: f64,
    lambda: f64,
    cfg: &TrainConfig,
) -> Result<StepOutcome> {
    let w = WeightScheme::new(alpha)?;
    let op = FactorGramOpV::new(x, u, w, Regularizer::new(reg_kind, lambda)?)?;
    let rhs = rhs_factor_v(x, u, w)?;
    let mut warning = None;
    let pre: Box<dyn Preconditioner> = if cfg.precondition {
        match GramPreconditioner::factor_v(&op) {
            Ok(p) => Box::new(p),
            Err(e) => {
                warning = Some(format!(
                    "V preconditioner unavailable ({e}); using identity"
                ));
                Box::new(IdentityPreconditioner)
            }
        }
    } else {
        Box::new(IdentityPreconditioner)
    };
    let (v, rep) = solve_block(&op, pre.as_ref(), &rhs, warm, cfg)?;
    Ok((v, rep, warning))
}
