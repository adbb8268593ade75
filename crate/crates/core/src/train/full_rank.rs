use crate::dense::{DenseMatrix, SpdFactor};
use crate::error::{mismatch, Error, Result};
use crate::gram::{
    rhs_full_rank_column, FullRankGramOp, GramPreconditioner, ItemGram, WeightScheme,
};
use crate::parallel;
use crate::pcg::{pcg_solve, IdentityPreconditioner, Preconditioner, SolveReport, SolverConfig};
use crate::sparse::BinaryInteractionMatrix;
use crate::train::{
    objective_value, validate_hyper, FullRankModel, Hyperparameters, Model, TrainConfig, TrainStats,
};

/// Fits `min_B ‖√W ⊙ (X − XB)‖² + λ‖B‖²`.
///
/// `H(B, λ)` is block diagonal over the columns of `B`, so the `n_items²`
/// system is solved as `n_items` independent PCG solves of size `n_items`,
/// in parallel, each preconditioned by `(XᵀX + λI)⁻¹`. With `α = 1` the
/// weighted term vanishes and one Cholesky solve of `(XᵀX + λI)B = XᵀX`
/// gives `B` directly.
pub fn train_full_rank(
    x: &BinaryInteractionMatrix,
    alpha: f64,
    lambda: f64,
    cfg: &TrainConfig,
) -> Result<(FullRankModel, TrainStats)> {
    validate_hyper(alpha, lambda)?;
    cfg.validate()?;
    let w = WeightScheme::new(alpha)?;
    let mut stats = TrainStats::default();
    if lambda == 0.0 {
        stats.warn(
            "full-rank fit with lambda = 0: the system is singular unless X has full column rank"
                .into(),
        );
    }

    let b = if w.is_unweighted() && !cfg.force_iterative {
        match direct_unweighted(x, lambda) {
            Ok(b) => b,
            Err(Error::NotPositiveDefinite(_)) => {
                stats.warn("XᵀX + λI is not positive definite; falling back to PCG".into());
                solve_columns(x, w, lambda, cfg, &mut stats, |j| {
                    rhs_full_rank_column(x, w, j)
                })?
            }
            Err(e) => return Err(e),
        }
    } else {
        solve_columns(x, w, lambda, cfg, &mut stats, |j| {
            rhs_full_rank_column(x, w, j)
        })?
    };

    let model = FullRankModel {
        b,
        n_users: x.n_users(),
        hyper: Hyperparameters {
            alpha,
            lambda,
            rank: x.n_items(),
            seed: cfg.init_seed,
        },
    };
    let obj = objective_value(x, &Model::FullRank(model.clone()), alpha, lambda)?;
    stats.objective_history.push(obj);
    stats.alternations = 1;
    Ok((model, stats))
}

/// Fits `min_B ‖√W ⊙ (T − XB)‖² + λ‖B‖²` for a dense target `T`, with `W`
/// still defined by `X`. Always solved iteratively.
pub fn train_full_rank_with_target(
    x: &BinaryInteractionMatrix,
    target: &DenseMatrix,
    alpha: f64,
    lambda: f64,
    cfg: &TrainConfig,
) -> Result<(FullRankModel, TrainStats)> {
    validate_hyper(alpha, lambda)?;
    cfg.validate()?;
    if target.shape() != (x.n_users(), x.n_items()) {
        return Err(mismatch(
            "train_full_rank_with_target",
            format!("{}x{}", x.n_users(), x.n_items()),
            format!("{:?}", target.shape()),
        ));
    }
    let w = WeightScheme::new(alpha)?;
    let mut stats = TrainStats::default();
    let rhs = crate::gram::rhs_full_rank_target(x, w, target)?;
    let b = solve_columns(x, w, lambda, cfg, &mut stats, |j| rhs.column(j).to_vec())?;
    Ok((
        FullRankModel {
            b,
            n_users: x.n_users(),
            hyper: Hyperparameters {
                alpha,
                lambda,
                rank: x.n_items(),
                seed: cfg.init_seed,
            },
        },
        stats,
    ))
}

fn direct_unweighted(x: &BinaryInteractionMatrix, lambda: f64) -> Result<DenseMatrix> {
    let items = ItemGram::new(x);
    let factor: std::sync::Arc<SpdFactor> = items.shifted_factor(lambda)?;
    Ok(factor.solve(items.gram()))
}

fn solve_columns<F>(
    x: &BinaryInteractionMatrix,
    w: WeightScheme,
    lambda: f64,
    cfg: &TrainConfig,
    stats: &mut TrainStats,
    rhs_column: F,
) -> Result<DenseMatrix>
where
    F: Fn(usize) -> Vec<f64> + Sync + Send,
{
    let n = x.n_items();
    let op = FullRankGramOp::new(x, w, lambda)?;
    let precond: Box<dyn Preconditioner> = if cfg.precondition {
        let items = ItemGram::new(x);
        match GramPreconditioner::full_rank(&op, &items) {
            Ok(p) => Box::new(p),
            Err(e) => {
                stats.warn(format!(
                    "full-rank preconditioner unavailable ({e}); using identity"
                ));
                Box::new(IdentityPreconditioner)
            }
        }
    } else {
        Box::new(IdentityPreconditioner)
    };

    let results: Vec<Result<(Vec<f64>, SolveReport)>> = parallel::map_range(n, |j| {
        let b = rhs_column(j);
        let solver = SolverConfig::relative(cfg.rel_tol, &b, cfg.max_iter)?;
        pcg_solve(
            &op.column_op(j),
            precond.as_ref(),
            &b,
            &vec![0.0; n],
            &solver,
        )
    });

    let mut out = DenseMatrix::zeros(n, n);
    for (j, res) in results.into_iter().enumerate() {
        let (col, report) = res?;
        stats.record(|| format!("column {j}"), &report);
        out.column_mut(j).copy_from_slice(&col);
    }
    if !stats.unconverged.is_empty() {
        let worst = stats
            .unconverged
            .iter()
            .map(|(_, r)| *r)
            .fold(0.0, f64::max);
        stats.warn(format!(
            "{} of {n} column solves hit the iteration cap (worst residual {worst:e})",
            stats.unconverged.len()
        ));
    }
    Ok(out)
}
