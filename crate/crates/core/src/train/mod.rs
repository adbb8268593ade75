//! Model fitting for the five compared models.

mod awmf;
mod full_rank;
mod io;
mod kind;
mod objective;
mod wmf;

pub use awmf::{awmf_update_u, awmf_update_v, train_awmf, StepOutcome};
pub use full_rank::{train_full_rank, train_full_rank_with_target};
pub use io::{load_model, metadata_text, read_model, save_model, write_model};
pub use kind::ModelKind;
pub use objective::objective_value;
pub use wmf::{train_wmf, wmf_fold_in, wmf_row_solve, wmf_update_items, wmf_update_users};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::pcg::{pcg_solve, LinearOperator, Preconditioner, SolveReport, SolverConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub alpha: f64,
    pub lambda: f64,
    /// Latent dimension; `n_items` for the full-rank model.
    pub rank: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FactorModel {
    pub kind: ModelKind,
    /// `n_items × d` for the AWMF kinds, `n_users × d` for WMF.
    pub u: DenseMatrix,
    /// `n_items × d`.
    pub v: DenseMatrix,
    /// Number of training users.
    pub n_users: usize,
    pub hyper: Hyperparameters,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FullRankModel {
    /// `n_items × n_items` item-item weights; predictions are `X·B`.
    pub b: DenseMatrix,
    pub n_users: usize,
    pub hyper: Hyperparameters,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Factor(FactorModel),
    FullRank(FullRankModel),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Factor(m) => m.kind,
            Model::FullRank(_) => ModelKind::FullRank,
        }
    }

    pub fn hyper(&self) -> &Hyperparameters {
        match self {
            Model::Factor(m) => &m.hyper,
            Model::FullRank(m) => &m.hyper,
        }
    }

    pub fn n_items(&self) -> usize {
        match self {
            Model::Factor(m) => m.v.n_rows(),
            Model::FullRank(m) => m.b.n_rows(),
        }
    }

    pub fn n_users(&self) -> usize {
        match self {
            Model::Factor(m) => m.n_users,
            Model::FullRank(m) => m.n_users,
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Model::Factor(m) => m.u.is_finite() && m.v.is_finite(),
            Model::FullRank(m) => m.b.is_finite(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Outer `U`/`V` sweeps for the factor models.
    pub n_alternations: usize,
    /// Stop once an alternation lowers the objective by less than this
    /// fraction; `0` runs all `n_alternations`.
    pub objective_tol: f64,
    /// Per-solve PCG tolerance relative to `‖b‖₂`.
    pub rel_tol: f64,
    /// PCG iteration cap; defaults to the system dimension.
    pub max_iter: Option<usize>,
    /// Use the unweighted Gram preconditioners (identity otherwise).
    pub precondition: bool,
    /// Skip the direct `α = 1` full-rank solve and always run PCG.
    pub force_iterative: bool,
    pub init_seed: u64,
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_alternations: 20,
            objective_tol: 1e-4,
            rel_tol: 1e-6,
            max_iter: None,
            precondition: true,
            force_iterative: false,
            init_seed: 0,
            init_scale: 0.1,
        }
    }
}

impl TrainConfig {
    /// Tight settings for verification runs.
    pub fn strict() -> Self {
        Self {
            rel_tol: 1e-8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_alternations == 0 {
            return Err(Error::InvalidParameter(
                "n_alternations must be >= 1".into(),
            ));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidParameter("rel_tol must be > 0".into()));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(Error::InvalidParameter(
                "init_scale must be finite and > 0".into(),
            ));
        }
        if self.objective_tol < 0.0 {
            return Err(Error::InvalidParameter("objective_tol must be >= 0".into()));
        }
        Ok(())
    }
}

/// What happened during a fit.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    /// Objective after each alternation (a single entry for the full-rank model).
    pub objective_history: Vec<f64>,
    pub alternations: usize,
    pub pcg_solves: usize,
    pub pcg_iterations: usize,
    /// `(solve label, final residual norm)` for solves that hit the iteration cap.
    pub unconverged: Vec<(String, f64)>,
    pub warnings: Vec<String>,
}

impl TrainStats {
    fn record(&mut self, label: impl FnOnce() -> String, report: &SolveReport) {
        self.pcg_solves += 1;
        self.pcg_iterations += report.iterations_used;
        if !report.converged {
            self.unconverged.push((label(), report.final_residual_norm));
        }
    }

    fn warn(&mut self, msg: String) {
        log::warn!("{msg}");
        self.warnings.push(msg);
    }
}

pub(crate) fn validate_hyper(alpha: f64, lambda: f64) -> Result<()> {
    crate::gram::WeightScheme::new(alpha)?;
    crate::gram::check_lambda(lambda)
}

/// Zero-mean Gaussian `n × d` matrix with standard deviation `scale/√d`.
pub(crate) fn gaussian_init(n: usize, d: usize, scale: f64, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, scale / (d as f64).sqrt()).expect("positive std");
    DenseMatrix::from_fn(n, d, |_, _| normal.sample(&mut rng))
}

/// One PCG solve of `op · vec(X) = vec(rhs)` warm-started from `warm`.
pub(crate) fn solve_block(
    op: &dyn LinearOperator,
    precond: &dyn Preconditioner,
    rhs: &DenseMatrix,
    warm: &DenseMatrix,
    cfg: &TrainConfig,
) -> Result<(DenseMatrix, SolveReport)> {
    let solver = SolverConfig::relative(cfg.rel_tol, rhs.as_slice(), cfg.max_iter)?;
    let (x, report) = pcg_solve(op, precond, rhs.as_slice(), warm.as_slice(), &solver)?;
    Ok((
        DenseMatrix::from_column_major(rhs.n_rows(), rhs.n_cols(), x)?,
        report,
    ))
}

/// Trains any of the five models. `rank` is ignored by the full-rank model.
pub fn fit(
    x: &crate::sparse::BinaryInteractionMatrix,
    kind: ModelKind,
    rank: usize,
    alpha: f64,
    lambda: f64,
    cfg: &TrainConfig,
) -> Result<(Model, TrainStats)> {
    match kind {
        ModelKind::FullRank => {
            train_full_rank(x, alpha, lambda, cfg).map(|(m, s)| (Model::FullRank(m), s))
        }
        ModelKind::Wmf => {
            train_wmf(x, rank, alpha, lambda, cfg).map(|(m, s)| (Model::Factor(m), s))
        }
        kind => train_awmf(x, kind, rank, alpha, lambda, cfg).map(|(m, s)| (Model::Factor(m), s)),
    }
}
