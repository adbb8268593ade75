//! Matrix-free regularized Gram operators for the weighted closed forms.
//!
//! Every weighted term is split using `W = 1 + (α − 1)·X`: a dense
//! unweighted part plus `(α − 1)` times a term evaluated only on the
//! nonzeros of `X` through the sampled product. `W` is never formed.

mod factor;
mod full_rank;
mod precond;

pub use factor::{rhs_factor_u, rhs_factor_v, FactorGramOpU, FactorGramOpV};
pub use full_rank::{
    rhs_full_rank, rhs_full_rank_column, rhs_full_rank_target, FullRankColumnOp, FullRankGramOp,
};
pub use precond::{GramPreconditioner, ItemGram};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The implicit weights `W = (α − 1)·X + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightScheme {
    alpha: f64,
}

impl WeightScheme {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be finite and >= 1, got {alpha}"
            )));
        }
        Ok(Self { alpha })
    }

    pub fn unweighted() -> Self {
        Self { alpha: 1.0 }
    }

    #[inline]
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `α − 1`, the extra weight on observed entries.
    #[inline]
    pub fn extra(&self) -> f64 {
        self.alpha - 1.0
    }

    #[inline]
    pub fn is_unweighted(&self) -> bool {
        self.alpha == 1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegularizerKind {
    /// `λ(‖U‖² + ‖V‖²)`
    WeightDecay,
    /// `λ‖UVᵀ‖²`
    Dropout,
    /// `λ(‖XU‖² + ‖V‖²)`
    DataWeightDecay,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regularizer {
    pub kind: RegularizerKind,
    pub lambda: f64,
}

impl Regularizer {
    pub fn new(kind: RegularizerKind, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(Self { kind, lambda })
    }
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    Ok(())
}
