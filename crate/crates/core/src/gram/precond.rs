//! Preconditioners built from the unweighted (`W = 1`) Gram matrices.
//!
//! Each is a Kronecker product of at most two SPD blocks, applied through
//! `(A ⊗ B)⁻¹·vec(P) = vec(B⁻¹·P·A⁻¹)` with Cholesky solves; the
//! Kronecker product itself is never formed.

use std::sync::{Arc, Mutex};

use crate::dense::{DenseMatrix, SpdFactor};
use crate::error::Result;
use crate::gram::{FactorGramOpU, FactorGramOpV, FullRankGramOp, RegularizerKind};
use crate::pcg::Preconditioner;
use crate::sparse::{gram_dense, BinaryInteractionMatrix};

/// Relative diagonal shift that keeps the item block of the
/// data/weight-decay preconditioner factorizable when `XᵀX` is singular.
const DATA_DECAY_JITTER: f64 = 1e-6;

/// `XᵀX` plus memoized Cholesky factors of `XᵀX + sI` for the shifts seen so
/// far. Shared across the operators of one training run.
#[derive(Debug)]
pub struct ItemGram {
    gram: DenseMatrix,
    mean_diag: f64,
    factors: Mutex<Vec<(u64, Arc<SpdFactor>)>>,
}

impl ItemGram {
    pub fn new(x: &BinaryInteractionMatrix) -> Self {
        let gram = gram_dense(x);
        let n = gram.n_rows().max(1);
        let mean_diag = gram.trace() / n as f64;
        Self {
            gram,
            mean_diag,
            factors: Mutex::new(Vec::new()),
        }
    }

    pub fn gram(&self) -> &DenseMatrix {
        &self.gram
    }

    /// Cholesky factor of `XᵀX + shift·I`.
    pub fn shifted_factor(&self, shift: f64) -> Result<Arc<SpdFactor>> {
        let key = shift.to_bits();
        if let Some((_, f)) = self.factors.lock().unwrap().iter().find(|(k, _)| *k == key) {
            return Ok(Arc::clone(f));
        }
        let mut m = self.gram.clone();
        m.add_diagonal(shift);
        let f = Arc::new(SpdFactor::new(&m, "XᵀX + shift·I")?);
        let mut cache = self.factors.lock().unwrap();
        // Only the most recent few shifts are ever reused.
        if cache.len() >= 4 {
            cache.remove(0);
        }
        cache.push((key, Arc::clone(&f)));
        Ok(f)
    }
}

#[derive(Clone, Debug)]
pub enum GramPreconditioner {
    /// `I ⊗ K⁻¹`: every column of `P` is solved against `K`.
    Left { k: Arc<SpdFactor> },
    /// `G⁻¹ ⊗ K⁻¹`: `P ↦ K⁻¹·P·G⁻¹`.
    Kronecker { k: Arc<SpdFactor>, g: SpdFactor },
    /// `G⁻¹ ⊗ I`: `P ↦ P·G⁻¹`.
    Right { g: SpdFactor },
}

impl GramPreconditioner {
    /// `I ⊗ (XᵀX + λI)⁻¹`, exact for `W = 1`.
    pub fn full_rank(op: &FullRankGramOp<'_>, items: &ItemGram) -> Result<Self> {
        Ok(Self::Left {
            k: items.shifted_factor(op.lambda())?,
        })
    }

    /// Dropout: `(VᵀV)⁻¹ ⊗ (XᵀX + λI)⁻¹`, exact for `W = 1`.
    /// Weight decay: `(VᵀV)⁻¹ ⊗ (XᵀX + λcI)⁻¹` with `c = 1/mean(diag VᵀV)`.
    /// Data/weight decay: `(VᵀV + λI)⁻¹ ⊗ (XᵀX + δI)⁻¹`, exact up to the jitter `δ`.
    pub fn factor_u(op: &FactorGramOpU<'_>, items: &ItemGram) -> Result<Self> {
        let reg = op.regularizer();
        let vtv = op.vtv();
        match reg.kind {
            RegularizerKind::Dropout => Ok(Self::Kronecker {
                k: items.shifted_factor(reg.lambda)?,
                g: SpdFactor::new(vtv, "VᵀV")?,
            }),
            RegularizerKind::WeightDecay => {
                let d = vtv.n_rows().max(1) as f64;
                let mean = vtv.trace() / d;
                let c = if mean > 0.0 { 1.0 / mean } else { 1.0 };
                Ok(Self::Kronecker {
                    k: items.shifted_factor(reg.lambda * c)?,
                    g: SpdFactor::new(vtv, "VᵀV")?,
                })
            }
            RegularizerKind::DataWeightDecay => {
                let mut g = vtv.clone();
                g.add_diagonal(reg.lambda);
                let jitter = DATA_DECAY_JITTER * items.mean_diag.max(1.0);
                Ok(Self::Kronecker {
                    k: items.shifted_factor(jitter)?,
                    g: SpdFactor::new(&g, "VᵀV + λI")?,
                })
            }
        }
    }

    /// Dropout: `((XU)ᵀXU + λUᵀU)⁻¹ ⊗ I`; weight decay variants:
    /// `((XU)ᵀXU + λI)⁻¹ ⊗ I`. Both exact for `W = 1`.
    pub fn factor_v(op: &FactorGramOpV<'_>) -> Result<Self> {
        let reg = op.regularizer();
        let mut g = op.xu_gram().clone();
        match reg.kind {
            RegularizerKind::Dropout => g.add_scaled(reg.lambda, op.utu())?,
            RegularizerKind::WeightDecay | RegularizerKind::DataWeightDecay => {
                g.add_diagonal(reg.lambda)
            }
        }
        Ok(Self::Right {
            g: SpdFactor::new(&g, "(XU)ᵀXU + regularizer")?,
        })
    }
}

impl Preconditioner for GramPreconditioner {
    fn apply_inverse(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
        match self {
            Self::Left { k } => k.solve_columns(z),
            Self::Kronecker { k, g } => {
                k.solve_columns(z);
                let n = k.dim();
                let p = DenseMatrix::from_column_major(n, g.dim(), z.to_vec()).expect("shape");
                z.copy_from_slice(g.solve_right(&p).as_slice());
            }
            Self::Right { g } => {
                let n = r.len() / g.dim();
                let p = DenseMatrix::from_column_major(n, g.dim(), z.to_vec()).expect("shape");
                z.copy_from_slice(g.solve_right(&p).as_slice());
            }
        }
    }
}
