use crate::dense::DenseMatrix;
use crate::error::{mismatch, Result};
use crate::gram::{Regularizer, RegularizerKind, WeightScheme};
use crate::pcg::LinearOperator;
use crate::sparse::{sddmm, spmm, spmm_t, BinaryInteractionMatrix};

/// Gram operator of the `U` sub-problem with `V` fixed:
/// `(V ⊗ X)ᵀ·W̄·(V ⊗ X) + R`, where `R` is `λ(VᵀV ⊗ I)` for dropout,
/// `λI` for weight decay and `λ(I ⊗ XᵀX)` for data/weight decay.
#[derive(Clone, Debug)]
pub struct FactorGramOpU<'a> {
    x: &'a BinaryInteractionMatrix,
    v: &'a DenseMatrix,
    weight: WeightScheme,
    reg: Regularizer,
    vtv: DenseMatrix,
}

impl<'a> FactorGramOpU<'a> {
    pub fn new(
        x: &'a BinaryInteractionMatrix,
        v: &'a DenseMatrix,
        weight: WeightScheme,
        reg: Regularizer,
    ) -> Result<Self> {
        if v.n_rows() != x.n_items() {
            return Err(mismatch(
                "FactorGramOpU::new",
                format!("V with {} rows", x.n_items()),
                v.n_rows(),
            ));
        }
        Regularizer::new(reg.kind, reg.lambda)?;
        Ok(Self {
            x,
            v,
            weight,
            reg,
            vtv: v.gram(),
        })
    }

    pub fn rank(&self) -> usize {
        self.v.n_cols()
    }

    pub fn matrix(&self) -> &'a BinaryInteractionMatrix {
        self.x
    }

    pub fn regularizer(&self) -> Regularizer {
        self.reg
    }

    pub fn vtv(&self) -> &DenseMatrix {
        &self.vtv
    }

    /// `Xᵀ(W ⊙ (XPVᵀ))V + R(P)` for `P` shaped like `U` (`n_items × d`).
    pub fn apply(&self, p: &DenseMatrix) -> Result<DenseMatrix> {
        let (n, d) = (self.x.n_items(), self.rank());
        if p.shape() != (n, d) {
            return Err(mismatch(
                "FactorGramOpU::apply",
                format!("{n}x{d}"),
                format!("{:?}", p.shape()),
            ));
        }
        let y = spmm(self.x, p)?;
        let xty = spmm_t(self.x, &y)?;
        let mut out = xty.matmul(&self.vtv)?;
        if !self.weight.is_unweighted() {
            let s = sddmm(self.x, &y, self.v)?;
            let sv = s.mul_dense(self.v)?;
            out.add_scaled(self.weight.extra(), &spmm_t(self.x, &sv)?)?;
        }
        let lambda = self.reg.lambda;
        if lambda != 0.0 {
            match self.reg.kind {
                RegularizerKind::Dropout => out.add_scaled(lambda, &p.matmul(&self.vtv)?)?,
                RegularizerKind::WeightDecay => out.add_scaled(lambda, p)?,
                RegularizerKind::DataWeightDecay => out.add_scaled(lambda, &xty)?,
            }
        }
        Ok(out)
    }
}

impl LinearOperator for FactorGramOpU<'_> {
    fn dim(&self) -> usize {
        self.x.n_items() * self.rank()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let p = DenseMatrix::from_column_major(self.x.n_items(), self.rank(), x.to_vec())
            .expect("length checked by caller");
        let out = FactorGramOpU::apply(self, &p).expect("shape fixed at construction");
        y.copy_from_slice(out.as_slice());
    }
}

/// Gram operator of the `V` sub-problem with `U` fixed:
/// `(XU ⊗ I)ᵀ·Ŵ·(XU ⊗ I) + R`, where `R` is `λ(UᵀU ⊗ I)` for dropout and
/// `λI` for the two weight-decay variants.
#[derive(Clone, Debug)]
pub struct FactorGramOpV<'a> {
    x: &'a BinaryInteractionMatrix,
    u: &'a DenseMatrix,
    weight: WeightScheme,
    reg: Regularizer,
    xu: DenseMatrix,
    xu_gram: DenseMatrix,
    utu: DenseMatrix,
}

impl<'a> FactorGramOpV<'a> {
    pub fn new(
        x: &'a BinaryInteractionMatrix,
        u: &'a DenseMatrix,
        weight: WeightScheme,
        reg: Regularizer,
    ) -> Result<Self> {
        if u.n_rows() != x.n_items() {
            return Err(mismatch(
                "FactorGramOpV::new",
                format!("U with {} rows", x.n_items()),
                u.n_rows(),
            ));
        }
        Regularizer::new(reg.kind, reg.lambda)?;
        let xu = spmm(x, u)?;
        let xu_gram = xu.gram();
        Ok(Self {
            x,
            u,
            weight,
            reg,
            xu,
            xu_gram,
            utu: u.gram(),
        })
    }

    pub fn rank(&self) -> usize {
        self.u.n_cols()
    }

    pub fn regularizer(&self) -> Regularizer {
        self.reg
    }

    /// `XU`, the implied user embeddings.
    pub fn xu(&self) -> &DenseMatrix {
        &self.xu
    }

    /// `(XU)ᵀ(XU)`.
    pub fn xu_gram(&self) -> &DenseMatrix {
        &self.xu_gram
    }

    pub fn utu(&self) -> &DenseMatrix {
        &self.utu
    }

    /// `(Wᵀ ⊙ (P(XU)ᵀ))·XU + R(P)` for `P` shaped like `V` (`n_items × d`).
    pub fn apply(&self, p: &DenseMatrix) -> Result<DenseMatrix> {
        let (n, d) = (self.x.n_items(), self.rank());
        if p.shape() != (n, d) {
            return Err(mismatch(
                "FactorGramOpV::apply",
                format!("{n}x{d}"),
                format!("{:?}", p.shape()),
            ));
        }
        let mut out = p.matmul(&self.xu_gram)?;
        if !self.weight.is_unweighted() {
            let s = sddmm(self.x, &self.xu, p)?;
            out.add_scaled(self.weight.extra(), &s.t_mul_dense(&self.xu)?)?;
        }
        let lambda = self.reg.lambda;
        if lambda != 0.0 {
            match self.reg.kind {
                RegularizerKind::Dropout => out.add_scaled(lambda, &p.matmul(&self.utu)?)?,
                RegularizerKind::WeightDecay | RegularizerKind::DataWeightDecay => {
                    out.add_scaled(lambda, p)?
                }
            }
        }
        Ok(out)
    }
}

impl LinearOperator for FactorGramOpV<'_> {
    fn dim(&self) -> usize {
        self.x.n_items() * self.rank()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let p = DenseMatrix::from_column_major(self.x.n_items(), self.rank(), x.to_vec())
            .expect("length checked by caller");
        let out = FactorGramOpV::apply(self, &p).expect("shape fixed at construction");
        y.copy_from_slice(out.as_slice());
    }
}

/// `Xᵀ(W ⊙ X)V = α·XᵀX·V`.
pub fn rhs_factor_u(
    x: &BinaryInteractionMatrix,
    v: &DenseMatrix,
    w: WeightScheme,
) -> Result<DenseMatrix> {
    Ok(spmm_t(x, &spmm(x, v)?)?.scaled(w.alpha()))
}

/// `(Wᵀ ⊙ Xᵀ)XU = α·XᵀX·U`.
pub fn rhs_factor_v(
    x: &BinaryInteractionMatrix,
    u: &DenseMatrix,
    w: WeightScheme,
) -> Result<DenseMatrix> {
    rhs_factor_u(x, u, w)
}
