use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::gram::RegularizerKind;

/// The five compared models.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// `‖√W ⊙ (X − XUVᵀ)‖² + λ(‖U‖² + ‖V‖²)`
    #[serde(rename = "awmf-wd")]
    AwmfWeightDecay,
    /// `‖√W ⊙ (X − UVᵀ)‖² + λ(‖U‖² + ‖V‖²)` with free user factors.
    Wmf,
    /// `‖√W ⊙ (X − XUVᵀ)‖² + λ‖UVᵀ‖²`
    AwmfDropout,
    /// `‖√W ⊙ (X − XUVᵀ)‖² + λ(‖XU‖² + ‖V‖²)`
    #[serde(rename = "awmf-data-wd")]
    AwmfDataWeightDecay,
    /// `‖√W ⊙ (X − XB)‖² + λ‖B‖²`
    FullRank,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::AwmfWeightDecay,
        ModelKind::Wmf,
        ModelKind::AwmfDropout,
        ModelKind::AwmfDataWeightDecay,
        ModelKind::FullRank,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::AwmfWeightDecay => "awmf-wd",
            ModelKind::Wmf => "wmf",
            ModelKind::AwmfDropout => "awmf-dropout",
            ModelKind::AwmfDataWeightDecay => "awmf-data-wd",
            ModelKind::FullRank => "full-rank",
        }
    }

    /// Stable one-byte tag used in the model file header.
    pub fn tag(self) -> u8 {
        match self {
            ModelKind::AwmfWeightDecay => 1,
            ModelKind::Wmf => 2,
            ModelKind::AwmfDropout => 3,
            ModelKind::AwmfDataWeightDecay => 4,
            ModelKind::FullRank => 5,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.tag() == tag)
    }

    /// Regularizer of the factor models; `None` for the full-rank model.
    pub fn regularizer(self) -> Option<RegularizerKind> {
        match self {
            ModelKind::AwmfWeightDecay | ModelKind::Wmf => Some(RegularizerKind::WeightDecay),
            ModelKind::AwmfDropout => Some(RegularizerKind::Dropout),
            ModelKind::AwmfDataWeightDecay => Some(RegularizerKind::DataWeightDecay),
            ModelKind::FullRank => None,
        }
    }

    /// Whether predictions are `X·U·Vᵀ` (item-based user factors).
    pub fn is_asymmetric(self) -> bool {
        matches!(
            self,
            ModelKind::AwmfWeightDecay | ModelKind::AwmfDropout | ModelKind::AwmfDataWeightDecay
        )
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown model kind '{s}'")))
    }
}
