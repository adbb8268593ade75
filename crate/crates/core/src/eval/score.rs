use serde::{Deserialize, Serialize};

use crate::dense::{row_major, DenseMatrix};
use crate::error::{mismatch, Result};
use crate::eval::{
    mean_and_stderr, ndcg_at_k, rank_top_k, recall_at_k, EvalSplit, Role, NDCG_CUTOFF,
    RECALL_CUTOFFS,
};
use crate::parallel;
use crate::train::{wmf_fold_in, Model, ModelKind};

/// Scores fold-in users against a trained model.
#[derive(Debug)]
pub struct Scorer<'m> {
    model: &'m Model,
    /// Row-major `U` for the asymmetric models.
    u_rows: Vec<f64>,
    vtv: Option<DenseMatrix>,
}

impl<'m> Scorer<'m> {
    pub fn new(model: &'m Model) -> Self {
        let (u_rows, vtv) = match model {
            Model::Factor(m) if m.kind == ModelKind::Wmf => (Vec::new(), Some(m.v.gram())),
            Model::Factor(m) => (row_major(&m.u), None),
            Model::FullRank(_) => (Vec::new(), None),
        };
        Self { model, u_rows, vtv }
    }

    pub fn n_items(&self) -> usize {
        self.model.n_items()
    }

    /// Scores for every item given the user's fold-in items. For the
    /// asymmetric and full-rank models this is `xᵀUVᵀ` or `xᵀB`; WMF first
    /// solves the user's weighted ridge fold-in.
    pub fn scores(&self, fold_in: &[usize]) -> Result<Vec<f64>> {
        let n = self.n_items();
        if let Some(&bad) = fold_in.iter().find(|&&i| i >= n) {
            return Err(mismatch("Scorer::scores", format!("item index < {n}"), bad));
        }
        match self.model {
            Model::FullRank(m) => Ok((0..n)
                .map(|j| {
                    let col = m.b.column(j);
                    fold_in.iter().map(|&i| col[i]).sum()
                })
                .collect()),
            Model::Factor(m) => {
                let d = m.v.n_cols();
                let user = match &self.vtv {
                    Some(vtv) => wmf_fold_in(&m.v, vtv, fold_in, m.hyper.alpha, m.hyper.lambda)?,
                    None => {
                        let mut acc = vec![0.0; d];
                        for &i in fold_in {
                            for (a, u) in acc.iter_mut().zip(&self.u_rows[i * d..(i + 1) * d]) {
                                *a += u;
                            }
                        }
                        acc
                    }
                };
                let mut out = vec![0.0; n];
                for (c, &uc) in user.iter().enumerate() {
                    if uc != 0.0 {
                        for (o, v) in out.iter_mut().zip(m.v.column(c)) {
                            *o += uc * v;
                        }
                    }
                }
                Ok(out)
            }
        }
    }
}

/// One-off scoring; build a [`Scorer`] when scoring many users.
pub fn score_user(model: &Model, fold_in: &[usize]) -> Result<Vec<f64>> {
    Scorer::new(model).scores(fold_in)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserMetrics {
    /// Row of the preprocessed matrix.
    pub user: usize,
    pub recall_at_20: f64,
    pub recall_at_50: f64,
    pub ndcg_at_100: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_users: usize,
    pub recall_at_20: f64,
    pub recall_at_50: f64,
    pub ndcg_at_100: f64,
    pub se_recall_20: f64,
    pub se_recall_50: f64,
    pub se_ndcg_100: f64,
    pub per_user: Vec<UserMetrics>,
}

/// Ranks every held-out user with `role` (users with an empty held-out set
/// are skipped) and aggregates Recall@20, Recall@50 and nDCG@100.
pub fn evaluate(model: &Model, split: &EvalSplit, role: Role) -> Result<EvalReport> {
    if model.n_items() != split.train.n_items() {
        return Err(mismatch("evaluate", split.train.n_items(), model.n_items()));
    }
    let scorer = Scorer::new(model);
    let users: Vec<_> = split
        .users(role)
        .iter()
        .filter(|h| !h.held_out.is_empty())
        .collect();
    let k_max = RECALL_CUTOFFS
        .iter()
        .copied()
        .chain([NDCG_CUTOFF])
        .max()
        .unwrap();
    let per_user = parallel::map_slice(&users, |h| -> Result<UserMetrics> {
        let scores = scorer.scores(&h.fold_in)?;
        let ranked = rank_top_k(&scores, &h.fold_in, k_max);
        Ok(UserMetrics {
            user: h.user,
            recall_at_20: recall_at_k(&ranked, &h.held_out, RECALL_CUTOFFS[0]),
            recall_at_50: recall_at_k(&ranked, &h.held_out, RECALL_CUTOFFS[1]),
            ndcg_at_100: ndcg_at_k(&ranked, &h.held_out, NDCG_CUTOFF),
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let column =
        |f: fn(&UserMetrics) -> f64| mean_and_stderr(&per_user.iter().map(f).collect::<Vec<_>>());
    let (r20, se20) = column(|m| m.recall_at_20);
    let (r50, se50) = column(|m| m.recall_at_50);
    let (nd, sen) = column(|m| m.ndcg_at_100);
    Ok(EvalReport {
        n_users: per_user.len(),
        recall_at_20: r20,
        recall_at_50: r50,
        ndcg_at_100: nd,
        se_recall_20: se20,
        se_recall_50: se50,
        se_ndcg_100: sen,
        per_user,
    })
}
