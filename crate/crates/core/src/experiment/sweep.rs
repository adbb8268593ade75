use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport, EvalSplit, Role};
use crate::parallel;
use crate::train::{fit, ModelKind, TrainConfig};

/// Expansion bounds: `λ` grows ×100 up to `LAMBDA_CAP` and shrinks ÷100
/// down to `LAMBDA_FLOOR`; `α` doubles up to `ALPHA_CAP`.
pub const LAMBDA_CAP: f64 = 1e8;
pub const LAMBDA_FLOOR: f64 = 1e-8;
pub const ALPHA_CAP: f64 = 200.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub kind: ModelKind,
    pub rank: usize,
    pub alphas: Vec<f64>,
    pub lambdas: Vec<f64>,
    /// Extend the grid while the best cell sits on its boundary.
    pub expand: bool,
    /// Cells trained concurrently; `None` means all at once.
    pub workers: Option<usize>,
    pub train: TrainConfig,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.lambdas.is_empty() {
            return Err(Error::InvalidParameter(
                "sweep grids must be non-empty".into(),
            ));
        }
        if self.kind != ModelKind::FullRank && self.rank == 0 {
            return Err(Error::InvalidParameter(
                "rank must be >= 1 for factor models".into(),
            ));
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidParameter("workers must be >= 1".into()));
        }
        for &a in &self.alphas {
            crate::gram::WeightScheme::new(a)?;
        }
        for &l in &self.lambdas {
            if !(l.is_finite() && l >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "lambda must be finite and >= 0, got {l}"
                )));
            }
        }
        self.train.validate()
    }
}

/// The aggregate part of an [`EvalReport`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub n_users: usize,
    pub recall_at_20: f64,
    pub recall_at_50: f64,
    pub ndcg_at_100: f64,
    pub se_recall_20: f64,
    pub se_recall_50: f64,
    pub se_ndcg_100: f64,
}

impl From<&EvalReport> for MetricSummary {
    fn from(r: &EvalReport) -> Self {
        Self {
            n_users: r.n_users,
            recall_at_20: r.recall_at_20,
            recall_at_50: r.recall_at_50,
            ndcg_at_100: r.ndcg_at_100,
            se_recall_20: r.se_recall_20,
            se_recall_50: r.se_recall_50,
            se_ndcg_100: r.se_ndcg_100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub alpha: f64,
    pub lambda: f64,
    pub validation: Option<MetricSummary>,
    /// Present only on the selected cell.
    pub test: Option<MetricSummary>,
    pub error: Option<String>,
    pub selected: bool,
    pub pcg_iterations: usize,
    pub alternations: usize,
    pub warnings: Vec<String>,
    pub train_seconds: f64,
}

impl CellResult {
    fn score(&self) -> Option<f64> {
        self.validation
            .map(|v| v.ndcg_at_100)
            .filter(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub kind: ModelKind,
    /// `n_items` for the full-rank model.
    pub rank: usize,
    pub selection_metric: String,
    /// Cells ordered by `(alpha, lambda)`.
    pub cells: Vec<CellResult>,
    pub expansions: Vec<String>,
}

impl SweepResult {
    pub fn selected(&self) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.selected)
    }
}

fn sorted_unique(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn train_cell(
    split: &EvalSplit,
    spec: &SweepSpec,
    alpha: f64,
    lambda: f64,
) -> (CellResult, Option<crate::train::Model>) {
    let start = Instant::now();
    let mut cell = CellResult {
        alpha,
        lambda,
        validation: None,
        test: None,
        error: None,
        selected: false,
        pcg_iterations: 0,
        alternations: 0,
        warnings: Vec::new(),
        train_seconds: 0.0,
    };
    let outcome = fit(
        &split.train,
        spec.kind,
        spec.rank,
        alpha,
        lambda,
        &spec.train,
    )
    .and_then(|(model, stats)| {
        cell.pcg_iterations = stats.pcg_iterations;
        cell.alternations = stats.alternations;
        cell.warnings = stats.warnings;
        if !model.is_finite() {
            return Err(Error::NonFinite {
                iteration: stats.alternations,
                what: "model parameters",
            });
        }
        let val = evaluate(&model, split, Role::Val)?;
        Ok((model, val))
    });
    cell.train_seconds = start.elapsed().as_secs_f64();
    match outcome {
        Ok((model, val)) => {
            cell.validation = Some(MetricSummary::from(&val));
            (cell, Some(model))
        }
        Err(e) => {
            log::warn!("cell alpha={alpha} lambda={lambda} failed: {e}");
            cell.error = Some(e.to_string());
            (cell, None)
        }
    }
}

fn best_index(cells: &[CellResult]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, c) in cells.iter().enumerate() {
        if let Some(s) = c.score() {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((k, s));
            }
        }
    }
    best.map(|(k, _)| k)
}

/// Grid values to add when `best` lies on a boundary of an axis with at
/// least two values. Returns `(new alphas, new lambdas, reasons)`.
pub fn expand_grid_once(
    alphas: &[f64],
    lambdas: &[f64],
    best: (f64, f64),
) -> (Vec<f64>, Vec<f64>, Vec<String>) {
    let (alpha, lambda) = best;
    let mut new_a = Vec::new();
    let mut new_l = Vec::new();
    let mut why = Vec::new();
    if lambdas.len() >= 2 {
        let (lo, hi) = (lambdas[0], lambdas[lambdas.len() - 1]);
        if lambda == hi && hi * 100.0 <= LAMBDA_CAP && hi > 0.0 {
            new_l.push(hi * 100.0);
            why.push(format!(
                "lambda {} added: best cell at the upper lambda boundary",
                hi * 100.0
            ));
        }
        if lambda == lo && lo / 100.0 >= LAMBDA_FLOOR {
            new_l.push(lo / 100.0);
            why.push(format!(
                "lambda {} added: best cell at the lower lambda boundary",
                lo / 100.0
            ));
        }
    }
    if alphas.len() >= 2 {
        let hi = alphas[alphas.len() - 1];
        if alpha == hi && hi > 1.0 && hi * 2.0 <= ALPHA_CAP {
            new_a.push(hi * 2.0);
            why.push(format!(
                "alpha {} added: best cell at the largest alpha",
                hi * 2.0
            ));
        }
    }
    (new_a, new_l, why)
}

fn run_cells(split: &EvalSplit, spec: &SweepSpec, cells: &[(f64, f64)]) -> Vec<CellResult> {
    let batch = spec.workers.unwrap_or(cells.len()).max(1);
    let mut out = Vec::with_capacity(cells.len());
    for chunk in cells.chunks(batch) {
        out.extend(parallel::map_slice(chunk, |&(a, l)| {
            train_cell(split, spec, a, l).0
        }));
    }
    out
}

/// Trains one model per grid cell, scores each on validation users, expands
/// the grid while the best cell is on a boundary, and evaluates only the
/// selected cell on test users.
pub fn run_sweep(split: &EvalSplit, spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    if split.val.iter().all(|h| h.held_out.is_empty()) {
        return Err(Error::Empty(
            "no validation users with held-out items".into(),
        ));
    }
    let mut alphas = sorted_unique(&spec.alphas);
    let mut lambdas = sorted_unique(&spec.lambdas);
    let grid: Vec<(f64, f64)> = alphas
        .iter()
        .flat_map(|&a| lambdas.iter().map(move |&l| (a, l)))
        .collect();
    let mut cells = run_cells(split, spec, &grid);
    let mut expansions = Vec::new();

    while let Some(best) = best_index(&cells).filter(|_| spec.expand) {
        let (new_a, new_l, why) =
            expand_grid_once(&alphas, &lambdas, (cells[best].alpha, cells[best].lambda));
        if new_a.is_empty() && new_l.is_empty() {
            break;
        }
        expansions.extend(why);
        alphas = sorted_unique(&[alphas, new_a].concat());
        lambdas = sorted_unique(&[lambdas, new_l].concat());
        let todo: Vec<(f64, f64)> = alphas
            .iter()
            .flat_map(|&a| lambdas.iter().map(move |&l| (a, l)))
            .filter(|&(a, l)| !cells.iter().any(|c| c.alpha == a && c.lambda == l))
            .collect();
        cells.extend(run_cells(split, spec, &todo));
        cells.sort_by(|x, y| {
            x.alpha
                .total_cmp(&y.alpha)
                .then(x.lambda.total_cmp(&y.lambda))
        });
    }

    cells.sort_by(|x, y| {
        x.alpha
            .total_cmp(&y.alpha)
            .then(x.lambda.total_cmp(&y.lambda))
    });
    if let Some(best) = best_index(&cells) {
        let (a, l) = (cells[best].alpha, cells[best].lambda);
        // Retrain the winner; training is deterministic so this reproduces
        // the validated model without keeping every cell's model alive.
        let (_, model) = train_cell(split, spec, a, l);
        let cell = &mut cells[best];
        cell.selected = true;
        match model.map(|m| evaluate(&m, split, Role::Test)) {
            Some(Ok(test)) => cell.test = Some(MetricSummary::from(&test)),
            Some(Err(e)) => cell.error = Some(format!("test evaluation failed: {e}")),
            None => cell.error = Some("retraining the selected cell failed".into()),
        }
    }
    let rank = if spec.kind == ModelKind::FullRank {
        split.train.n_items()
    } else {
        spec.rank
    };
    Ok(SweepResult {
        kind: spec.kind,
        rank,
        selection_metric: "ndcg_at_100 (validation)".into(),
        cells,
        expansions,
    })
}

/// Best weighted (`α > 1`) and best unweighted (`α = 1`) sweeps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedResult {
    pub weighted: Option<SweepResult>,
    pub unweighted: SweepResult,
}

/// Runs the weighted grid (`alphas` without 1) and the `α = 1` grid
/// separately, matching the two rows reported per model.
pub fn run_paired(split: &EvalSplit, spec: &SweepSpec) -> Result<PairedResult> {
    let weighted_alphas: Vec<f64> = spec.alphas.iter().copied().filter(|&a| a != 1.0).collect();
    let weighted = if weighted_alphas.is_empty() {
        None
    } else {
        Some(run_sweep(
            split,
            &SweepSpec {
                alphas: weighted_alphas,
                ..spec.clone()
            },
        )?)
    };
    let unweighted = run_sweep(
        split,
        &SweepSpec {
            alphas: vec![1.0],
            ..spec.clone()
        },
    )?;
    Ok(PairedResult {
        weighted,
        unweighted,
    })
}
