//! Experiment configuration: a sectioned TOML file, overridable from flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use wmf_lab_core::eval::{SplitSpec, Subsample};
use wmf_lab_core::experiment::{InputFormat, ReportFormat};
use wmf_lab_core::train::{ModelKind, TrainConfig};

/// Base sweep grid.
pub const DEFAULT_ALPHAS: [f64; 5] = [1.0, 2.0, 5.0, 10.0, 20.0];
pub const DEFAULT_LAMBDAS: [f64; 5] = [1e-4, 1e-2, 1.0, 100.0, 1e4];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub path: Option<PathBuf>,
    pub format: InputFormat,
    pub error_budget: usize,
    pub max_users: Option<usize>,
    pub max_items: Option<usize>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            path: None,
            format: InputFormat::MovieLens,
            error_budget: 0,
            max_users: None,
            max_items: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub n_heldout_users_val: Option<usize>,
    pub n_heldout_users_test: Option<usize>,
    pub fold_in_fraction: f64,
    pub rating_threshold: f64,
    pub min_user_interactions: usize,
    /// Reuse a previously written split instead of drawing one.
    pub manifest: Option<PathBuf>,
}

impl Default for SplitSection {
    fn default() -> Self {
        let s = SplitSpec::default();
        Self {
            n_heldout_users_val: s.n_heldout_users_val,
            n_heldout_users_test: s.n_heldout_users_test,
            fold_in_fraction: s.fold_in_fraction,
            rating_threshold: s.rating_threshold,
            min_user_interactions: s.min_user_interactions,
            manifest: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub rank: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            kind: ModelKind::FullRank,
            rank: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub alpha: Vec<f64>,
    pub lambda: Vec<f64>,
    pub expand: bool,
    /// Sweep the weighted grid and `alpha = 1` separately (two rows per model).
    pub paired: bool,
    pub workers: Option<usize>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHAS.to_vec(),
            lambda: DEFAULT_LAMBDAS.to_vec(),
            expand: true,
            paired: false,
            workers: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub n_alternations: usize,
    pub objective_tol: f64,
    pub rel_tol: f64,
    pub max_iter: Option<usize>,
    pub precondition: bool,
    pub force_iterative: bool,
    pub init_scale: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            n_alternations: t.n_alternations,
            objective_tol: t.objective_tol,
            rel_tol: t.rel_tol,
            max_iter: t.max_iter,
            precondition: t.precondition,
            force_iterative: t.force_iterative,
            init_scale: t.init_scale,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
    pub out: PathBuf,
    pub format: ReportFormat,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: 0,
            out: PathBuf::from("wmf-lab-out"),
            format: ReportFormat::Csv,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSection,
    pub split: SplitSection,
    pub model: ModelSection,
    pub sweep: SweepSection,
    pub solver: SolverSection,
    pub run: RunSection,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweep.alpha.is_empty() || self.sweep.lambda.is_empty() {
            bail!("sweep grids must be non-empty");
        }
        if self.model.kind != ModelKind::FullRank && self.model.rank == 0 {
            bail!("rank must be >= 1 for factor models");
        }
        self.split_spec().validate()?;
        self.train_config().validate()?;
        Ok(())
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            n_heldout_users_val: self.split.n_heldout_users_val,
            n_heldout_users_test: self.split.n_heldout_users_test,
            fold_in_fraction: self.split.fold_in_fraction,
            rating_threshold: if self.data.format.is_binary() {
                f64::NEG_INFINITY
            } else {
                self.split.rating_threshold
            },
            min_user_interactions: self.split.min_user_interactions,
            seed: self.run.seed,
        }
    }

    pub fn subsample(&self) -> Subsample {
        Subsample {
            max_users: self.data.max_users,
            max_items: self.data.max_items,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let s = &self.solver;
        TrainConfig {
            n_alternations: s.n_alternations,
            objective_tol: s.objective_tol,
            rel_tol: s.rel_tol,
            max_iter: s.max_iter,
            precondition: s.precondition,
            force_iterative: s.force_iterative,
            init_seed: self.run.seed,
            init_scale: s.init_scale,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// `section.key = value` pairs for every setting, defaults included.
    pub fn settings(&self) -> Result<Vec<(String, String)>> {
        let value = toml::Value::try_from(self)?;
        let mut out = Vec::new();
        if let toml::Value::Table(sections) = value {
            for (section, body) in sections {
                if let toml::Value::Table(keys) = body {
                    for (k, v) in keys {
                        out.push((format!("{section}.{k}"), v.to_string()));
                    }
                }
            }
        }
        Ok(out)
    }
}
