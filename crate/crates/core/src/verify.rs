//! End-to-end oracle suite behind the `verify` command: small random
//! instances checked against the dense references.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dense::{relative_error, DenseMatrix};
use crate::error::{Error, Result};
use crate::eval::{mean_and_stderr, ndcg_at_k, recall_at_k, RankedList};
use crate::gram::{
    rhs_factor_u, rhs_factor_v, rhs_full_rank, FactorGramOpU, FactorGramOpV, FullRankGramOp,
    ItemGram, Regularizer, RegularizerKind, WeightScheme,
};
use crate::oracle::{
    dense_closed_form, dense_gram_assemble, dense_objective, dense_rhs, finite_difference_gradient,
    middle_gram_direct, middle_gram_kronecker, outer_gram_direct, outer_gram_kronecker,
    random_full_column_rank, random_uniform, DenseProblem, Point, Side, FD_STEP,
};
use crate::pcg::{pcg_solve, DenseOperator, IdentityPreconditioner, SolverConfig};
use crate::sparse::BinaryInteractionMatrix;
use crate::train::{
    awmf_update_u, awmf_update_v, fit, train_full_rank, wmf_update_items, wmf_update_users, Model,
    ModelKind, TrainConfig,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckGroup {
    Operators,
    ClosedForms,
    Stationarity,
    Metrics,
    Pcg,
}

impl CheckGroup {
    pub const ALL: [CheckGroup; 5] = [
        CheckGroup::Operators,
        CheckGroup::ClosedForms,
        CheckGroup::Stationarity,
        CheckGroup::Metrics,
        CheckGroup::Pcg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckGroup::Operators => "operators",
            CheckGroup::ClosedForms => "closed-forms",
            CheckGroup::Stationarity => "stationarity",
            CheckGroup::Metrics => "metrics",
            CheckGroup::Pcg => "pcg",
        }
    }
}

impl fmt::Display for CheckGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CheckGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CheckGroup::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown check group {s:?}")))
    }
}

/// Deliberate defects the suite must catch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Mutation {
    #[default]
    None,
    /// Negate the output of the `V`-side Gram operator.
    FlipFactorV,
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    /// Groups to run; empty runs all.
    pub groups: Vec<CheckGroup>,
    pub seed: u64,
    /// Random instances per check.
    pub instances: usize,
    pub mutation: Mutation,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            groups: Vec::new(),
            seed: 0,
            instances: 20,
            mutation: Mutation::None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub group: CheckGroup,
    pub name: String,
    pub cases: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckOutcome>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn render_table(&self) -> String {
        let mut s = format!(
            "{:<13} {:<44} {:>6} {:>11} {:>9}  {}\n",
            "group", "check", "cases", "max error", "tol", "result"
        );
        for c in &self.checks {
            s.push_str(&format!(
                "{:<13} {:<44} {:>6} {:>11.3e} {:>9.0e}  {}{}\n",
                c.group.name(),
                c.name,
                c.cases,
                c.max_error,
                c.tolerance,
                if c.passed { "pass" } else { "FAIL" },
                c.detail
                    .as_deref()
                    .map(|d| format!(" ({d})"))
                    .unwrap_or_default()
            ));
        }
        s
    }
}

/// Tracks the worst error over a check's cases; any error fails it.
struct Tally {
    group: CheckGroup,
    name: String,
    tolerance: f64,
    cases: usize,
    max_error: f64,
    failure: Option<String>,
}

impl Tally {
    fn new(group: CheckGroup, name: impl Into<String>, tolerance: f64) -> Self {
        Self {
            group,
            name: name.into(),
            tolerance,
            cases: 0,
            max_error: 0.0,
            failure: None,
        }
    }

    fn record(&mut self, outcome: Result<f64>) {
        self.cases += 1;
        match outcome {
            Ok(e) if e.is_nan() => {
                self.max_error = f64::INFINITY;
                self.failure.get_or_insert_with(|| "NaN error".into());
            }
            Ok(e) => self.max_error = self.max_error.max(e),
            Err(e) => {
                self.max_error = f64::INFINITY;
                self.failure.get_or_insert_with(|| e.to_string());
            }
        }
    }

    fn finish(self) -> CheckOutcome {
        CheckOutcome {
            passed: self.failure.is_none() && self.max_error <= self.tolerance,
            group: self.group,
            name: self.name,
            cases: self.cases,
            max_error: self.max_error,
            tolerance: self.tolerance,
            detail: self.failure,
        }
    }
}

const FACTOR_KINDS: [(ModelKind, RegularizerKind); 3] = [
    (ModelKind::AwmfWeightDecay, RegularizerKind::WeightDecay),
    (ModelKind::AwmfDropout, RegularizerKind::Dropout),
    (
        ModelKind::AwmfDataWeightDecay,
        RegularizerKind::DataWeightDecay,
    ),
];
const ALPHAS: [f64; 4] = [1.0, 2.0, 5.0, 21.0];
const LAMBDAS: [f64; 3] = [0.0, 0.5, 10.0];

struct Instance {
    x: BinaryInteractionMatrix,
    d: usize,
    alpha: f64,
    lambda: f64,
}

fn instance(rng: &mut ChaCha8Rng, case: usize) -> Result<Instance> {
    let n_items = rng.random_range(2..=12);
    let n_users = rng.random_range(n_items..=30);
    let d = rng.random_range(1..=4usize.min(n_items));
    Ok(Instance {
        x: random_full_column_rank(rng, n_users, n_items, 0.3)?,
        d,
        alpha: ALPHAS[case % ALPHAS.len()],
        lambda: LAMBDAS[(case / ALPHAS.len()) % LAMBDAS.len()],
    })
}

fn matvec(h: &DenseMatrix, p: &DenseMatrix) -> Result<Vec<f64>> {
    let col = DenseMatrix::from_column_major(p.as_slice().len(), 1, p.as_slice().to_vec())?;
    Ok(h.matmul(&col)?.into_vec())
}

fn check_operators(opts: &VerifyOptions, out: &mut Vec<CheckOutcome>) {
    let g = CheckGroup::Operators;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut full = Tally::new(g, "full-rank Gram vs assembled Kronecker", 1e-10);
    let mut u_side = Tally::new(g, "U-side Gram vs assembled (3 regularizers)", 1e-10);
    let mut v_side = Tally::new(g, "V-side Gram vs assembled (3 regularizers)", 1e-10);
    let mut rhs = Tally::new(g, "right-hand sides vs dense", 1e-12);
    let mut middle = Tally::new(g, "Kronecker identity, left factor", 1e-10);
    let mut outer = Tally::new(g, "Kronecker identity, right factor", 1e-10);
    for case in 0..opts.instances {
        let inst = match instance(&mut rng, case) {
            Ok(i) => i,
            Err(e) => {
                full.record(Err(e));
                continue;
            }
        };
        let (x, n, d) = (&inst.x, inst.x.n_items(), inst.d);
        let w = WeightScheme::new(inst.alpha).expect("grid alpha");
        full.record((|| {
            let prob = DenseProblem::from_binary(x, inst.alpha, inst.lambda, ModelKind::FullRank)?;
            let p = random_uniform(&mut rng, n, n, -1.0, 1.0);
            let got = FullRankGramOp::new(x, w, inst.lambda)?.apply(&p)?;
            Ok(relative_error(
                got.as_slice(),
                &matvec(&dense_gram_assemble(&prob, Side::B)?, &p)?,
            ))
        })());
        rhs.record((|| {
            let prob = DenseProblem::from_binary(x, inst.alpha, inst.lambda, ModelKind::FullRank)?;
            Ok(relative_error(
                rhs_full_rank(x, w).as_slice(),
                dense_rhs(&prob, Side::B)?.as_slice(),
            ))
        })());
        for (kind, reg) in FACTOR_KINDS {
            let v = random_uniform(&mut rng, n, d, -1.0, 1.0);
            let u = random_uniform(&mut rng, n, d, -1.0, 1.0);
            let p = random_uniform(&mut rng, n, d, -1.0, 1.0);
            let reg = Regularizer::new(reg, inst.lambda).expect("grid lambda");
            let prob = match DenseProblem::from_binary(x, inst.alpha, inst.lambda, kind) {
                Ok(p) => p,
                Err(e) => {
                    u_side.record(Err(e));
                    continue;
                }
            };
            u_side.record((|| {
                let got = FactorGramOpU::new(x, &v, w, reg)?.apply(&p)?;
                let want = matvec(&dense_gram_assemble(&prob, Side::U { v: &v })?, &p)?;
                Ok(relative_error(got.as_slice(), &want))
            })());
            v_side.record((|| {
                let mut got = FactorGramOpV::new(x, &u, w, reg)?.apply(&p)?;
                if opts.mutation == Mutation::FlipFactorV {
                    got.scale(-1.0);
                }
                let want = matvec(&dense_gram_assemble(&prob, Side::V { u: &u })?, &p)?;
                Ok(relative_error(got.as_slice(), &want))
            })());
            rhs.record((|| {
                let a = relative_error(
                    rhs_factor_u(x, &v, w)?.as_slice(),
                    dense_rhs(&prob, Side::U { v: &v })?.as_slice(),
                );
                let b = relative_error(
                    rhs_factor_v(x, &u, w)?.as_slice(),
                    dense_rhs(&prob, Side::V { u: &u })?.as_slice(),
                );
                Ok(a.max(b))
            })());
        }
        // Arbitrary positive weights, general A, B, C.
        let (m, k, l, r) = (
            rng.random_range(2..=8),
            rng.random_range(2..=6),
            rng.random_range(1..=4),
            rng.random_range(2..=6),
        );
        let a = random_uniform(&mut rng, m, k, -1.0, 1.0);
        let b = random_uniform(&mut rng, k, l, -1.0, 1.0);
        let c = random_uniform(&mut rng, r, l, -1.0, 1.0);
        let wpos = random_uniform(&mut rng, m, r, 0.1, 5.0);
        middle.record((|| {
            Ok(relative_error(
                &middle_gram_direct(&a, &wpos, &b, &c)?,
                &middle_gram_kronecker(&a, &wpos, &b, &c)?,
            ))
        })());
        let c2 = random_uniform(&mut rng, r, l, -1.0, 1.0);
        outer.record((|| {
            Ok(relative_error(
                &outer_gram_direct(&a, &wpos, &b, &c2)?,
                &outer_gram_kronecker(&a, &wpos, &b, &c2)?,
            ))
        })());
    }
    out.extend([full, u_side, v_side, rhs, middle, outer].map(Tally::finish));
}

fn check_closed_forms(opts: &VerifyOptions, out: &mut Vec<CheckOutcome>) {
    let g = CheckGroup::ClosedForms;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xc105ed);
    let cfg = TrainConfig {
        rel_tol: 1e-12,
        max_iter: Some(5000),
        ..TrainConfig::strict()
    };
    let mut tallies: Vec<Tally> = ModelKind::ALL
        .iter()
        .map(|k| Tally::new(g, format!("{k} sub-solve vs dense closed form"), 1e-7))
        .collect();
    for case in 0..opts.instances {
        let inst = match instance(&mut rng, case) {
            Ok(i) => i,
            Err(e) => {
                tallies[0].record(Err(e));
                continue;
            }
        };
        let (x, n, d, alpha, lambda) = (&inst.x, inst.x.n_items(), inst.d, inst.alpha, inst.lambda);
        let items = ItemGram::new(x);
        for (t, kind) in tallies.iter_mut().zip(ModelKind::ALL) {
            let v = random_uniform(&mut rng, n, d, -1.0, 1.0);
            let u_items = random_uniform(&mut rng, n, d, -1.0, 1.0);
            let u_users = random_uniform(&mut rng, x.n_users(), d, -1.0, 1.0);
            t.record((|| -> Result<f64> {
                match kind {
                    ModelKind::FullRank => {
                        let prob = DenseProblem::from_binary(x, alpha, lambda, kind)?;
                        let got = train_full_rank(x, alpha, lambda, &cfg)?.0.b;
                        Ok(relative_error(
                            got.as_slice(),
                            dense_closed_form(&prob, Side::B)?.as_slice(),
                        ))
                    }
                    ModelKind::Wmf => {
                        // Per-row systems are singular at λ = 0 whenever a
                        // factor loses rank, so WMF uses a tiny ridge there.
                        let lambda = lambda.max(1e-3);
                        let prob = DenseProblem::from_binary(x, alpha, lambda, kind)?;
                        let a = relative_error(
                            wmf_update_users(x, &v, alpha, lambda)?.as_slice(),
                            dense_closed_form(&prob, Side::U { v: &v })?.as_slice(),
                        );
                        let b = relative_error(
                            wmf_update_items(x, &u_users, alpha, lambda)?.as_slice(),
                            dense_closed_form(&prob, Side::V { u: &u_users })?.as_slice(),
                        );
                        Ok(a.max(b))
                    }
                    kind => {
                        let reg = kind.regularizer().expect("factor kind");
                        let prob = DenseProblem::from_binary(x, alpha, lambda, kind)?;
                        let zero = DenseMatrix::zeros(n, d);
                        let (u, _, _) =
                            awmf_update_u(x, &v, &zero, reg, alpha, lambda, Some(&items), &cfg)?;
                        let (vv, _, _) =
                            awmf_update_v(x, &u_items, &zero, reg, alpha, lambda, &cfg)?;
                        let a = relative_error(
                            u.as_slice(),
                            dense_closed_form(&prob, Side::U { v: &v })?.as_slice(),
                        );
                        let b = relative_error(
                            vv.as_slice(),
                            dense_closed_form(&prob, Side::V { u: &u_items })?.as_slice(),
                        );
                        Ok(a.max(b))
                    }
                }
            })());
        }
    }
    out.extend(tallies.into_iter().map(Tally::finish));
}

/// Largest finite-difference gradient entry relative to `max(1, f)`.
pub fn stationarity_error(
    x: &BinaryInteractionMatrix,
    model: &Model,
    alpha: f64,
    lambda: f64,
) -> Result<f64> {
    let prob = DenseProblem::from_binary(x, alpha, lambda, model.kind())?;
    let point = point_of(model);
    let f = dense_objective(&prob, &point)?;
    let fd = finite_difference_gradient(&prob, &point, FD_STEP)?;
    let g = fd.to_vec().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(g / f.max(1.0))
}

/// Smallest objective increase over `trials` random perturbations of norm
/// `radius`, relative to `max(1, f)`; positive means a strict local minimum
/// along every probed direction.
pub fn perturbation_margin<R: Rng>(
    x: &BinaryInteractionMatrix,
    model: &Model,
    alpha: f64,
    lambda: f64,
    radius: f64,
    trials: usize,
    rng: &mut R,
) -> Result<f64> {
    let prob = DenseProblem::from_binary(x, alpha, lambda, model.kind())?;
    let point = point_of(model);
    let f = dense_objective(&prob, &point)?;
    let base = point.to_vec();
    let mut worst = f64::INFINITY;
    for _ in 0..trials {
        let mut delta: Vec<f64> = (0..base.len())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let norm = crate::dense::norm2(&delta);
        delta.iter_mut().for_each(|v| *v *= radius / norm);
        let moved: Vec<f64> = base.iter().zip(&delta).map(|(a, b)| a + b).collect();
        let g = dense_objective(&prob, &point.with_vec(&moved))?;
        worst = worst.min((g - f) / f.max(1.0));
    }
    Ok(worst)
}

pub fn point_of(model: &Model) -> Point {
    match model {
        Model::Factor(m) => Point::Factors {
            u: m.u.clone(),
            v: m.v.clone(),
        },
        Model::FullRank(m) => Point::Full { b: m.b.clone() },
    }
}

/// Settings that drive the alternating trainers to stationarity on
/// desk-sized instances.
pub fn converged_config() -> TrainConfig {
    TrainConfig {
        n_alternations: 3000,
        objective_tol: 0.0,
        rel_tol: 1e-12,
        max_iter: Some(10_000),
        ..TrainConfig::default()
    }
}

fn check_stationarity(opts: &VerifyOptions, out: &mut Vec<CheckOutcome>) {
    let g = CheckGroup::Stationarity;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x57a7);
    let cfg = converged_config();
    let cases = opts.instances.clamp(1, 3);
    for kind in ModelKind::ALL {
        let mut grad = Tally::new(g, format!("{kind} finite-difference gradient"), 1e-5);
        let mut bump = Tally::new(g, format!("{kind} perturbation increases objective"), 0.0);
        for _ in 0..cases {
            let n_items = rng.random_range(4..=8);
            let n_users = rng.random_range(n_items.max(10)..=20);
            let res = random_full_column_rank(&mut rng, n_users, n_items, 0.3).and_then(|x| {
                let (alpha, lambda) = (5.0, 1.0);
                let (model, _) = fit(&x, kind, 2, alpha, lambda, &cfg)?;
                Ok((x, model, alpha, lambda))
            });
            match res {
                Ok((x, model, alpha, lambda)) => {
                    grad.record(stationarity_error(&x, &model, alpha, lambda));
                    // Reported as "error": the negated smallest increase must be < 0.
                    bump.record(
                        perturbation_margin(&x, &model, alpha, lambda, 1e-3, 20, &mut rng).map(
                            |m| {
                                if m > 0.0 {
                                    0.0
                                } else {
                                    f64::INFINITY
                                }
                            },
                        ),
                    );
                }
                Err(e) => {
                    grad.record(Err(e.clone_message()));
                    bump.record(Err(e));
                }
            }
        }
        out.push(grad.finish());
        out.push(bump.finish());
    }
}

fn check_metrics(out: &mut Vec<CheckOutcome>) {
    let g = CheckGroup::Metrics;
    let mut t = Tally::new(g, "hand-derived recall and nDCG values", 1e-12);
    let ranked = RankedList(vec![7, 3, 9, 1, 4]);
    let cases: [(f64, f64); 7] = [
        (
            ndcg_at_k(&ranked, &[7, 9], 100),
            1.5 / (1.0 + 1.0 / 3f64.log2()),
        ),
        (ndcg_at_k(&ranked, &[3, 7], 100), 1.0),
        (ndcg_at_k(&ranked, &[0, 2], 100), 0.0),
        (recall_at_k(&ranked, &[3, 7], 2), 1.0),
        (recall_at_k(&ranked, &[0, 2], 2), 0.0),
        (recall_at_k(&ranked, &[7, 9], 2), 0.5),
        (mean_and_stderr(&[0.4, 0.6]).1, 0.1),
    ];
    for (got, want) in cases {
        t.record(Ok((got - want).abs()));
    }
    let mut hand = Tally::new(g, "nDCG worked example equals 0.9197 (4 d.p.)", 5e-5);
    hand.record(Ok((ndcg_at_k(&ranked, &[7, 9], 100) - 0.9197).abs()));
    out.push(t.finish());
    out.push(hand.finish());
}

fn check_pcg(opts: &VerifyOptions, out: &mut Vec<CheckOutcome>) {
    let g = CheckGroup::Pcg;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9c9);
    let mut acc = Tally::new(g, "random SPD solve vs direct factorization", 1e-8);
    let mut iters = Tally::new(g, "iterations beyond n + 5 (count)", 0.0);
    for _ in 0..opts.instances {
        let n = rng.random_range(2..=50);
        // Entries of variance 1/n keep the spectrum of GᵀG bounded as n grows.
        let s = (3.0 / n as f64).sqrt();
        let gm = random_uniform(&mut rng, n, n, -s, s);
        let mut a = gm.gram();
        a.add_diagonal(1.0);
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let res = SolverConfig::new(1e-10, 10 * n).and_then(|cfg| {
            pcg_solve(
                &DenseOperator(&a),
                &IdentityPreconditioner,
                &b,
                &vec![0.0; n],
                &cfg,
            )
        });
        match res {
            Ok((x, rep)) => {
                let direct = a
                    .to_nalgebra()
                    .cholesky()
                    .map(|c| c.solve(&nalgebra::DVector::from_column_slice(&b)));
                acc.record(
                    direct
                        .map(|d| relative_error(&x, d.as_slice()))
                        .ok_or_else(|| Error::NotPositiveDefinite("test matrix")),
                );
                iters.record(Ok(if rep.converged && rep.iterations_used <= n + 5 {
                    0.0
                } else {
                    1.0
                }));
            }
            Err(e) => {
                acc.record(Err(e.clone_message()));
                iters.record(Err(e));
            }
        }
    }
    out.push(acc.finish());
    out.push(iters.finish());
}

impl Error {
    /// A copy carrying the same message, for recording one failure twice.
    fn clone_message(&self) -> Error {
        Error::InvalidParameter(self.to_string())
    }
}

/// Runs the selected check groups.
pub fn run_verify(opts: &VerifyOptions) -> VerifyReport {
    let groups: Vec<CheckGroup> = if opts.groups.is_empty() {
        CheckGroup::ALL.to_vec()
    } else {
        opts.groups.clone()
    };
    let mut checks = Vec::new();
    for g in CheckGroup::ALL.into_iter().filter(|g| groups.contains(g)) {
        match g {
            CheckGroup::Operators => check_operators(opts, &mut checks),
            CheckGroup::ClosedForms => check_closed_forms(opts, &mut checks),
            CheckGroup::Stationarity => check_stationarity(opts, &mut checks),
            CheckGroup::Metrics => check_metrics(&mut checks),
            CheckGroup::Pcg => check_pcg(opts, &mut checks),
        }
    }
    VerifyReport { checks }
}
