mod common;

use common::{random_binary, rel_err, rng};
use wmf_lab_core::dense::DenseMatrix;
use wmf_lab_core::gram::{ItemGram, RegularizerKind};
use wmf_lab_core::oracle::{
    dense_objective, dense_objective_and_gradient, finite_difference_gradient, DenseProblem, Point,
    FD_STEP,
};
use wmf_lab_core::sparse::BinaryInteractionMatrix;
use wmf_lab_core::train::{
    awmf_update_u, objective_value, train_awmf, train_full_rank, train_wmf, FactorModel,
    FullRankModel, Hyperparameters, Model, ModelKind, TrainConfig,
};

fn tight() -> TrainConfig {
    TrainConfig {
        n_alternations: 2000,
        objective_tol: 0.0,
        rel_tol: 1e-12,
        max_iter: Some(10_000),
        ..TrainConfig::default()
    }
}

fn point_of(model: &Model) -> Point {
    match model {
        Model::Factor(m) => Point::Factors {
            u: m.u.clone(),
            v: m.v.clone(),
        },
        Model::FullRank(m) => Point::Full { b: m.b.clone() },
    }
}

fn fit(
    x: &BinaryInteractionMatrix,
    kind: ModelKind,
    d: usize,
    alpha: f64,
    lambda: f64,
    cfg: &TrainConfig,
) -> Model {
    match kind {
        ModelKind::FullRank => Model::FullRank(train_full_rank(x, alpha, lambda, cfg).unwrap().0),
        ModelKind::Wmf => Model::Factor(train_wmf(x, d, alpha, lambda, cfg).unwrap().0),
        k => Model::Factor(train_awmf(x, k, d, alpha, lambda, cfg).unwrap().0),
    }
}

#[test]
fn trained_models_are_stationary() {
    let mut r = rng(21);
    let x = random_binary(&mut r, 30, 10, 0.3);
    for kind in ModelKind::ALL {
        let model = fit(&x, kind, 3, 5.0, 1.0, &tight());
        let prob = DenseProblem::from_binary(&x, 5.0, 1.0, kind).unwrap();
        let point = point_of(&model);
        let (f, grad) = dense_objective_and_gradient(&prob, &point).unwrap();
        let fd = finite_difference_gradient(&prob, &point, FD_STEP).unwrap();
        let g = grad.to_vec();
        let max_g = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_g < 1e-6, "{kind}: analytic gradient {max_g}");
        let max_fd = fd.to_vec().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(
            max_fd / f.max(1.0) < 1e-5,
            "{kind}: fd gradient {max_fd} at f = {f}"
        );
    }
}

#[test]
fn objective_matches_dense_evaluation() {
    let mut r = rng(22);
    let x = random_binary(&mut r, 25, 9, 0.35);
    for kind in ModelKind::ALL {
        let model = fit(&x, kind, 3, 3.0, 0.7, &TrainConfig::default());
        let prob = DenseProblem::from_binary(&x, 3.0, 0.7, kind).unwrap();
        let want = dense_objective(&prob, &point_of(&model)).unwrap();
        let got = objective_value(&x, &model, 3.0, 0.7).unwrap();
        assert!(
            (got - want).abs() <= 1e-10 * want.abs(),
            "{kind}: {got} vs {want}"
        );
    }
}

#[test]
fn zero_models_cost_alpha_nnz() {
    let mut r = rng(23);
    let x = random_binary(&mut r, 12, 6, 0.3);
    let hyper = Hyperparameters {
        alpha: 4.0,
        lambda: 1.0,
        rank: 2,
        seed: 0,
    };
    let nnz = x.nnz() as f64;
    for kind in ModelKind::ALL {
        let model = match kind {
            ModelKind::FullRank => Model::FullRank(FullRankModel {
                b: DenseMatrix::zeros(6, 6),
                n_users: 12,
                hyper,
            }),
            k => Model::Factor(FactorModel {
                kind: k,
                u: DenseMatrix::zeros(if k == ModelKind::Wmf { 12 } else { 6 }, 2),
                v: DenseMatrix::zeros(6, 2),
                n_users: 12,
                hyper,
            }),
        };
        assert_eq!(objective_value(&x, &model, 1.0, 1.0).unwrap(), nnz);
        assert_eq!(objective_value(&x, &model, 4.0, 1.0).unwrap(), 4.0 * nnz);
    }
}

#[test]
fn objective_is_monotone_across_alternations() {
    let mut r = rng(24);
    let x = random_binary(&mut r, 30, 10, 0.3);
    let cfg = TrainConfig {
        n_alternations: 30,
        objective_tol: 0.0,
        ..TrainConfig::strict()
    };
    for kind in [
        ModelKind::AwmfWeightDecay,
        ModelKind::AwmfDropout,
        ModelKind::AwmfDataWeightDecay,
    ] {
        let (_, stats) = train_awmf(&x, kind, 3, 5.0, 1.0, &cfg).unwrap();
        assert!(stats.warnings.is_empty(), "{kind}: {:?}", stats.warnings);
        for w in stats.objective_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-10), "{kind}: {} -> {}", w[0], w[1]);
        }
    }
    let (_, stats) = train_wmf(&x, 3, 5.0, 1.0, &cfg).unwrap();
    for w in stats.objective_history.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-10));
    }
}

#[test]
fn full_rank_fast_path_matches_iterative_path() {
    let mut r = rng(25);
    let x = random_binary(&mut r, 40, 12, 0.25);
    let direct = train_full_rank(&x, 1.0, 0.5, &TrainConfig::strict())
        .unwrap()
        .0;
    let iterative = train_full_rank(
        &x,
        1.0,
        0.5,
        &TrainConfig {
            force_iterative: true,
            rel_tol: 1e-12,
            ..TrainConfig::default()
        },
    )
    .unwrap()
    .0;
    assert!(rel_err(iterative.b.as_slice(), direct.b.as_slice()) < 1e-8);
}

#[test]
fn identity_data_is_interpolated() {
    let x = BinaryInteractionMatrix::from_coordinates(2, 2, [(0, 0), (1, 1)]).unwrap();
    for alpha in [1.0, 3.0, 21.0] {
        let b = train_full_rank(&x, alpha, 0.0, &TrainConfig::strict())
            .unwrap()
            .0
            .b;
        assert!(rel_err(b.as_slice(), DenseMatrix::identity(2).as_slice()) < 1e-10);
        let cfg = TrainConfig {
            n_alternations: 50,
            objective_tol: 0.0,
            ..TrainConfig::strict()
        };
        let (m, _) = train_wmf(&x, 2, alpha, 1e-9, &cfg).unwrap();
        let f = objective_value(&x, &Model::Factor(m), alpha, 1e-9).unwrap();
        assert!(f < 1e-6, "wmf alpha {alpha}: {f}");
    }
}

#[test]
fn awmf_reaches_zero_objective_at_full_rank() {
    let mut r = rng(26);
    let x = random_binary(&mut r, 15, 5, 0.3);
    for kind in [
        ModelKind::AwmfWeightDecay,
        ModelKind::AwmfDropout,
        ModelKind::AwmfDataWeightDecay,
    ] {
        let cfg = TrainConfig {
            n_alternations: 200,
            objective_tol: 0.0,
            rel_tol: 1e-12,
            ..TrainConfig::default()
        };
        let (m, _) = train_awmf(&x, kind, 5, 2.0, 0.0, &cfg).unwrap();
        let f = objective_value(&x, &Model::Factor(m), 2.0, 0.0).unwrap();
        assert!(f < 1e-8, "{kind}: {f}");
    }
}

#[test]
fn unweighted_u_step_is_a_ridge_solve() {
    // With W = 1 the dropout U step has the closed form
    // U = (XᵀX + λI)⁻¹ XᵀX V (VᵀV)⁻¹.
    let mut r = rng(27);
    let x = random_binary(&mut r, 20, 8, 0.3);
    let v = common::random_dense(&mut r, 8, 3);
    let lambda = 0.5;
    let cfg = TrainConfig {
        rel_tol: 1e-13,
        ..TrainConfig::default()
    };
    let zero = DenseMatrix::zeros(8, 3);
    let items = ItemGram::new(&x);
    let (u, _, _) = awmf_update_u(
        &x,
        &v,
        &zero,
        RegularizerKind::Dropout,
        1.0,
        lambda,
        Some(&items),
        &cfg,
    )
    .unwrap();

    let xd = x.to_dense().to_nalgebra();
    let xtx = xd.transpose() * &xd;
    let vn = v.to_nalgebra();
    let lhs = &xtx + nalgebra::DMatrix::identity(8, 8) * lambda;
    let inner = lhs.lu().solve(&(&xtx * &vn)).unwrap();
    let vtv_inv = (vn.transpose() * &vn).try_inverse().unwrap();
    let want = inner * vtv_inv;
    assert!(rel_err(u.as_slice(), want.as_slice()) < 1e-8);
}
