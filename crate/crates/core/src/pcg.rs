//! Preconditioned conjugate gradients over apply-only operators.

use crate::dense::{axpy, dot, norm2};
use crate::error::{mismatch, Error, Result};

/// A symmetric positive (semi)definite operator known only through its action.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    /// `y ← A x`.
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Action of an SPD preconditioner inverse, `z ← M⁻¹ r`.
pub trait Preconditioner: Sync {
    fn apply_inverse(&self, r: &[f64], z: &mut [f64]);
}

#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply_inverse(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

impl<P: Preconditioner + ?Sized> Preconditioner for &P {
    fn apply_inverse(&self, r: &[f64], z: &mut [f64]) {
        (**self).apply_inverse(r, z)
    }
}

impl<A: LinearOperator + ?Sized> LinearOperator for &A {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply(x, y)
    }
}

/// How often the recurrence residual is replaced by `b − A x`.
pub const RESIDUAL_REFRESH: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    /// Absolute threshold on `‖r‖₂`.
    pub tolerance: f64,
    pub max_iter: usize,
    pub record_history: bool,
}

impl SolverConfig {
    pub fn new(tolerance: f64, max_iter: usize) -> Result<Self> {
        if !(tolerance > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerance must be > 0, got {tolerance}"
            )));
        }
        if max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be >= 1".into()));
        }
        Ok(Self {
            tolerance,
            max_iter,
            record_history: false,
        })
    }

    /// `ε = rel_tol · ‖b‖₂`, with `max_iter` defaulting to the system size.
    /// A zero right-hand side gets the smallest positive threshold.
    pub fn relative(rel_tol: f64, b: &[f64], max_iter: Option<usize>) -> Result<Self> {
        let eps = (rel_tol * norm2(b)).max(f64::MIN_POSITIVE);
        Self::new(eps, max_iter.unwrap_or(b.len()).max(1))
    }

    pub fn with_history(mut self) -> Self {
        self.record_history = true;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub iterations_used: usize,
    pub final_residual_norm: f64,
    pub converged: bool,
    pub residual_history: Option<Vec<f64>>,
}

fn residual(op: &dyn LinearOperator, b: &[f64], x: &[f64], r: &mut [f64]) {
    op.apply(x, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
}

/// Solves `A x = b` from the initial guess `x0`.
///
/// Returns the last iterate whether or not the tolerance was met; the report
/// says which. A non-positive curvature `pᵀAp` is reported as
/// [`Error::Breakdown`] rather than restarted.
pub fn pcg_solve(
    op: &dyn LinearOperator,
    precond: &dyn Preconditioner,
    b: &[f64],
    x0: &[f64],
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, SolveReport)> {
    let n = op.dim();
    if b.len() != n || x0.len() != n {
        return Err(mismatch(
            "pcg_solve",
            n,
            format!("b: {}, x0: {}", b.len(), x0.len()),
        ));
    }
    let mut x = x0.to_vec();
    let mut r = vec![0.0; n];
    residual(op, b, &x, &mut r);
    let mut z = vec![0.0; n];
    precond.apply_inverse(&r, &mut z);
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);

    let mut history = cfg.record_history.then(Vec::new);
    let mut rnorm = norm2(&r);
    if !rnorm.is_finite() {
        return Err(Error::NonFinite {
            iteration: 0,
            what: "initial residual",
        });
    }

    for k in 0..cfg.max_iter {
        if let Some(h) = history.as_mut() {
            h.push(rnorm);
        }
        if rnorm <= cfg.tolerance {
            return Ok((
                x,
                SolveReport {
                    iterations_used: k,
                    final_residual_norm: rnorm,
                    converged: true,
                    residual_history: history,
                },
            ));
        }
        op.apply(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if !curvature.is_finite() {
            return Err(Error::NonFinite {
                iteration: k,
                what: "p'Ap",
            });
        }
        if curvature <= 0.0 {
            return Err(Error::Breakdown {
                iteration: k,
                curvature,
            });
        }
        let step = rz / curvature;
        axpy(step, &p, &mut x);
        if (k + 1) % RESIDUAL_REFRESH == 0 {
            residual(op, b, &x, &mut r);
        } else {
            axpy(-step, &ap, &mut r);
        }
        precond.apply_inverse(&r, &mut z);
        let rz_next = dot(&r, &z);
        if !rz_next.is_finite() {
            return Err(Error::NonFinite {
                iteration: k,
                what: "r'z",
            });
        }
        let beta = rz_next / rz;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
        rz = rz_next;
        rnorm = norm2(&r);
    }

    if let Some(h) = history.as_mut() {
        h.push(rnorm);
    }
    Ok((
        x,
        SolveReport {
            iterations_used: cfg.max_iter,
            final_residual_norm: rnorm,
            converged: rnorm <= cfg.tolerance,
            residual_history: history,
        },
    ))
}

/// A dense symmetric matrix as an operator; used in tests and small checks.
#[derive(Clone, Debug)]
pub struct DenseOperator<'a>(pub &'a crate::dense::DenseMatrix);

impl LinearOperator for DenseOperator<'_> {
    fn dim(&self) -> usize {
        self.0.n_rows()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (j, &xj) in x.iter().enumerate() {
            axpy(xj, self.0.column(j), y);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::{relative_error, DenseMatrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DenseMatrix {
        let g = DenseMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let mut a = g.gram();
        a.add_diagonal(1.0);
        a
    }

    #[test]
    fn identity_system_in_one_iteration() {
        let a = DenseMatrix::identity(4);
        let b = [1.0, -2.0, 3.0, 0.5];
        let cfg = SolverConfig::relative(1e-12, &b, None).unwrap();
        let (x, rep) = pcg_solve(
            &DenseOperator(&a),
            &IdentityPreconditioner,
            &b,
            &[0.0; 4],
            &cfg,
        )
        .unwrap();
        assert_eq!(rep.iterations_used, 1);
        assert!(rep.converged);
        assert_eq!(x, b.to_vec());
    }

    #[test]
    fn diagonal_system_terminates_in_three() {
        let a = DenseMatrix::from_rows(&[&[1.0, 0.0, 0.0], &[0.0, 2.0, 0.0], &[0.0, 0.0, 4.0]])
            .unwrap();
        let b = [1.0, 2.0, 4.0];
        let cfg = SolverConfig::new(1e-12, 10).unwrap();
        let (x, rep) = pcg_solve(
            &DenseOperator(&a),
            &IdentityPreconditioner,
            &b,
            &[0.0; 3],
            &cfg,
        )
        .unwrap();
        assert!(rep.iterations_used <= 3);
        assert!(relative_error(&x, &[1.0, 1.0, 1.0]) < 1e-12);
    }

    #[test]
    fn random_spd_matches_direct_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let a = random_spd(&mut rng, 8);
        let b: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cfg = SolverConfig::relative(1e-12, &b, Some(8)).unwrap();
        let (x, rep) = pcg_solve(
            &DenseOperator(&a),
            &IdentityPreconditioner,
            &b,
            &[0.0; 8],
            &cfg,
        )
        .unwrap();
        let direct = a
            .to_nalgebra()
            .lu()
            .solve(&nalgebra::DVector::from_column_slice(&b))
            .unwrap();
        assert!(rep.iterations_used <= 8);
        assert!(relative_error(&x, direct.as_slice()) < 1e-8);
    }

    #[test]
    fn warm_start_at_solution_needs_no_iterations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_spd(&mut rng, 6);
        let x_true: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut b = vec![0.0; 6];
        DenseOperator(&a).apply(&x_true, &mut b);
        let cfg = SolverConfig::relative(1e-12, &b, None).unwrap();
        let (_, rep) = pcg_solve(
            &DenseOperator(&a),
            &IdentityPreconditioner,
            &b,
            &x_true,
            &cfg,
        )
        .unwrap();
        assert_eq!(rep.iterations_used, 0);
    }

    #[test]
    fn indefinite_operator_breaks_down() {
        let a = DenseMatrix::from_rows(&[&[1.0, 0.0], &[0.0, -1.0]]).unwrap();
        let cfg = SolverConfig::new(1e-12, 10).unwrap();
        let err = pcg_solve(
            &DenseOperator(&a),
            &IdentityPreconditioner,
            &[0.0, 1.0],
            &[0.0, 0.0],
            &cfg,
        );
        assert!(matches!(err, Err(Error::Breakdown { .. })));
    }

    #[test]
    fn history_and_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_spd(&mut rng, 20);
        let b: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cfg = SolverConfig::new(1e-30, 2).unwrap().with_history();
        let (_, rep) = pcg_solve(
            &DenseOperator(&a),
            &IdentityPreconditioner,
            &b,
            &[0.0; 20],
            &cfg,
        )
        .unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations_used, 2);
        assert_eq!(rep.residual_history.unwrap().len(), 3);
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::new(0.0, 1).is_err());
        assert!(SolverConfig::new(1e-3, 0).is_err());
        assert!(pcg_solve(
            &DenseOperator(&DenseMatrix::identity(2)),
            &IdentityPreconditioner,
            &[1.0],
            &[0.0, 0.0],
            &SolverConfig::new(1.0, 1).unwrap()
        )
        .is_err());
    }
}
