#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wmf_lab_core::dense::DenseMatrix;
use wmf_lab_core::sparse::BinaryInteractionMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random binary matrix of the given density in which every row and every
/// column has at least one nonzero, and whose columns are linearly
/// independent (the identity block on the first `n_items` rows guarantees
/// it when `n_users >= n_items`).
pub fn random_binary(
    rng: &mut ChaCha8Rng,
    n_users: usize,
    n_items: usize,
    density: f64,
) -> BinaryInteractionMatrix {
    let mut coords = Vec::new();
    for u in 0..n_users {
        for i in 0..n_items {
            let forced = u < n_items && u == i;
            let allowed = u >= n_items || i < u;
            if forced || (allowed && rng.random::<f64>() < density) {
                coords.push((u, i));
            }
        }
        if u >= n_items && !coords.iter().any(|&(r, _)| r == u) {
            coords.push((u, rng.random_range(0..n_items)));
        }
    }
    BinaryInteractionMatrix::from_coordinates(n_users, n_items, coords).unwrap()
}

pub fn random_dense(rng: &mut ChaCha8Rng, n_rows: usize, n_cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(n_rows, n_cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_positive(rng: &mut ChaCha8Rng, n_rows: usize, n_cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(n_rows, n_cols, |_, _| rng.random_range(0.1..5.0))
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    wmf_lab_core::dense::relative_error(a, b)
}
