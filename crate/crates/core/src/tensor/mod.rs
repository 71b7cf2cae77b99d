//! Dense linear algebra, activations, optimisers and the finite-difference
//! gradient oracle.

mod gradcheck;
mod matrix;
mod ops;
mod optim;

pub use gradcheck::{finite_diff_grad, relative_error};
pub use matrix::{axpy, dot, mean_of, norm, Matrix};
pub use ops::{
    cosine_distance, dropout_mask, l2_normalize_rows, leaky_relu, leaky_relu_scalar, log_sum_exp,
    softmax,
};
pub use optim::{adam_step, sgd_momentum_step, AdamConfig, AdamState, SgdState};

/// Deterministic generator used across the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}

/// Uniform initialisation in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    use rand::Rng as _;
    let bound = (6.0 / (rows + cols).max(1) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound))
}
