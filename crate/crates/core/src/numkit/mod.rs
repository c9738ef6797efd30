//! Dense numeric kernel shared by every trainable module.
//!
//! Everything is `f64` and row-major. Gradients are derived by hand in each
//! module and verified with [`finite_diff_check`].

pub(crate) mod container;
mod gradcheck;
mod mat;
mod params;

pub use container::{read_params, write_params, PARAM_MAGIC};
pub use gradcheck::{finite_diff_check, CoordCheck, GradCheck, GradCheckReport};
pub use mat::{activation, matmul, row_softmax, sigmoid, Activation, Mat};
pub use params::{ParamId, ParamStore};

use rand::Rng;

/// Uniform initialisation in `[-bound, bound]`.
pub fn uniform_mat<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, bound: f64) -> Mat {
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
    Mat::from_vec(rows, cols, data).expect("shape is consistent by construction")
}

/// Glorot-style bound for a `fan_in x fan_out` weight.
pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out).max(1) as f64).sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
