//! Parameter initialisers. All draw from a caller-supplied generator so a
//! single seeded RNG determines the whole model.

use rand::Rng;

use crate::{Real, Tensor};

pub fn uniform<T: Real, R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Tensor<T> {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = T::of(rng.random_range(-bound..bound));
    }
    t
}

/// Glorot/Xavier uniform: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
pub fn xavier_uniform<T: Real, R: Rng + ?Sized>(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Tensor<T> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(shape, bound, rng)
}

/// Embedding table with U(-0.1, 0.1) rows; row 0 is zeroed when it is the
/// padding row.
pub fn embedding<T: Real, R: Rng + ?Sized>(rows: usize, dim: usize, pad_zero: bool, rng: &mut R) -> Tensor<T> {
    let mut t = uniform(&[rows, dim], 0.1, rng);
    if pad_zero && rows > 0 {
        t.row_mut(0).iter_mut().for_each(|v| *v = T::zero());
    }
    t
}
