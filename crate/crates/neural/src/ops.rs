use rand::Rng;

use crate::{NeuralError, Real, Result};

/// Dot product with eight independent accumulators so the loop vectorises.
/// The summation order is fixed, so results are reproducible.
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += *x * *y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

/// Max-subtracted softmax.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&h| (h - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `-log p[target]`, with the probability clamped at 1e-12.
pub fn cross_entropy<T: Real>(probs: &[T], target: usize) -> T {
    -probs[target].max(T::of(1e-12)).ln()
}

/// Gradient of `cross_entropy(softmax(h), target)` with respect to `h`: `p - y`.
pub fn softmax_cross_entropy_grad<T: Real>(probs: &[T], target: usize) -> Vec<T> {
    let mut g = probs.to_vec();
    g[target] -= T::one();
    g
}

const COSINE_MIN_NORM: f64 = 1e-12;

/// Cosine similarity; defined as 0 when either vector has (near) zero norm.
pub fn cosine<T: Real>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(NeuralError::Dimension(format!("cosine of lengths {} and {}", a.len(), b.len())));
    }
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na.as_f64() < COSINE_MIN_NORM || nb.as_f64() < COSINE_MIN_NORM {
        return Ok(T::zero());
    }
    Ok(dot(a, b) / (na * nb))
}

/// Gradients of `dout * cosine(a, b)` with respect to `a` and `b`.
pub fn cosine_backward<T: Real>(a: &[T], b: &[T], dout: T) -> Result<(Vec<T>, Vec<T>)> {
    if a.len() != b.len() {
        return Err(NeuralError::Dimension(format!("cosine of lengths {} and {}", a.len(), b.len())));
    }
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na.as_f64() < COSINE_MIN_NORM || nb.as_f64() < COSINE_MIN_NORM {
        return Ok((vec![T::zero(); a.len()], vec![T::zero(); b.len()]));
    }
    let c = dot(a, b) / (na * nb);
    let inv = T::one() / (na * nb);
    let da = a.iter().zip(b).map(|(&x, &y)| dout * (y * inv - c * x / (na * na))).collect();
    let db = a.iter().zip(b).map(|(&x, &y)| dout * (x * inv - c * y / (nb * nb))).collect();
    Ok((da, db))
}

/// Per-element multipliers of an inverted-dropout draw (0 or 1/(1-rate)).
/// `None` means the identity was applied.
pub type DropoutMask<T> = Option<Vec<T>>;

/// Inverted dropout. In training, each element is zeroed with probability
/// `rate` and survivors are scaled by `1 / (1 - rate)`; otherwise identity.
pub fn dropout<T: Real, R: Rng + ?Sized>(
    x: &[T],
    rate: f64,
    training: bool,
    rng: &mut R,
) -> Result<(Vec<T>, DropoutMask<T>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(NeuralError::Argument(format!("dropout rate {rate} outside [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok((x.to_vec(), None));
    }
    let keep = T::of(1.0 / (1.0 - rate));
    let mask: Vec<T> = x.iter().map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep }).collect();
    let out = x.iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    Ok((out, Some(mask)))
}
