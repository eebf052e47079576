//! Central finite-difference gradient checking.
//!
//! These helpers never call a layer's `backward`; they only perturb inputs
//! or parameters and re-evaluate a scalar loss closure, so they act as an
//! independent oracle for the hand-written backward passes.

use rand::Rng;

use crate::{Grads, ParamStore};

/// Denominator floor for [`relative_error`]. At `f64` with a step of 1e-5
/// the central difference carries roughly 1e-11 of absolute noise, so
/// gradients smaller than this are compared on an absolute scale.
pub const RELATIVE_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

#[derive(Clone, Debug)]
pub struct GradCheck {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

/// `(f(x + eps) - f(x - eps)) / 2 eps` for every element of `x`.
pub fn numeric_gradient<F>(x: &mut [f64], eps: f64, mut loss: F) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + eps;
        let up = loss(x);
        x[i] = orig - eps;
        let down = loss(x);
        x[i] = orig;
        out.push((up - down) / (2.0 * eps));
    }
    out
}

/// Compares `grads` against central differences of `loss` for up to
/// `per_tensor` entries of every tensor in `params`. Entries with a nonzero
/// analytic gradient are preferred, topped up with random positions so
/// spurious zeros are caught too.
pub fn check_params<F, R>(
    params: &mut ParamStore<f64>,
    grads: &Grads<f64>,
    eps: f64,
    per_tensor: usize,
    rng: &mut R,
    mut loss: F,
) -> Vec<GradCheck>
where
    F: FnMut(&ParamStore<f64>) -> f64,
    R: Rng + ?Sized,
{
    let names: Vec<String> = params.names().map(str::to_string).collect();
    let mut results = Vec::new();
    for name in names {
        let len = params.get(&name).map(|t| t.len()).unwrap_or(0);
        let mut picks: Vec<usize> = (0..len).filter(|&i| grads.value(&name, i) != 0.0).collect();
        if picks.len() > per_tensor / 2 {
            let stride = picks.len() as f64 / (per_tensor / 2).max(1) as f64;
            picks = (0..per_tensor / 2).map(|k| picks[(k as f64 * stride) as usize]).collect();
        }
        while picks.len() < per_tensor.min(len) {
            let i = rng.random_range(0..len);
            if !picks.contains(&i) {
                picks.push(i);
            }
        }
        for index in picks {
            let orig = params.get(&name).expect("listed").data()[index];
            params.get_mut(&name).expect("listed").data_mut()[index] = orig + eps;
            let up = loss(params);
            params.get_mut(&name).expect("listed").data_mut()[index] = orig - eps;
            let down = loss(params);
            params.get_mut(&name).expect("listed").data_mut()[index] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let analytic = grads.value(&name, index);
            results.push(GradCheck {
                tensor: name.clone(),
                index,
                analytic,
                numeric,
                rel_error: relative_error(analytic, numeric),
            });
        }
    }
    results
}

/// Largest relative error in a batch of checks, with the offending entry.
pub fn worst(results: &[GradCheck]) -> Option<&GradCheck> {
    results.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
}
