use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Poisson, StandardNormal};

use super::{ModelError, ModelInstance, TimeSeries};
use crate::linalg;

/// Euler-Maruyama substeps per observation interval.
pub const DEFAULT_SUBSTEPS: usize = 10;

/// Deterministic generator for replicate `stream` under a master `seed`.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Euler-Maruyama path observed at `times`, starting from `x0` at
/// `times[0]`. States flagged positive are reflected at zero after every
/// substep.
pub fn simulate_path<R: Rng + ?Sized>(
    model: &ModelInstance,
    x0: &[f64],
    times: &[f64],
    substeps: usize,
    rng: &mut R,
) -> Result<TimeSeries, ModelError> {
    let m = model.dim();
    if x0.len() != m || x0.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::InvalidState(x0.to_vec()));
    }
    let substeps = substeps.max(1);
    let mut x = x0.to_vec();
    let mut values = Vec::with_capacity(times.len());
    if !times.is_empty() {
        values.push(x.clone());
    }
    for w in times.windows(2) {
        let h = (w[1] - w[0]) / substeps as f64;
        if !(h > 0.0) {
            return Err(ModelError::NonPositiveStep(w[1] - w[0]));
        }
        let sqrt_h = h.sqrt();
        for _ in 0..substeps {
            let mu = model.drift_at(&x);
            let l = linalg::cholesky_semidefinite(&model.diffusion_at(&x));
            let z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
            let noise = linalg::mat_vec(&l, &z);
            for i in 0..m {
                x[i] += mu[i] * h + noise[i] * sqrt_h;
                if model.positive_states[i] && x[i] < 0.0 {
                    x[i] = -x[i];
                }
            }
        }
        values.push(x.clone());
    }
    TimeSeries::new(times.to_vec(), values).map_err(|_| ModelError::InvalidState(x))
}

/// Exact CIR path by sampling the scaled noncentral chi-squared transition.
/// `theta = (b, mu, sigma)`.
pub fn simulate_cir_exact<R: Rng + ?Sized>(
    theta: &[f64],
    x0: f64,
    times: &[f64],
    rng: &mut R,
) -> Result<TimeSeries, ModelError> {
    let (b, mu, s2) = (theta[0], theta[1], theta[2] * theta[2]);
    if !(x0 >= 0.0) {
        return Err(ModelError::InvalidState(vec![x0]));
    }
    let df = 4.0 * b * mu / s2;
    let mut x = x0;
    let mut values = Vec::with_capacity(times.len());
    if !times.is_empty() {
        values.push(vec![x]);
    }
    for w in times.windows(2) {
        let dt = w[1] - w[0];
        if !(dt > 0.0) {
            return Err(ModelError::NonPositiveStep(dt));
        }
        let c = 2.0 * b / (s2 * -(-b * dt).exp_m1());
        let half_nc = c * x * (-b * dt).exp();
        let k = if half_nc > 0.0 {
            Poisson::new(half_nc).map_err(|_| ModelError::InvalidState(vec![x]))?.sample(rng)
        } else {
            0.0
        };
        let chi = ChiSquared::new(df + 2.0 * k).map_err(|_| ModelError::InvalidState(vec![x]))?;
        x = chi.sample(rng) / (2.0 * c);
        values.push(vec![x]);
    }
    TimeSeries::new(times.to_vec(), values).map_err(|_| ModelError::InvalidState(vec![x]))
}
