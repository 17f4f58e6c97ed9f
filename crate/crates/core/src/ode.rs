//! Adaptive Dormand-Prince 5(4) integration of autonomous ODE systems, used
//! to carry cumulants from one observation time to the next.

use thiserror::Error;

use crate::cumulant::{BoundSystem, CumulantError, CumulantSet, CumulantShape};
use crate::scalar::Scalar;

use std::sync::Arc;

/// Autonomous right-hand side `y' = f(y)`.
pub trait OdeRhs<T> {
    fn dim(&self) -> usize;
    fn eval(&self, y: &[T], dy: &mut [T]);
}

impl<T: Scalar> OdeRhs<T> for BoundSystem<T> {
    fn dim(&self) -> usize {
        self.len()
    }

    fn eval(&self, y: &[T], dy: &mut [T]) {
        self.rhs(y, dy)
    }
}

/// Closure-backed right-hand side.
pub struct FnRhs<F> {
    dim: usize,
    f: F,
}

impl<F> FnRhs<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnRhs { dim, f }
    }
}

impl<T, F: Fn(&[T], &mut [T])> OdeRhs<T> for FnRhs<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, y: &[T], dy: &mut [T]) {
        (self.f)(y, dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig<T> {
    pub rel_tol: T,
    pub abs_tol: T,
    /// First trial step; `None` picks one from the local derivative scale.
    pub initial_step: Option<T>,
    pub max_steps: usize,
}

impl<T: Scalar> Default for IntegratorConfig<T> {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: T::lit(1e-8),
            abs_tol: T::lit(1e-10),
            initial_step: None,
            max_steps: 10_000,
        }
    }
}

impl<T: Scalar> IntegratorConfig<T> {
    pub fn new(rel_tol: T, abs_tol: T, max_steps: usize) -> Result<Self, OdeError<T>> {
        let cfg = IntegratorConfig {
            rel_tol,
            abs_tol,
            initial_step: None,
            max_steps,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), OdeError<T>> {
        let pos = |v: T| v > T::zero() && v.is_finite();
        if !pos(self.rel_tol) || !pos(self.abs_tol) {
            return Err(OdeError::InvalidConfig("tolerances must be positive and finite"));
        }
        if self.max_steps == 0 {
            return Err(OdeError::InvalidConfig("max_steps must be at least 1"));
        }
        if let Some(h) = self.initial_step {
            if !pos(h) {
                return Err(OdeError::InvalidConfig("initial_step must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError<T: Scalar> {
    #[error("integration stopped after {steps} steps at t = {t_reached}")]
    StepLimit {
        steps: usize,
        t_reached: T,
        partial: Vec<T>,
    },
    #[error("solution became non-finite at t = {t_reached}")]
    NonFinite { t_reached: T, partial: Vec<T> },
    #[error("step size underflow at t = {t_reached}")]
    StepUnderflow { t_reached: T, partial: Vec<T> },
    #[error("negative time span {0}")]
    NegativeSpan(T),
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("initial state has length {found}, system expects {expected}")]
    LengthMismatch { expected: usize, found: usize },
}

impl<T: Scalar> OdeError<T> {
    /// State at the point of failure, when there is one.
    pub fn partial_state(&self) -> Option<&[T]> {
        match self {
            OdeError::StepLimit { partial, .. }
            | OdeError::NonFinite { partial, .. }
            | OdeError::StepUnderflow { partial, .. } => Some(partial),
            _ => None,
        }
    }
}

// Dormand-Prince 5(4) tableau. The systems are autonomous, so the nodes
// c_i are not needed.
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// difference between the 5th and embedded 4th order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `y' = f(y)` from `y0` over a span `dt >= 0`.
pub fn integrate_rhs<T: Scalar, F: OdeRhs<T> + ?Sized>(
    f: &F,
    y0: &[T],
    dt: T,
    cfg: &IntegratorConfig<T>,
) -> Result<Vec<T>, OdeError<T>> {
    cfg.validate()?;
    let n = f.dim();
    if y0.len() != n {
        return Err(OdeError::LengthMismatch {
            expected: n,
            found: y0.len(),
        });
    }
    if dt < T::zero() || !dt.is_finite() {
        return Err(OdeError::NegativeSpan(dt));
    }
    if dt == T::zero() {
        return Ok(y0.to_vec());
    }

    let a: Vec<Vec<T>> = A.iter().map(|r| r.iter().map(|&v| T::lit(v)).collect()).collect();
    let e: Vec<T> = E.iter().map(|&v| T::lit(v)).collect();

    let mut y = y0.to_vec();
    let mut k: Vec<Vec<T>> = vec![vec![T::zero(); n]; 7];
    f.eval(&y, &mut k[0]);
    let mut t = T::zero();
    let mut h = match cfg.initial_step {
        Some(h0) => h0.min(dt),
        None => initial_step(f, &y, &k[0], cfg).min(dt),
    };
    let mut stage = vec![T::zero(); n];
    let mut y_new = vec![T::zero(); n];
    let mut steps = 0usize;
    let min_h = dt * T::epsilon() * T::lit(16.0);

    let safety = T::lit(0.9);
    let min_fac = T::lit(0.2);
    let max_fac = T::lit(5.0);
    let inv_order = T::lit(0.2);

    while t < dt {
        if steps >= cfg.max_steps {
            return Err(OdeError::StepLimit {
                steps,
                t_reached: t,
                partial: y,
            });
        }
        steps += 1;
        let last = t + h >= dt;
        if last {
            h = dt - t;
        }

        for s in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for (j, kj) in k.iter().enumerate().take(s) {
                    if a[s][j] != T::zero() {
                        acc = acc + h * a[s][j] * kj[i];
                    }
                }
                stage[i] = acc;
            }
            if s == 6 {
                y_new.copy_from_slice(&stage);
            }
            f.eval(&stage, &mut k[s]);
        }

        let mut err = T::zero();
        for i in 0..n {
            let mut ei = T::zero();
            for (j, kj) in k.iter().enumerate() {
                ei = ei + e[j] * kj[i];
            }
            ei = ei * h;
            let sc = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(y_new[i].abs());
            let r = ei / sc;
            err = err + r * r;
        }
        err = (err / T::lit(n.max(1) as f64)).sqrt();

        if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
            if h <= min_h {
                return Err(OdeError::NonFinite {
                    t_reached: t,
                    partial: y,
                });
            }
            h = h * min_fac;
            continue;
        }

        if err <= T::one() {
            t = if last { dt } else { t + h };
            y.copy_from_slice(&y_new);
            // FSAL: the last stage is the derivative at the new point
            let k7 = k[6].clone();
            k[0] = k7;
            let fac = if err == T::zero() {
                max_fac
            } else {
                (safety * err.powf(-inv_order)).min(max_fac).max(min_fac)
            };
            h = h * fac;
        } else {
            let fac = (safety * err.powf(-inv_order)).max(min_fac);
            h = h * fac;
            if h <= min_h {
                return Err(OdeError::StepUnderflow {
                    t_reached: t,
                    partial: y,
                });
            }
        }
    }
    Ok(y)
}

fn initial_step<T: Scalar, F: OdeRhs<T> + ?Sized>(
    f: &F,
    y: &[T],
    dy: &[T],
    cfg: &IntegratorConfig<T>,
) -> T {
    let n = y.len();
    let scale: Vec<T> = y.iter().map(|v| cfg.abs_tol + cfg.rel_tol * v.abs()).collect();
    let rms = |v: &[T]| -> T {
        let s = v
            .iter()
            .zip(&scale)
            .fold(T::zero(), |acc, (&x, &sc)| acc + (x / sc) * (x / sc));
        (s / T::lit(n.max(1) as f64)).sqrt()
    };
    let d0 = rms(y);
    let d1 = rms(dy);
    let small = T::lit(1e-5);
    let h0 = if d0 < small || d1 < small {
        T::lit(1e-6)
    } else {
        T::lit(0.01) * d0 / d1
    };
    let y1: Vec<T> = y.iter().zip(dy).map(|(&a, &b)| a + h0 * b).collect();
    let mut dy1 = vec![T::zero(); n];
    f.eval(&y1, &mut dy1);
    let diff: Vec<T> = dy1.iter().zip(dy).map(|(&a, &b)| (a - b) / h0).collect();
    let d2 = rms(&diff);
    let dmax = d1.max(d2);
    let h1 = if dmax <= T::lit(1e-15) {
        (h0 * T::lit(1e-3)).max(T::lit(1e-6))
    } else {
        (T::lit(0.01) / dmax).powf(T::lit(0.2))
    };
    if h1.is_finite() {
        (T::lit(100.0) * h0).min(h1)
    } else {
        h0
    }
}

/// Point-mass initial condition: first-order cumulants equal `x`, all others
/// zero.
pub fn point_mass_initial<T: Scalar>(
    x: &[T],
    shape: &Arc<CumulantShape>,
) -> Result<CumulantSet<T>, CumulantError> {
    CumulantSet::point_mass(Arc::clone(shape), x)
}

/// Advances a cumulant vector by `dt` under a bound cumulant system.
pub fn integrate<T: Scalar>(
    system: &BoundSystem<T>,
    kappa0: &CumulantSet<T>,
    dt: T,
    cfg: &IntegratorConfig<T>,
) -> Result<CumulantSet<T>, OdeError<T>> {
    let y = integrate_rhs(system, kappa0.values(), dt, cfg)?;
    Ok(CumulantSet::from_values(Arc::clone(kappa0.shape()), y).expect("length preserved"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exponential_decay() {
        let f = FnRhs::new(1, |y: &[f64], dy: &mut [f64]| dy[0] = -y[0]);
        let y = integrate_rhs(&f, &[1.0], 2.0, &IntegratorConfig::default()).unwrap();
        assert_relative_eq!(y[0], (-2.0f64).exp(), max_relative = 1e-8);
    }

    #[test]
    fn harmonic_oscillator_period() {
        let f = FnRhs::new(2, |y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -y[0];
        });
        let y = integrate_rhs(
            &f,
            &[1.0, 0.0],
            2.0 * std::f64::consts::PI,
            &IntegratorConfig::default(),
        )
        .unwrap();
        assert!((y[0] - 1.0).abs() < 1e-7);
        assert!(y[1].abs() < 1e-7);
    }

    #[test]
    fn zero_span_is_identity() {
        let f = FnRhs::new(2, |_: &[f64], dy: &mut [f64]| {
            dy[0] = 1.0;
            dy[1] = 2.0;
        });
        let y0 = [3.0, 4.0];
        assert_eq!(
            integrate_rhs(&f, &y0, 0.0, &IntegratorConfig::default()).unwrap(),
            y0.to_vec()
        );
    }

    #[test]
    fn blow_up_reports_partial_state() {
        // y' = y^2 from 1 explodes at t = 1
        let f = FnRhs::new(1, |y: &[f64], dy: &mut [f64]| dy[0] = y[0] * y[0]);
        let cfg = IntegratorConfig {
            max_steps: 200,
            ..Default::default()
        };
        let err = integrate_rhs(&f, &[1.0], 2.0, &cfg).unwrap_err();
        let partial = err.partial_state().expect("partial state");
        assert!(partial[0] > 1.0);
    }

    #[test]
    fn config_validation() {
        assert!(IntegratorConfig::new(0.0, 1e-10, 10).is_err());
        assert!(IntegratorConfig::new(1e-8, 1e-10, 0).is_err());
        assert!(IntegratorConfig::new(1e-8, 1e-10, 1).is_ok());
        let f = FnRhs::new(1, |_: &[f64], dy: &mut [f64]| dy[0] = 0.0);
        assert!(matches!(
            integrate_rhs(&f, &[0.0], -1.0, &IntegratorConfig::default()),
            Err(OdeError::NegativeSpan(_))
        ));
    }

    #[test]
    fn single_precision() {
        let f = FnRhs::new(1, |y: &[f32], dy: &mut [f32]| dy[0] = -0.5 * y[0]);
        let cfg = IntegratorConfig {
            rel_tol: 1e-5f32,
            abs_tol: 1e-6,
            initial_step: None,
            max_steps: 1000,
        };
        let y = integrate_rhs(&f, &[2.0f32], 1.0, &cfg).unwrap();
        assert!((y[0] - 2.0 * (-0.5f32).exp()).abs() < 1e-4);
    }
}
