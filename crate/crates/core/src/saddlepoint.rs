//! Leading-order saddlepoint density from a truncated cumulant generating
//! function.
//!
//! For cumulants `kappa_r`, `1 <= |r| <= n`, the truncated CGF is
//! `K(L) = sum_r kappa_r L^r / r!` and the density approximation is
//!
//! ```text
//! f(x) = (2 pi)^(-m/2) |H(L)|^(-1/2) exp{K(L) - L.x},   grad K(L) = x,
//! ```
//!
//! with `H` the Hessian of `K`. The result is not normalized.

use thiserror::Error;

use crate::cumulant::CumulantSet;
use crate::linalg::{self, Matrix};
use crate::polyalg::MultiIndex;
use crate::quadrature::{self, QuadError, QuadOptions};
use crate::scalar::Scalar;

/// Newton iterations before the Gaussian fallback is taken.
pub const MAX_NEWTON_ITERATIONS: usize = 50;
/// Step halvings per Newton iteration.
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SaddleError {
    #[error("second-order cumulant block is not positive definite")]
    CovarianceNotPositiveDefinite,
    #[error("point has length {found}, expected {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("normalization supports dimensions 1 and 2, got {0}")]
    UnsupportedDimension(usize),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// Truncated CGF built from a cumulant vector whose covariance block is
/// positive definite.
#[derive(Debug, Clone)]
pub struct TruncatedCgf<T> {
    kappa: CumulantSet<T>,
    /// `(r, kappa_r / r!)`
    terms: Vec<(MultiIndex, T)>,
    mean: Vec<T>,
    cov: Matrix<T>,
    cov_factor: Matrix<T>,
}

/// Value, gradient and Hessian of a truncated CGF at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct CgfEval<T> {
    pub value: T,
    pub gradient: Vec<T>,
    pub hessian: Matrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaddleSolution<T> {
    pub saddle: Vec<T>,
    pub hessian: Matrix<T>,
    pub log_density: T,
    pub converged: bool,
    pub fallback_used: bool,
    pub iterations: usize,
}

impl<T: Scalar> SaddleSolution<T> {
    pub fn density(&self) -> T {
        self.log_density.exp()
    }
}

impl<T: Scalar> TruncatedCgf<T> {
    pub fn new(kappa: CumulantSet<T>) -> Result<Self, SaddleError> {
        let cov = kappa.covariance();
        let cov_factor = linalg::cholesky(&cov).ok_or(SaddleError::CovarianceNotPositiveDefinite)?;
        let terms = kappa
            .shape()
            .indices()
            .iter()
            .zip(kappa.values())
            .filter(|(_, v)| **v != T::zero())
            .map(|(r, &v)| (r.clone(), v / T::lit(r.factorial() as f64)))
            .collect();
        let mean = kappa.mean();
        Ok(TruncatedCgf {
            kappa,
            terms,
            mean,
            cov,
            cov_factor,
        })
    }

    pub fn dim(&self) -> usize {
        self.kappa.dim()
    }

    pub fn cumulants(&self) -> &CumulantSet<T> {
        &self.kappa
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn covariance(&self) -> &Matrix<T> {
        &self.cov
    }

    /// Exact evaluation of the truncated series and its first two derivatives.
    pub fn eval(&self, lambda: &[T]) -> CgfEval<T> {
        let m = self.dim();
        assert_eq!(lambda.len(), m, "lambda has wrong length");
        let mut value = T::zero();
        let mut gradient = vec![T::zero(); m];
        let mut hessian = vec![vec![T::zero(); m]; m];
        let pow = |i: usize, k: u32| -> T {
            match k {
                0 => T::one(),
                1 => lambda[i],
                _ => lambda[i].powi(k as i32),
            }
        };
        let mono = |e: &[u32]| -> T { e.iter().enumerate().fold(T::one(), |a, (i, &k)| a * pow(i, k)) };
        for (r, c) in &self.terms {
            let e = r.exponents();
            value = value + *c * mono(e);
            let mut ed = e.to_vec();
            for i in 0..m {
                if e[i] == 0 {
                    continue;
                }
                ed[i] -= 1;
                let ci = *c * T::lit(e[i] as f64);
                gradient[i] = gradient[i] + ci * mono(&ed);
                for j in i..m {
                    if ed[j] == 0 {
                        continue;
                    }
                    ed[j] -= 1;
                    let v = ci * T::lit((ed[j] + 1) as f64) * mono(&ed);
                    ed[j] += 1;
                    hessian[i][j] = hessian[i][j] + v;
                    if i != j {
                        hessian[j][i] = hessian[j][i] + v;
                    }
                }
                ed[i] += 1;
            }
        }
        CgfEval {
            value,
            gradient,
            hessian,
        }
    }

    fn residual(&self, lambda: &[T], x: &[T]) -> (CgfEval<T>, Vec<T>) {
        let ev = self.eval(lambda);
        let res = ev.gradient.iter().zip(x).map(|(&g, &xi)| g - xi).collect();
        (ev, res)
    }

    /// Gaussian saddle `Sigma^{-1} (x - mean)`.
    pub fn gaussian_saddle(&self, x: &[T]) -> Vec<T> {
        let d: Vec<T> = x.iter().zip(&self.mean).map(|(&a, &b)| a - b).collect();
        linalg::cholesky_solve(&self.cov_factor, &d)
    }

    /// Solves `grad K(L) = x` by damped Newton from the Gaussian saddle.
    ///
    /// Convergence means `|grad K - x| <= tol (1 + |x|)` with a positive
    /// definite Hessian. Otherwise the Gaussian (order 2) saddlepoint from
    /// the same mean and covariance is returned with `fallback_used` set.
    pub fn solve_saddle(&self, x: &[T], tol: T) -> Result<SaddleSolution<T>, SaddleError> {
        let m = self.dim();
        if x.len() != m {
            return Err(SaddleError::LengthMismatch {
                expected: m,
                found: x.len(),
            });
        }
        let target = tol * (T::one() + linalg::norm(x));
        let mut lambda = self.gaussian_saddle(x);
        let (mut ev, mut res) = self.residual(&lambda, x);
        let mut rnorm = linalg::norm(&res);
        let mut iterations = 0;
        let mut converged = false;

        while iterations < MAX_NEWTON_ITERATIONS && rnorm.is_finite() {
            if rnorm <= target {
                converged = true;
                break;
            }
            iterations += 1;
            let neg: Vec<T> = res.iter().map(|&v| -v).collect();
            let Some(step) = linalg::solve(&ev.hessian, &neg) else {
                break;
            };
            let mut alpha = T::one();
            let mut accepted = false;
            for _ in 0..MAX_HALVINGS {
                let trial: Vec<T> = lambda.iter().zip(&step).map(|(&l, &s)| l + alpha * s).collect();
                let (tev, tres) = self.residual(&trial, x);
                let tnorm = linalg::norm(&tres);
                if tnorm.is_finite() && tnorm < rnorm {
                    lambda = trial;
                    ev = tev;
                    res = tres;
                    rnorm = tnorm;
                    accepted = true;
                    break;
                }
                alpha = alpha * T::lit(0.5);
            }
            if !accepted {
                converged = rnorm <= target;
                break;
            }
        }

        if converged {
            // one polishing step, kept only if it does not increase the residual
            let neg: Vec<T> = res.iter().map(|&v| -v).collect();
            if let Some(step) = linalg::solve(&ev.hessian, &neg) {
                let trial: Vec<T> = lambda.iter().zip(&step).map(|(&l, &s)| l + s).collect();
                let (tev, tres) = self.residual(&trial, x);
                if linalg::norm(&tres) <= rnorm {
                    lambda = trial;
                    ev = tev;
                }
            }
            if let Some(l) = linalg::cholesky(&ev.hessian) {
                let log_density = self.log_density_at(&lambda, &ev, &l, x);
                if log_density.is_finite() {
                    return Ok(SaddleSolution {
                        saddle: lambda,
                        hessian: ev.hessian,
                        log_density,
                        converged: true,
                        fallback_used: false,
                        iterations,
                    });
                }
            }
        }
        Ok(self.gaussian_solution(x, iterations))
    }

    fn log_density_at(&self, lambda: &[T], ev: &CgfEval<T>, chol: &Matrix<T>, x: &[T]) -> T {
        let m = T::lit(self.dim() as f64);
        let two_pi = T::lit(2.0 * std::f64::consts::PI);
        -T::lit(0.5) * m * two_pi.ln() - T::lit(0.5) * linalg::cholesky_log_det(chol) + ev.value
            - linalg::dot(lambda, x)
    }

    /// Order-2 saddlepoint, which is the exact normal density with the same
    /// mean and covariance.
    fn gaussian_solution(&self, x: &[T], iterations: usize) -> SaddleSolution<T> {
        let lambda = self.gaussian_saddle(x);
        let half = T::lit(0.5);
        let value = linalg::dot(&self.mean, &lambda)
            + half * linalg::dot(&lambda, &linalg::mat_vec(&self.cov, &lambda));
        let ev = CgfEval {
            value,
            gradient: x.to_vec(),
            hessian: self.cov.clone(),
        };
        let log_density = self.log_density_at(&lambda, &ev, &self.cov_factor, x);
        SaddleSolution {
            saddle: lambda,
            hessian: self.cov.clone(),
            log_density,
            converged: false,
            fallback_used: true,
            iterations,
        }
    }

    /// Unnormalized saddlepoint log-density at `x` with the default tolerance.
    pub fn log_density(&self, x: &[T]) -> Result<T, SaddleError> {
        Ok(self.solve_saddle(x, default_tol())?.log_density)
    }

    pub fn density(&self, x: &[T]) -> Result<T, SaddleError> {
        Ok(self.log_density(x)?.exp())
    }
}

/// Default relative saddle tolerance: `1e-10` in `f64`, looser in `f32`.
pub fn default_tol<T: Scalar>() -> T {
    T::lit(1e-10).max(T::epsilon() * T::lit(64.0))
}

/// Closed-form log-density for a fourth-order univariate truncation given its
/// saddle `theta0` (which satisfies `x = k1 + t k2 + t^2 k3/2 + t^3 k4/6`).
pub fn quartic_log_density<T: Scalar>(kappa: [T; 4], theta0: T) -> T {
    let [_, k2, k3, k4] = kappa;
    let t = theta0;
    let half = T::lit(0.5);
    let curvature = k2 + k3 * t + half * k4 * t * t;
    let exponent = -(t * t * half) * k2 - (t * t * t / T::lit(3.0)) * k3 - (t.powi(4) / T::lit(8.0)) * k4;
    -half * (T::lit(2.0 * std::f64::consts::PI) * curvature).ln() + exponent
}

/// Integral of the (unnormalized) density over a box, by adaptive
/// quadrature. Supports `m <= 2`.
pub fn normalize(
    cgf: &TruncatedCgf<f64>,
    lower: &[f64],
    upper: &[f64],
    opts: &QuadOptions,
) -> Result<f64, SaddleError> {
    let f1 = |x: f64| cgf.density(&[x]).unwrap_or(0.0);
    match cgf.dim() {
        1 => Ok(quadrature::integrate(f1, lower[0], upper[0], opts)?.value),
        2 => {
            let f = |x: f64, y: f64| cgf.density(&[x, y]).unwrap_or(0.0);
            Ok(quadrature::integrate_2d(f, (lower[0], upper[0]), (lower[1], upper[1]), opts)?.value)
        }
        m => Err(SaddleError::UnsupportedDimension(m)),
    }
}
