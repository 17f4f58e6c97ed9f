//! Sparse multivariate polynomials over the state variables and the
//! generator action used to derive moment equations.

mod multi_index;
mod param;
mod polynomial;

pub use multi_index::MultiIndex;
pub use param::{ParamPoly, Rational};
pub use polynomial::{CoeffText, Polynomial, RenderCoeff};

pub(crate) use param::render_param_coeff;

use thiserror::Error;

use crate::scalar::Ring;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolyError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("diffusion matrix is not symmetric at entry ({0}, {1})")]
    AsymmetricDiffusion(usize, usize),
}

/// Moment-form generator action on the monomial `x^r`:
///
/// `G x^r = sum_i r_i x^(r-e_i) mu_i + 1/2 sum_ij d^2(x^r)/dx_i dx_j sigma_ij`
///
/// so that `d/dt E[x^r] = E[G x^r]`. `diffusion` is the full covariance-rate
/// matrix `sigma sigma^T` and must be symmetric. The result is exact.
pub fn apply_generator<C: Ring>(
    r: &MultiIndex,
    drift: &[Polynomial<C>],
    diffusion: &[Vec<Polynomial<C>>],
) -> Result<Polynomial<C>, PolyError> {
    let m = r.dim();
    check_model_shape(m, drift, diffusion)?;

    let mut out = Polynomial::zero(m);
    for i in 0..m {
        let ri = r.get(i);
        if ri == 0 {
            continue;
        }
        let lower = r.decrement(i).unwrap();
        let term = drift[i].mul_monomial(&lower, &C::from_int(ri as i64));
        out = out.checked_add(&term)?;

        // diagonal: (1/2) r_i (r_i - 1) x^(r - 2e_i) sigma_ii
        if ri >= 2 {
            let lower2 = lower.decrement(i).unwrap();
            let k = (ri as i64) * (ri as i64 - 1) / 2;
            let term = diffusion[i][i].mul_monomial(&lower2, &C::from_int(k));
            out = out.checked_add(&term)?;
        }
        // off-diagonal pairs i < j appear twice in the double sum
        for j in (i + 1)..m {
            let rj = r.get(j);
            if rj == 0 {
                continue;
            }
            let lower2 = lower.decrement(j).unwrap();
            let k = (ri as i64) * (rj as i64);
            let term = diffusion[i][j].mul_monomial(&lower2, &C::from_int(k));
            out = out.checked_add(&term)?;
        }
    }
    Ok(out)
}

pub(crate) fn check_model_shape<C: Ring>(
    m: usize,
    drift: &[Polynomial<C>],
    diffusion: &[Vec<Polynomial<C>>],
) -> Result<(), PolyError> {
    let mismatch = |found| PolyError::DimensionMismatch { expected: m, found };
    if drift.len() != m {
        return Err(mismatch(drift.len()));
    }
    if diffusion.len() != m {
        return Err(mismatch(diffusion.len()));
    }
    for p in drift {
        if p.dim() != m {
            return Err(mismatch(p.dim()));
        }
    }
    for (i, row) in diffusion.iter().enumerate() {
        if row.len() != m {
            return Err(mismatch(row.len()));
        }
        for (j, p) in row.iter().enumerate() {
            if p.dim() != m {
                return Err(mismatch(p.dim()));
            }
            if j > i && *p != diffusion[j][i] {
                return Err(PolyError::AsymmetricDiffusion(i, j));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cir(b: f64, mu: f64, s2: f64) -> (Vec<Polynomial<f64>>, Vec<Vec<Polynomial<f64>>>) {
        let x = Polynomial::var(1, 0);
        let drift = &Polynomial::constant(1, b * mu) - &x.scale(&b);
        let diff = x.scale(&s2);
        (vec![drift], vec![vec![diff]])
    }

    #[test]
    fn cir_first_moment() {
        let (d, s) = cir(1.5, 58.0, 15.0);
        let g = apply_generator(&[1].into(), &d, &s).unwrap();
        assert_eq!(g.coeff(&[0].into()), 1.5 * 58.0);
        assert_eq!(g.coeff(&[1].into()), -1.5);
        assert_eq!(g.len(), 2);
    }

    #[test]
    fn cir_second_moment() {
        let (b, mu, s2) = (0.7, 3.0, 0.4);
        let (d, s) = cir(b, mu, s2);
        let g = apply_generator(&[2].into(), &d, &s).unwrap();
        // 2 b mu x - 2 b x^2 + s2 x
        assert!((g.coeff(&[1].into()) - (2.0 * b * mu + s2)).abs() < 1e-15);
        assert_eq!(g.coeff(&[2].into()), -2.0 * b);
        assert_eq!(g.len(), 2);
    }

    #[test]
    fn zero_model_gives_zero() {
        let z = Polynomial::<f64>::zero(2);
        let drift = vec![z.clone(), z.clone()];
        let diff = vec![vec![z.clone(), z.clone()], vec![z.clone(), z]];
        for r in [[1, 0], [2, 3], [0, 4]] {
            assert!(apply_generator(&r.into(), &drift, &diff).unwrap().is_zero());
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let x = Polynomial::<f64>::var(2, 0);
        let drift = vec![x.clone(), x.clone()];
        let asym = vec![vec![x.clone(), x.clone()], vec![x.scale(&2.0), x.clone()]];
        assert_eq!(
            apply_generator(&[1, 1].into(), &drift, &asym),
            Err(PolyError::AsymmetricDiffusion(0, 1))
        );
        let short = vec![x.clone()];
        assert!(apply_generator(&[1, 1].into(), &short, &asym).is_err());
    }

    #[test]
    fn linear_coefficients_keep_degree() {
        let (d, s) = cir(1.2, 4.0, 0.9);
        for k in 1..=4u32 {
            let g = apply_generator(&[k].into(), &d, &s).unwrap();
            assert!(g.degree().unwrap() <= k);
        }
    }
}
