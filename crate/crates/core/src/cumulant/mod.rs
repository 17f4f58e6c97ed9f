//! Cumulant index sets, moment/cumulant conversions under truncation, and
//! derivation of the closed cumulant ODE system for a polynomial diffusion.

mod derive;

pub use derive::{derive_ode_system, BoundSystem, CumulantOdeSystem, RhsTerm};

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use thiserror::Error;

use crate::polyalg::{MultiIndex, PolyError};
use crate::scalar::{Ring, Scalar};

/// Highest truncation order accepted.
pub const MAX_ORDER: u32 = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CumulantError {
    #[error("truncation order {0} is below 2; the saddlepoint needs at least a variance")]
    OrderTooLow(u32),
    #[error("truncation order {0} exceeds the supported maximum of {MAX_ORDER}")]
    OrderTooHigh(u32),
    #[error("state dimension must be at least 1")]
    ZeroDimension,
    #[error("moment {0:?} is required but was not supplied")]
    MissingMoment(MultiIndex),
    #[error("expected {expected} values, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// All multi-indices with `1 <= |r| <= n` in graded order.
pub fn enumerate_cumulants(m: usize, n: u32) -> Result<Vec<MultiIndex>, CumulantError> {
    if m == 0 {
        return Err(CumulantError::ZeroDimension);
    }
    if n < 2 {
        return Err(CumulantError::OrderTooLow(n));
    }
    if n > MAX_ORDER {
        return Err(CumulantError::OrderTooHigh(n));
    }
    Ok(indices_up_to(m, n))
}

/// Multi-indices of order exactly `k` in descending lexicographic order.
pub(crate) fn indices_of_order(m: usize, k: u32) -> Vec<MultiIndex> {
    fn rec(m: usize, k: u32, prefix: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
        if prefix.len() == m - 1 {
            prefix.push(k);
            out.push(MultiIndex::new(prefix.clone()));
            prefix.pop();
            return;
        }
        for first in (0..=k).rev() {
            prefix.push(first);
            rec(m, k - first, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(m, k, &mut Vec::with_capacity(m), &mut out);
    out
}

/// Multi-indices with `1 <= |r| <= n`, graded.
pub(crate) fn indices_up_to(m: usize, n: u32) -> Vec<MultiIndex> {
    (1..=n).flat_map(|k| indices_of_order(m, k)).collect()
}

/// Dimension, truncation order and index layout of a cumulant vector.
#[derive(Debug, PartialEq, Eq)]
pub struct CumulantShape {
    dim: usize,
    order: u32,
    indices: Vec<MultiIndex>,
    position: HashMap<MultiIndex, usize>,
}

impl CumulantShape {
    pub fn new(dim: usize, order: u32) -> Result<Arc<Self>, CumulantError> {
        let indices = enumerate_cumulants(dim, order)?;
        let position = indices
            .iter()
            .enumerate()
            .map(|(k, r)| (r.clone(), k))
            .collect();
        Ok(Arc::new(CumulantShape {
            dim,
            order,
            indices,
            position,
        }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn position(&self, r: &MultiIndex) -> Option<usize> {
        self.position.get(r).copied()
    }

    /// Name used in rendered equations: `k3` for `m = 1`, `k21` for `m = 2`.
    pub fn name(&self, k: usize) -> String {
        format!("k{}", self.indices[k].label())
    }
}

/// Cumulant values aligned with a [`CumulantShape`].
#[derive(Debug, Clone, PartialEq)]
pub struct CumulantSet<T> {
    shape: Arc<CumulantShape>,
    values: Vec<T>,
}

impl<T: Scalar> CumulantSet<T> {
    pub fn zeros(shape: Arc<CumulantShape>) -> Self {
        let values = vec![T::zero(); shape.len()];
        CumulantSet { shape, values }
    }

    pub fn from_values(shape: Arc<CumulantShape>, values: Vec<T>) -> Result<Self, CumulantError> {
        if values.len() != shape.len() {
            return Err(CumulantError::LengthMismatch {
                expected: shape.len(),
                found: values.len(),
            });
        }
        Ok(CumulantSet { shape, values })
    }

    /// Univariate convenience: `[k1, k2, ..., kn]`.
    pub fn univariate(values: &[T]) -> Result<Self, CumulantError> {
        let shape = CumulantShape::new(1, values.len() as u32)?;
        Self::from_values(shape, values.to_vec())
    }

    /// Point mass at `x`: first-order cumulants equal `x`, everything else zero.
    pub fn point_mass(shape: Arc<CumulantShape>, x: &[T]) -> Result<Self, CumulantError> {
        if x.len() != shape.dim() {
            return Err(CumulantError::LengthMismatch {
                expected: shape.dim(),
                found: x.len(),
            });
        }
        let mut set = Self::zeros(shape);
        // first `dim` indices are the unit vectors e_1..e_m
        set.values[..x.len()].copy_from_slice(x);
        Ok(set)
    }

    pub fn shape(&self) -> &Arc<CumulantShape> {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.shape.dim
    }

    pub fn order(&self) -> u32 {
        self.shape.order
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// Value of `kappa_r`; zero for indices beyond the truncation order.
    pub fn get(&self, r: &MultiIndex) -> T {
        self.shape
            .position(r)
            .map(|k| self.values[k])
            .unwrap_or_else(T::zero)
    }

    /// First-order block (the mean vector).
    pub fn mean(&self) -> Vec<T> {
        self.values[..self.dim()].to_vec()
    }

    /// Second-order block as a dense symmetric matrix (the covariance).
    pub fn covariance(&self) -> Vec<Vec<T>> {
        let m = self.dim();
        let mut cov = vec![vec![T::zero(); m]; m];
        for i in 0..m {
            for j in i..m {
                let r = MultiIndex::unit(m, i).increment(j);
                let v = self.get(&r);
                cov[i][j] = v;
                cov[j][i] = v;
            }
        }
        cov
    }

    /// Copy truncated to a lower order.
    pub fn truncate(&self, order: u32) -> Result<Self, CumulantError> {
        let shape = CumulantShape::new(self.dim(), order)?;
        let values = shape.indices().iter().map(|r| self.get(r)).collect();
        Self::from_values(shape, values)
    }
}

/// Raw moments `m_r` for all `|r| <= target_order` (the zero index maps to 1).
///
/// Uses the recursion `m_r = sum_{s <= r - e_i} C(r - e_i, s) kappa_{s + e_i}
/// m_{r - e_i - s}` with `i` the first nonzero component of `r`; cumulants
/// above the truncation order are taken as zero.
pub fn moments_from_cumulants<T: Scalar>(
    kappa: &CumulantSet<T>,
    target_order: u32,
) -> BTreeMap<MultiIndex, T> {
    moment_recursion(kappa.dim(), target_order, |r| kappa.get(r))
}

pub(crate) fn moment_recursion<C: Ring, F: Fn(&MultiIndex) -> C>(
    m: usize,
    target_order: u32,
    kappa: F,
) -> BTreeMap<MultiIndex, C> {
    let mut moments = BTreeMap::new();
    moments.insert(MultiIndex::zero(m), C::one());
    for r in indices_up_to(m, target_order) {
        let i = r.first_nonzero().unwrap();
        let base = r.decrement(i).unwrap();
        let mut acc = C::zero();
        for s in base.sub_indices() {
            let k = kappa(&s.increment(i));
            if k.is_zero() {
                continue;
            }
            let rest = base.checked_sub(&s).unwrap();
            let coef = C::from_int(base.binomial(&s) as i64);
            acc = acc + coef * k * moments[&rest].clone();
        }
        moments.insert(r, acc);
    }
    moments
}

/// Inverse of [`moments_from_cumulants`] up to order `order`.
pub fn cumulants_from_moments<T: Scalar>(
    dim: usize,
    order: u32,
    moments: &BTreeMap<MultiIndex, T>,
) -> Result<CumulantSet<T>, CumulantError> {
    let shape = CumulantShape::new(dim, order)?;
    let zero = MultiIndex::zero(dim);
    let moment = |r: &MultiIndex| -> Result<T, CumulantError> {
        if *r == zero {
            return Ok(T::one());
        }
        moments
            .get(r)
            .copied()
            .ok_or_else(|| CumulantError::MissingMoment(r.clone()))
    };
    let mut values: Vec<T> = Vec::with_capacity(shape.len());
    for r in shape.indices() {
        let i = r.first_nonzero().unwrap();
        let base = r.decrement(i).unwrap();
        let mut acc = moment(r)?;
        for s in base.sub_indices() {
            if s == base {
                continue;
            }
            let idx = s.increment(i);
            let k = values[shape.position(&idx).unwrap()];
            let rest = base.checked_sub(&s).unwrap();
            acc = acc - T::from_int(base.binomial(&s) as i64) * k * moment(&rest)?;
        }
        values.push(acc);
    }
    CumulantSet::from_values(shape, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn enumerate_univariate() {
        let got = enumerate_cumulants(1, 4).unwrap();
        let want: Vec<MultiIndex> = (1..=4).map(|k| MultiIndex::new(vec![k])).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn enumerate_bivariate_order_two() {
        let got = enumerate_cumulants(2, 2).unwrap();
        let want: Vec<MultiIndex> = vec![
            [1, 0].into(),
            [0, 1].into(),
            [2, 0].into(),
            [1, 1].into(),
            [0, 2].into(),
        ];
        assert_eq!(got, want);
    }

    #[test]
    fn enumerate_counts() {
        // sum_k C(m + k - 1, k)
        assert_eq!(enumerate_cumulants(2, 3).unwrap().len(), 9);
        assert_eq!(enumerate_cumulants(3, 2).unwrap().len(), 9);
        assert_eq!(enumerate_cumulants(2, 4).unwrap().len(), 14);
    }

    #[test]
    fn enumerate_rejects_bad_orders() {
        assert_eq!(enumerate_cumulants(1, 1), Err(CumulantError::OrderTooLow(1)));
        assert_eq!(enumerate_cumulants(1, 7), Err(CumulantError::OrderTooHigh(7)));
        assert_eq!(enumerate_cumulants(0, 3), Err(CumulantError::ZeroDimension));
    }

    /// Raw moments by expanding exp(K(t)) as a power series (independent of
    /// the recursion used in the library).
    fn series_moments(kappa: &[f64], max: usize) -> Vec<f64> {
        // K(t) = sum kappa_i t^i / i!; M(t) = exp(K) via M' = K' M
        let mut kc = vec![0.0; max + 1];
        let mut fact = 1.0;
        for (i, k) in kappa.iter().enumerate() {
            fact *= (i + 1) as f64;
            if i + 1 <= max {
                kc[i + 1] = k / fact;
            }
        }
        let mut mc = vec![0.0; max + 1];
        mc[0] = 1.0;
        for n in 1..=max {
            let mut s = 0.0;
            for j in 1..=n {
                s += j as f64 * kc[j] * mc[n - j];
            }
            mc[n] = s / n as f64;
        }
        let mut out = vec![0.0; max + 1];
        let mut f = 1.0;
        for n in 0..=max {
            if n > 0 {
                f *= n as f64;
            }
            out[n] = mc[n] * f;
        }
        out
    }

    #[test]
    fn univariate_moments_from_series_oracle() {
        let k = CumulantSet::univariate(&[1.0, 2.0, 0.0, 0.0]).unwrap();
        let m = moments_from_cumulants(&k, 4);
        let oracle = series_moments(&[1.0, 2.0, 0.0, 0.0], 4);
        assert_eq!(oracle[1..], [1.0, 3.0, 7.0, 25.0]);
        for n in 1..=4u32 {
            assert_relative_eq!(m[&MultiIndex::new(vec![n])], oracle[n as usize]);
        }
    }

    #[test]
    fn zero_cumulants_give_zero_moments() {
        let shape = CumulantShape::new(2, 3).unwrap();
        let k = CumulantSet::<f64>::zeros(shape);
        let m = moments_from_cumulants(&k, 5);
        for (r, v) in &m {
            if !r.is_zero() {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn gaussian_moments_under_closure() {
        let k = CumulantSet::univariate(&[0.0, 1.0]).unwrap();
        let m = moments_from_cumulants(&k, 6);
        assert_eq!(m[&MultiIndex::new(vec![3])], 0.0);
        assert_eq!(m[&MultiIndex::new(vec![4])], 3.0);
        assert_eq!(m[&MultiIndex::new(vec![6])], 15.0);
    }

    #[test]
    fn cumulants_from_known_moments() {
        let mut m = BTreeMap::new();
        for (k, v) in [1.0, 3.0, 7.0, 25.0].iter().enumerate() {
            m.insert(MultiIndex::new(vec![k as u32 + 1]), *v);
        }
        let k = cumulants_from_moments(1, 4, &m).unwrap();
        assert_eq!(k.values(), &[1.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn point_mass_has_no_spread() {
        let x: f64 = 1.7;
        let mut m = BTreeMap::new();
        for k in 1..=5u32 {
            m.insert(MultiIndex::new(vec![k]), x.powi(k as i32));
        }
        let k = cumulants_from_moments(1, 5, &m).unwrap();
        assert_relative_eq!(k.values()[0], x);
        for v in &k.values()[1..] {
            assert!(v.abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn independent_components_have_no_mixed_cumulants() {
        // X ~ moments of Gamma(2,1): 2, 6, 24; Y ~ N(1, 4): 1, 5, 13
        let mx = [1.0, 2.0, 6.0, 24.0];
        let my = [1.0, 1.0, 5.0, 13.0];
        let mut m = BTreeMap::new();
        for r in indices_up_to(2, 3) {
            let (a, b) = (r.get(0) as usize, r.get(1) as usize);
            m.insert(r, mx[a] * my[b]);
        }
        let k = cumulants_from_moments(2, 3, &m).unwrap();
        for r in [[1, 1], [2, 1], [1, 2]] {
            assert!(f64::abs(k.get(&r.into())) < 1e-12);
        }
        assert_relative_eq!(k.get(&[2, 0].into()), 2.0, epsilon = 1e-12);
        assert_relative_eq!(k.get(&[3, 0].into()), 4.0, epsilon = 1e-12);
        assert_relative_eq!(k.get(&[0, 2].into()), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn missing_moment_is_reported() {
        let m = BTreeMap::from([(MultiIndex::new(vec![1]), 1.0)]);
        assert!(matches!(
            cumulants_from_moments(1, 2, &m),
            Err(CumulantError::MissingMoment(_))
        ));
    }

    #[test]
    fn point_mass_layout() {
        let shape = CumulantShape::new(2, 2).unwrap();
        let k = CumulantSet::point_mass(shape, &[1.0, 2.0]).unwrap();
        assert_eq!(k.values(), &[1.0, 2.0, 0.0, 0.0, 0.0]);
    }

    fn random_cumulants(m: usize, n: u32) -> impl Strategy<Value = CumulantSet<f64>> {
        let shape = CumulantShape::new(m, n).unwrap();
        let len = shape.len();
        (
            proptest::collection::vec(-2.0..2.0f64, len),
            proptest::collection::vec(-0.9..0.9f64, m * m),
        )
            .prop_map(move |(raw, a)| {
                let mut k = CumulantSet::from_values(shape.clone(), raw).unwrap();
                // covariance = I + A A^T / m keeps the order-2 block positive definite
                for i in 0..m {
                    for j in i..m {
                        let mut v = if i == j { 1.0 } else { 0.0 };
                        for l in 0..m {
                            v += a[i * m + l] * a[j * m + l] / m as f64;
                        }
                        let r = MultiIndex::unit(m, i).increment(j);
                        let pos = k.shape().position(&r).unwrap();
                        k.values_mut()[pos] = v;
                    }
                }
                k
            })
    }

    proptest! {
        #[test]
        fn round_trip_univariate(k in random_cumulants(1, 6)) {
            let m = moments_from_cumulants(&k, 6);
            let back = cumulants_from_moments(1, 6, &m).unwrap();
            for (a, b) in k.values().iter().zip(back.values()) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{a} vs {b}");
            }
        }

        #[test]
        fn round_trip_bivariate(k in random_cumulants(2, 4)) {
            let m = moments_from_cumulants(&k, 4);
            let back = cumulants_from_moments(2, 4, &m).unwrap();
            for (a, b) in k.values().iter().zip(back.values()) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{a} vs {b}");
            }
        }

        #[test]
        fn round_trip_trivariate(k in random_cumulants(3, 3)) {
            let m = moments_from_cumulants(&k, 3);
            let back = cumulants_from_moments(3, 3, &m).unwrap();
            for (a, b) in k.values().iter().zip(back.values()) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{a} vs {b}");
            }
        }
    }
}
