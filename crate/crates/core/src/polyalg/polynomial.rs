use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use num_rational::Ratio;

use super::multi_index::MultiIndex;
use super::PolyError;
use crate::scalar::Ring;

/// Sparse multivariate polynomial in `dim` variables with coefficients in `C`.
///
/// Canonical form: no stored coefficient compares equal to zero. Terms are
/// kept in graded order (see [`MultiIndex`]).
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial<C> {
    dim: usize,
    terms: BTreeMap<MultiIndex, C>,
}

impl<C: Ring> Polynomial<C> {
    pub fn zero(dim: usize) -> Self {
        Polynomial {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: C) -> Self {
        Self::monomial(MultiIndex::zero(dim), c)
    }

    pub fn one(dim: usize) -> Self {
        Self::constant(dim, C::one())
    }

    /// The coordinate polynomial `x_i`.
    pub fn var(dim: usize, i: usize) -> Self {
        assert!(i < dim, "variable {i} out of range for dim {dim}");
        Self::monomial(MultiIndex::unit(dim, i), C::one())
    }

    pub fn monomial(exponents: MultiIndex, c: C) -> Self {
        let dim = exponents.dim();
        let mut p = Polynomial::zero(dim);
        if !c.is_zero() {
            p.terms.insert(exponents, c);
        }
        p
    }

    /// Builds a polynomial from `(exponents, coefficient)` pairs, summing
    /// repeated exponents.
    pub fn from_terms<I>(dim: usize, terms: I) -> Result<Self, PolyError>
    where
        I: IntoIterator<Item = (MultiIndex, C)>,
    {
        let mut p = Polynomial::zero(dim);
        for (e, c) in terms {
            if e.dim() != dim {
                return Err(PolyError::DimensionMismatch {
                    expected: dim,
                    found: e.dim(),
                });
            }
            p.add_term(e, c);
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &C)> {
        self.terms.iter()
    }

    pub fn coeff(&self, e: &MultiIndex) -> C {
        self.terms.get(e).cloned().unwrap_or_else(C::zero)
    }

    /// Total degree, `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(MultiIndex::order).max()
    }

    /// Adds `c * x^e` in place, keeping canonical form.
    pub fn add_term(&mut self, e: MultiIndex, c: C) {
        debug_assert_eq!(e.dim(), self.dim);
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&e) {
            Some(existing) => {
                let sum = existing.clone() + c;
                if sum.is_zero() {
                    self.terms.remove(&e);
                } else {
                    *existing = sum;
                }
            }
            None => {
                self.terms.insert(e, c);
            }
        }
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_dim(other)?;
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_dim(other)?;
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), -c.clone());
        }
        Ok(out)
    }

    pub fn checked_mul(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_dim(other)?;
        let mut out = Polynomial::zero(self.dim);
        for (e1, c1) in &self.terms {
            for (e2, c2) in &other.terms {
                out.add_term(e1.add(e2), c1.clone() * c2.clone());
            }
        }
        Ok(out)
    }

    /// Multiplies every coefficient by `c`.
    pub fn scale(&self, c: &C) -> Self {
        let mut out = Polynomial::zero(self.dim);
        for (e, v) in &self.terms {
            out.add_term(e.clone(), v.clone() * c.clone());
        }
        out
    }

    /// Multiplies by the monomial `c * x^e`.
    pub fn mul_monomial(&self, e: &MultiIndex, c: &C) -> Self {
        let mut out = Polynomial::zero(self.dim);
        for (k, v) in &self.terms {
            out.add_term(k.add(e), v.clone() * c.clone());
        }
        out
    }

    /// Partial derivative with respect to variable `i`.
    pub fn derivative(&self, i: usize) -> Self {
        let mut out = Polynomial::zero(self.dim);
        for (e, c) in &self.terms {
            if let Some(lower) = e.decrement(i) {
                out.add_term(lower, c.clone() * C::from_int(e.get(i) as i64));
            }
        }
        out
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut out = Polynomial::one(self.dim);
        for _ in 0..k {
            out = &out * self;
        }
        out
    }

    /// Evaluates at `point` using ring arithmetic.
    pub fn eval(&self, point: &[C]) -> C {
        assert_eq!(point.len(), self.dim, "evaluation point has wrong length");
        let mut acc = C::zero();
        for (e, c) in &self.terms {
            let mut term = c.clone();
            for (x, &k) in point.iter().zip(e.exponents()) {
                for _ in 0..k {
                    term = term * x.clone();
                }
            }
            acc = acc + term;
        }
        acc
    }

    /// Maps coefficients into another ring, re-canonicalizing.
    pub fn map_coefficients<D: Ring, F: FnMut(&C) -> D>(&self, mut f: F) -> Polynomial<D> {
        let mut out = Polynomial::zero(self.dim);
        for (e, c) in &self.terms {
            out.add_term(e.clone(), f(c));
        }
        out
    }

    /// Substitutes the variables by polynomials in another variable set
    /// (all `subs` must share one dimension).
    pub fn compose(&self, subs: &[Polynomial<C>], target_dim: usize) -> Result<Self, PolyError> {
        if subs.len() != self.dim {
            return Err(PolyError::DimensionMismatch {
                expected: self.dim,
                found: subs.len(),
            });
        }
        let mut out = Polynomial::zero(target_dim);
        for (e, c) in &self.terms {
            let mut term = Polynomial::constant(target_dim, c.clone());
            for (s, &k) in subs.iter().zip(e.exponents()) {
                for _ in 0..k {
                    term = term.checked_mul(s)?;
                }
            }
            out = out.checked_add(&term)?;
        }
        Ok(out)
    }

    fn check_dim(&self, other: &Self) -> Result<(), PolyError> {
        if self.dim != other.dim {
            return Err(PolyError::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        Ok(())
    }
}

// Operator forms panic on dimension mismatch; use the `checked_*` methods
// when dimensions are not known to agree.
impl<C: Ring> Add for &Polynomial<C> {
    type Output = Polynomial<C>;
    fn add(self, rhs: Self) -> Polynomial<C> {
        self.checked_add(rhs).expect("polynomial dimension mismatch")
    }
}

impl<C: Ring> Sub for &Polynomial<C> {
    type Output = Polynomial<C>;
    fn sub(self, rhs: Self) -> Polynomial<C> {
        self.checked_sub(rhs).expect("polynomial dimension mismatch")
    }
}

impl<C: Ring> Mul for &Polynomial<C> {
    type Output = Polynomial<C>;
    fn mul(self, rhs: Self) -> Polynomial<C> {
        self.checked_mul(rhs).expect("polynomial dimension mismatch")
    }
}

impl<C: Ring> Neg for &Polynomial<C> {
    type Output = Polynomial<C>;
    fn neg(self) -> Polynomial<C> {
        self.scale(&-C::one())
    }
}

impl<C: Ring> Add for Polynomial<C> {
    type Output = Polynomial<C>;
    fn add(self, rhs: Self) -> Polynomial<C> {
        &self + &rhs
    }
}

impl<C: Ring> Sub for Polynomial<C> {
    type Output = Polynomial<C>;
    fn sub(self, rhs: Self) -> Polynomial<C> {
        &self - &rhs
    }
}

impl<C: Ring> Mul for Polynomial<C> {
    type Output = Polynomial<C>;
    fn mul(self, rhs: Self) -> Polynomial<C> {
        &self * &rhs
    }
}

/// How a coefficient prints inside a rendered polynomial.
pub struct CoeffText {
    pub negative: bool,
    /// Magnitude text, without sign.
    pub body: String,
    /// Magnitude equals one, so the body can be omitted before a monomial.
    pub unit: bool,
    /// Body is a sum and needs parentheses when multiplied.
    pub compound: bool,
}

pub trait RenderCoeff {
    fn coeff_text(&self) -> CoeffText;
}

impl RenderCoeff for f64 {
    fn coeff_text(&self) -> CoeffText {
        CoeffText {
            negative: *self < 0.0,
            body: format!("{}", self.abs()),
            unit: self.abs() == 1.0,
            compound: false,
        }
    }
}

impl RenderCoeff for f32 {
    fn coeff_text(&self) -> CoeffText {
        CoeffText {
            negative: *self < 0.0,
            body: format!("{}", self.abs()),
            unit: self.abs() == 1.0,
            compound: false,
        }
    }
}

impl RenderCoeff for Ratio<i64> {
    fn coeff_text(&self) -> CoeffText {
        let negative = *self.numer() < 0;
        let mag = if negative { -*self } else { *self };
        CoeffText {
            negative,
            body: mag.to_string(),
            unit: mag == Ratio::from_integer(1),
            compound: false,
        }
    }
}

pub(crate) fn render_monomial(e: &MultiIndex, names: &[&str]) -> String {
    e.exponents()
        .iter()
        .zip(names)
        .filter(|(&k, _)| k > 0)
        .map(|(&k, n)| {
            if k == 1 {
                n.to_string()
            } else {
                format!("{n}^{k}")
            }
        })
        .collect::<Vec<_>>()
        .join("*")
}

/// Joins signed term strings as `a + b - c`.
pub(crate) fn join_signed(parts: Vec<(bool, String)>) -> String {
    if parts.is_empty() {
        return "0".to_string();
    }
    let mut out = String::new();
    for (k, (neg, s)) in parts.into_iter().enumerate() {
        match (k, neg) {
            (0, true) => {
                out.push('-');
                out.push_str(&s);
            }
            (0, false) => out.push_str(&s),
            (_, true) => {
                out.push_str(" - ");
                out.push_str(&s);
            }
            (_, false) => {
                out.push_str(" + ");
                out.push_str(&s);
            }
        }
    }
    out
}

impl<C: Ring> Polynomial<C> {
    /// Renders with a caller-supplied coefficient formatter.
    pub fn render_by<F: Fn(&C) -> CoeffText>(&self, names: &[&str], coeff: F) -> String {
        assert_eq!(names.len(), self.dim, "one name per variable");
        let parts = self
            .terms
            .iter()
            .map(|(e, c)| {
                let t = coeff(c);
                let mono = render_monomial(e, names);
                let s = if mono.is_empty() {
                    t.body
                } else if t.unit {
                    mono
                } else if t.compound {
                    format!("({})*{}", t.body, mono)
                } else {
                    format!("{}*{}", t.body, mono)
                };
                (t.negative, s)
            })
            .collect();
        join_signed(parts)
    }
}

impl<C: Ring + RenderCoeff> Polynomial<C> {
    /// Human-readable form, e.g. `87 - 1.5*x1`.
    pub fn render(&self, names: &[&str]) -> String {
        self.render_by(names, RenderCoeff::coeff_text)
    }

    /// Renders with default variable names `x1, x2, ...`.
    pub fn render_default(&self) -> String {
        let names: Vec<String> = (1..=self.dim).map(|i| format!("x{i}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        self.render(&refs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(i: usize) -> Polynomial<f64> {
        Polynomial::var(2, i)
    }

    fn c(v: f64) -> Polynomial<f64> {
        Polynomial::constant(2, v)
    }

    #[test]
    fn additive_inverse_is_zero() {
        let p = x(0);
        let q = x(0).scale(&-1.0);
        assert!(p.checked_add(&q).unwrap().is_zero());
    }

    #[test]
    fn add_distinct_vars() {
        let s = &x(0) + &x(1);
        assert_eq!(s.len(), 2);
        assert_eq!(s.coeff(&[1, 0].into()), 1.0);
        assert_eq!(s.coeff(&[0, 1].into()), 1.0);
    }

    #[test]
    fn add_like_terms() {
        let p = &(&c(2.0) * &x(0).pow(2)) + &x(1);
        let q = &c(3.0) * &x(0).pow(2);
        let s = &p + &q;
        assert_eq!(s.coeff(&[2, 0].into()), 5.0);
        assert_eq!(s.coeff(&[0, 1].into()), 1.0);
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn difference_of_squares() {
        let p = &(&x(0) + &x(1)) * &(&x(0) - &x(1));
        let want = &x(0).pow(2) - &x(1).pow(2);
        assert_eq!(p, want);
    }

    #[test]
    fn multiplicative_identity() {
        let p = &(&c(2.0) * &x(0)) + &(&x(0) * &x(1));
        assert_eq!(&Polynomial::one(2) * &p, p);
    }

    #[test]
    fn drift_times_phi1() {
        // (a*p1 - b*p1^2 + c*p1*p2) * p1 with a=1, b=2, c=3
        let drift = &(&x(0) - &(&c(2.0) * &x(0).pow(2))) + &(&c(3.0) * &(&x(0) * &x(1)));
        let got = &drift * &x(0);
        let want = Polynomial::from_terms(
            2,
            vec![
                ([2, 0].into(), 1.0),
                ([3, 0].into(), -2.0),
                ([2, 1].into(), 3.0),
            ],
        )
        .unwrap();
        assert_eq!(got, want);
    }

    #[test]
    fn dimension_mismatch() {
        let p = Polynomial::<f64>::var(1, 0);
        let q = Polynomial::<f64>::var(2, 0);
        assert!(matches!(
            p.checked_add(&q),
            Err(PolyError::DimensionMismatch { .. })
        ));
        assert!(p.checked_mul(&q).is_err());
    }

    #[test]
    fn exact_zero_pruning_only() {
        let p = Polynomial::from_terms(1, vec![([1].into(), 1e-300), ([0].into(), 0.0)]).unwrap();
        assert_eq!(p.len(), 1);
    }

    #[test]
    fn derivative_and_eval() {
        let p = &(&x(0).pow(3) * &x(1)) + &c(4.0);
        let d = p.derivative(0);
        assert_eq!(d.coeff(&[2, 1].into()), 3.0);
        assert_eq!(p.eval(&[2.0, 3.0]), 28.0);
    }

    #[test]
    fn render_text() {
        let p = &c(87.0) - &(&c(1.5) * &Polynomial::var(2, 0));
        assert_eq!(p.render_default(), "87 - 1.5*x1");
        assert_eq!(Polynomial::<f64>::zero(1).render_default(), "0");
        let q = &x(0).pow(2) * &x(1);
        assert_eq!(q.scale(&-1.0).render(&["S", "V"]), "-S^2*V");
    }

    #[test]
    fn rational_coefficients_are_exact() {
        let half = Ratio::new(1, 2);
        let p = Polynomial::<Ratio<i64>>::var(1, 0).scale(&half);
        let q = &p + &p;
        assert_eq!(q, Polynomial::var(1, 0));
    }
}
