use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_rational::Ratio;
use num_traits::{One, Zero};

use super::multi_index::MultiIndex;
use super::polynomial::{join_signed, render_monomial, CoeffText, RenderCoeff};
use crate::scalar::{Ring, Scalar, ToScalar};

pub type Rational = Ratio<i64>;

/// Polynomial in the model parameters with exact rational coefficients.
///
/// Serves as the coefficient ring of model drift/diffusion polynomials and
/// of derived cumulant equations, so that a derivation is done once per
/// model shape and rebound to numbers for every parameter vector.
/// Exponent vectors are stored with trailing zeros trimmed, so values built
/// from different parameter counts still compare equal.
#[derive(Clone, PartialEq, Default)]
pub struct ParamPoly {
    terms: BTreeMap<MultiIndex, Rational>,
}

fn trim(mut e: Vec<u32>) -> MultiIndex {
    while e.last() == Some(&0) {
        e.pop();
    }
    MultiIndex::new(e)
}

fn add_exponents(a: &MultiIndex, b: &MultiIndex) -> MultiIndex {
    let n = a.dim().max(b.dim());
    let v = (0..n)
        .map(|i| {
            a.exponents().get(i).copied().unwrap_or(0) + b.exponents().get(i).copied().unwrap_or(0)
        })
        .collect();
    trim(v)
}

impl ParamPoly {
    pub fn constant(c: Rational) -> Self {
        let mut p = ParamPoly::default();
        p.add_term(MultiIndex::new(vec![]), c);
        p
    }

    pub fn int(n: i64) -> Self {
        Self::constant(Rational::from_integer(n))
    }

    /// The parameter `theta_i`.
    pub fn param(i: usize) -> Self {
        let mut e = vec![0; i + 1];
        e[i] = 1;
        let mut p = ParamPoly::default();
        p.add_term(MultiIndex::new(e), Rational::one());
        p
    }

    fn add_term(&mut self, e: MultiIndex, c: Rational) {
        if c.is_zero() {
            return;
        }
        let sum = self.terms.get(&e).copied().unwrap_or_else(Rational::zero) + c;
        if sum.is_zero() {
            self.terms.remove(&e);
        } else {
            self.terms.insert(e, sum);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &Rational)> {
        self.terms.iter()
    }

    /// Number of parameters referenced (highest index + 1).
    pub fn arity(&self) -> usize {
        self.terms.keys().map(MultiIndex::dim).max().unwrap_or(0)
    }

    /// `Some(c)` if this is a pure constant.
    pub fn as_constant(&self) -> Option<Rational> {
        match self.terms.len() {
            0 => Some(Rational::zero()),
            1 => self
                .terms
                .iter()
                .next()
                .filter(|(e, _)| e.dim() == 0)
                .map(|(_, c)| *c),
            _ => None,
        }
    }

    /// Numeric value at parameter vector `theta`.
    pub fn eval<T: Scalar>(&self, theta: &[T]) -> T {
        let mut acc = T::zero();
        for (e, c) in &self.terms {
            let mut term: T = c.to_scalar();
            for (i, &k) in e.exponents().iter().enumerate() {
                if k > 0 {
                    term = term * theta[i].powi(k as i32);
                }
            }
            acc = acc + term;
        }
        acc
    }

    pub fn render(&self, names: &[&str]) -> String {
        let parts = self
            .terms
            .iter()
            .map(|(e, c)| {
                let ct = c.coeff_text();
                let mono = render_monomial(e, names);
                let s = if mono.is_empty() {
                    ct.body
                } else if ct.unit {
                    mono
                } else {
                    format!("{}*{}", ct.body, mono)
                };
                (ct.negative, s)
            })
            .collect();
        join_signed(parts)
    }

    fn default_names(&self) -> Vec<String> {
        (0..self.arity()).map(|i| format!("p{i}")).collect()
    }
}

impl fmt::Debug for ParamPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = self.default_names();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        write!(f, "{}", self.render(&refs))
    }
}

impl Zero for ParamPoly {
    fn zero() -> Self {
        ParamPoly::default()
    }
    fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
}

impl One for ParamPoly {
    fn one() -> Self {
        ParamPoly::int(1)
    }
}

impl Add for ParamPoly {
    type Output = ParamPoly;
    fn add(mut self, rhs: Self) -> ParamPoly {
        for (e, c) in rhs.terms {
            self.add_term(e, c);
        }
        self
    }
}

impl Sub for ParamPoly {
    type Output = ParamPoly;
    fn sub(self, rhs: Self) -> ParamPoly {
        self + (-rhs)
    }
}

impl Neg for ParamPoly {
    type Output = ParamPoly;
    fn neg(mut self) -> ParamPoly {
        for c in self.terms.values_mut() {
            *c = -*c;
        }
        self
    }
}

impl Mul for ParamPoly {
    type Output = ParamPoly;
    fn mul(self, rhs: Self) -> ParamPoly {
        let mut out = ParamPoly::default();
        for (e1, c1) in &self.terms {
            for (e2, c2) in &rhs.terms {
                out.add_term(add_exponents(e1, e2), c1 * c2);
            }
        }
        out
    }
}

impl Ring for ParamPoly {
    fn from_int(n: i64) -> Self {
        ParamPoly::int(n)
    }
}

/// Parameter polynomials are rendered without names here; callers that know
/// the parameter names go through [`ParamPoly::render`].
impl RenderCoeff for ParamPoly {
    fn coeff_text(&self) -> CoeffText {
        let names = self.default_names();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        render_param_coeff(self, &refs)
    }
}

pub(crate) fn render_param_coeff(p: &ParamPoly, names: &[&str]) -> CoeffText {
    if p.terms.len() == 1 {
        let (e, c) = p.terms.iter().next().unwrap();
        let ct = c.coeff_text();
        let mono = render_monomial(e, names);
        let (body, unit) = if mono.is_empty() {
            (ct.body, ct.unit)
        } else if ct.unit {
            (mono, false)
        } else {
            (format!("{}*{}", ct.body, mono), false)
        };
        CoeffText {
            negative: ct.negative,
            body,
            unit,
            compound: false,
        }
    } else {
        CoeffText {
            negative: false,
            body: p.render(names),
            unit: false,
            compound: true,
        }
    }
}
