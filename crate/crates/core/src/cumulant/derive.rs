use std::collections::BTreeMap;
use std::sync::Arc;

use super::{indices_up_to, CumulantError, CumulantSet, CumulantShape};
use crate::polyalg::{
    apply_generator, check_model_shape, render_param_coeff, MultiIndex, ParamPoly, Polynomial,
};
use crate::scalar::Scalar;

/// One monomial of a derived right-hand side: `slot_value * prod kappa_v^p`.
#[derive(Debug, Clone, PartialEq)]
pub struct RhsTerm {
    /// Index into [`CumulantOdeSystem::coefficients`].
    pub slot: usize,
    /// `(cumulant position, power)` pairs.
    pub factors: Vec<(usize, u32)>,
}

/// Closed cumulant system `d kappa_r / dt = F_r(kappa; theta)` for all
/// `1 <= |r| <= n`.
///
/// Each `F_r` is a polynomial in the cumulants whose coefficients are
/// polynomials in the model parameters. The structure is derived once;
/// [`CumulantOdeSystem::bind`] turns it into a numeric system for a
/// particular parameter vector.
#[derive(Debug)]
pub struct CumulantOdeSystem {
    shape: Arc<CumulantShape>,
    param_names: Vec<String>,
    equations: Vec<Polynomial<ParamPoly>>,
    coefficients: Vec<ParamPoly>,
    table: Vec<Vec<RhsTerm>>,
}

/// Derives the closed cumulant ODE system of order `n`.
///
/// Route: the generator gives `d m_r/dt` as a combination of raw moments;
/// raw moments are expressed through cumulants with every cumulant of order
/// above `n` set to zero; finally `m = m(kappa)` is inverted along the time
/// derivative, `kappa_r' = m_r' - sum_{|s| < |r|} (d m_r / d kappa_s) kappa_s'`,
/// which is a forward substitution because `d m_r / d kappa_r = 1`.
pub fn derive_ode_system(
    drift: &[Polynomial<ParamPoly>],
    diffusion: &[Vec<Polynomial<ParamPoly>>],
    param_names: &[String],
    order: u32,
) -> Result<CumulantOdeSystem, CumulantError> {
    let m = drift.len();
    check_model_shape(m, drift, diffusion)?;
    let shape = CumulantShape::new(m, order)?;
    let nvars = shape.len();

    // Orders added by the generator beyond |r|.
    let excess = drift
        .iter()
        .filter_map(|p| p.degree())
        .map(|d| d.saturating_sub(1))
        .chain(
            diffusion
                .iter()
                .flatten()
                .filter_map(|p| p.degree())
                .map(|d| d.saturating_sub(2)),
        )
        .max()
        .unwrap_or(0);

    // Raw moments as polynomials in the cumulant variables, closure applied.
    let moments = symbolic_moments(&shape, order + excess);

    let mut equations: Vec<Polynomial<ParamPoly>> = Vec::with_capacity(nvars);
    for r in shape.indices() {
        let g = apply_generator(r, drift, diffusion)?;
        let mut rate = Polynomial::zero(nvars);
        for (u, c) in g.terms() {
            rate = rate.checked_add(&moments[u].scale(c))?;
        }
        let m_r = &moments[r];
        for (s_pos, s) in shape.indices().iter().enumerate() {
            if s.order() >= r.order() {
                break;
            }
            let d = m_r.derivative(s_pos);
            if d.is_zero() {
                continue;
            }
            rate = rate.checked_sub(&d.checked_mul(&equations[s_pos])?)?;
        }
        equations.push(rate);
    }

    let (coefficients, table) = compile(&equations);
    Ok(CumulantOdeSystem {
        shape,
        param_names: param_names.to_vec(),
        equations,
        coefficients,
        table,
    })
}

/// Raw moments as polynomials in the cumulant variables, with cumulants
/// outside `shape` (order above the truncation) treated as zero.
fn symbolic_moments(
    shape: &CumulantShape,
    max_order: u32,
) -> BTreeMap<MultiIndex, Polynomial<ParamPoly>> {
    let (m, nvars) = (shape.dim(), shape.len());
    let mut moments = BTreeMap::new();
    moments.insert(MultiIndex::zero(m), Polynomial::one(nvars));
    for r in indices_up_to(m, max_order) {
        let i = r.first_nonzero().unwrap();
        let base = r.decrement(i).unwrap();
        let mut acc = Polynomial::zero(nvars);
        for s in base.sub_indices() {
            let Some(v) = shape.position(&s.increment(i)) else {
                continue;
            };
            let rest = base.checked_sub(&s).unwrap();
            let coef = ParamPoly::int(base.binomial(&s) as i64);
            let term = moments[&rest].mul_monomial(&MultiIndex::unit(nvars, v), &coef);
            acc = &acc + &term;
        }
        moments.insert(r, acc);
    }
    moments
}

fn compile(equations: &[Polynomial<ParamPoly>]) -> (Vec<ParamPoly>, Vec<Vec<RhsTerm>>) {
    let mut coefficients: Vec<ParamPoly> = Vec::new();
    let table = equations
        .iter()
        .map(|eq| {
            eq.terms()
                .map(|(e, c)| {
                    let slot = match coefficients.iter().position(|x| x == c) {
                        Some(k) => k,
                        None => {
                            coefficients.push(c.clone());
                            coefficients.len() - 1
                        }
                    };
                    let factors = e
                        .exponents()
                        .iter()
                        .enumerate()
                        .filter(|(_, &p)| p > 0)
                        .map(|(v, &p)| (v, p))
                        .collect();
                    RhsTerm { slot, factors }
                })
                .collect()
        })
        .collect();
    (coefficients, table)
}

impl CumulantOdeSystem {
    pub fn shape(&self) -> &Arc<CumulantShape> {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shape.is_empty()
    }

    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    /// Symbolic right-hand sides, one per cumulant in graded order.
    pub fn equations(&self) -> &[Polynomial<ParamPoly>] {
        &self.equations
    }

    /// Distinct parameter-dependent coefficients referenced by the table.
    pub fn coefficients(&self) -> &[ParamPoly] {
        &self.coefficients
    }

    /// Per-cumulant sparse term lists.
    pub fn structural_table(&self) -> &[Vec<RhsTerm>] {
        &self.table
    }

    /// Binds numeric parameter values.
    pub fn bind<T: Scalar>(self: &Arc<Self>, theta: &[T]) -> BoundSystem<T> {
        let slots = self.coefficients.iter().map(|c| c.eval(theta)).collect();
        BoundSystem {
            system: Arc::clone(self),
            slots,
        }
    }

    /// One line per equation, e.g. `dk1/dt = b*mu - b*k1`.
    pub fn render(&self) -> Vec<String> {
        let kappa_names: Vec<String> = (0..self.len()).map(|k| self.shape.name(k)).collect();
        let kref: Vec<&str> = kappa_names.iter().map(String::as_str).collect();
        let pref: Vec<&str> = self.param_names.iter().map(String::as_str).collect();
        self.equations
            .iter()
            .enumerate()
            .map(|(k, eq)| {
                format!(
                    "d{}/dt = {}",
                    kappa_names[k],
                    eq.render_by(&kref, |c| render_param_coeff(c, &pref))
                )
            })
            .collect()
    }
}

/// A derived system with coefficients evaluated at one parameter vector.
#[derive(Debug, Clone)]
pub struct BoundSystem<T> {
    system: Arc<CumulantOdeSystem>,
    slots: Vec<T>,
}

impl<T: Scalar> BoundSystem<T> {
    pub fn shape(&self) -> &Arc<CumulantShape> {
        &self.system.shape
    }

    pub fn system(&self) -> &Arc<CumulantOdeSystem> {
        &self.system
    }

    pub fn len(&self) -> usize {
        self.system.len()
    }

    pub fn is_empty(&self) -> bool {
        self.system.is_empty()
    }

    /// Time derivative of the cumulant vector `kappa` into `out`.
    pub fn rhs(&self, kappa: &[T], out: &mut [T]) {
        for (dst, terms) in out.iter_mut().zip(&self.system.table) {
            let mut acc = T::zero();
            for term in terms {
                let mut v = self.slots[term.slot];
                for &(var, p) in &term.factors {
                    v = v * if p == 1 { kappa[var] } else { kappa[var].powi(p as i32) };
                }
                acc = acc + v;
            }
            *dst = acc;
        }
    }

    pub fn rhs_set(&self, kappa: &CumulantSet<T>) -> Vec<T> {
        let mut out = vec![T::zero(); self.len()];
        self.rhs(kappa.values(), &mut out);
        out
    }
}
