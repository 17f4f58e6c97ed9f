//! Built-in polynomial diffusion models, exact transition densities where
//! they exist, path simulation and the time-series container.

mod exact;
mod series;
mod simulate;

pub use exact::{cir_moments, true_transition_density, true_transition_logdensity};
pub use series::{SeriesError, TimeSeries};
pub use simulate::{seeded_rng, simulate_cir_exact, simulate_path, DEFAULT_SUBSTEPS};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::cumulant::{derive_ode_system, CumulantError, CumulantOdeSystem};
use crate::polyalg::{ParamPoly, Polynomial};

type Sym = Polynomial<ParamPoly>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    /// `dX = b(mu - X) dt + sigma sqrt(X) dB`
    Cir,
    /// `dX = mu X dt + sigma X dB`
    Gbm,
    /// `dX = sqrt(c) dB`
    Bm,
    /// `dX = g(phistar - X) dt + sigma dB`
    Ou,
    /// Two-factor model with drift `(a x1 x2 - b x1^2, g(phistar - x2))` and
    /// diffusion `diag(c^2 x2^2, sigma^2)`.
    Bivariate,
    /// Heston stochastic volatility on `(S, V)`.
    Heston,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Cir,
        ModelKind::Gbm,
        ModelKind::Bm,
        ModelKind::Ou,
        ModelKind::Bivariate,
        ModelKind::Heston,
    ];

    pub fn id(self) -> &'static str {
        match self {
            ModelKind::Cir => "cir",
            ModelKind::Gbm => "gbm",
            ModelKind::Bm => "bm",
            ModelKind::Ou => "ou",
            ModelKind::Bivariate => "bivariate",
            ModelKind::Heston => "heston",
        }
    }

    /// Whether a closed-form transition density is available.
    pub fn has_exact_density(self) -> bool {
        matches!(self, ModelKind::Cir | ModelKind::Gbm | ModelKind::Bm | ModelKind::Ou)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        ModelKind::ALL
            .into_iter()
            .find(|k| k.id() == lower)
            .ok_or_else(|| ModelError::UnknownModel(s.to_string()))
    }
}

/// Support of one parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamConstraint {
    Real,
    Positive,
    /// Open interval.
    Interval(f64, f64),
}

impl ParamConstraint {
    pub fn admits(self, v: f64) -> bool {
        match self {
            ParamConstraint::Real => v.is_finite(),
            ParamConstraint::Positive => v > 0.0 && v.is_finite(),
            ParamConstraint::Interval(lo, hi) => v > lo && v < hi,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown model '{0}' (expected one of cir, gbm, bm, ou, bivariate, heston)")]
    UnknownModel(String),
    #[error("model {model} takes {expected} parameters, got {found}")]
    ParamCount {
        model: ModelKind,
        expected: usize,
        found: usize,
    },
    #[error("parameter {name} = {value} is outside its admissible range")]
    Constraint { name: String, value: f64 },
    #[error("state {0:?} is outside the admissible region")]
    InvalidState(Vec<f64>),
    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("no closed-form transition density for model {0}")]
    NoExactDensity(ModelKind),
    #[error(transparent)]
    Cumulant(#[from] CumulantError),
}

/// Symbolic polynomial diffusion: drift vector and diffusion matrix
/// (`sigma sigma^T`) with coefficients polynomial in the parameters.
pub struct DiffusionModel {
    kind: ModelKind,
    param_names: Vec<String>,
    constraints: Vec<ParamConstraint>,
    state_names: Vec<String>,
    positive_states: Vec<bool>,
    drift: Vec<Sym>,
    diffusion: Vec<Vec<Sym>>,
    systems: Mutex<BTreeMap<u32, Arc<CumulantOdeSystem>>>,
}

impl fmt::Debug for DiffusionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionModel")
            .field("kind", &self.kind)
            .field("param_names", &self.param_names)
            .finish_non_exhaustive()
    }
}

fn par(dim: usize, i: usize) -> Sym {
    Polynomial::constant(dim, ParamPoly::param(i))
}

fn state(dim: usize, i: usize) -> Sym {
    Polynomial::var(dim, i)
}

impl DiffusionModel {
    pub fn new(kind: ModelKind) -> Self {
        use ParamConstraint::*;
        let (params, constraints, states, positive, drift, diffusion): (
            &[&str],
            Vec<ParamConstraint>,
            &[&str],
            Vec<bool>,
            Vec<Sym>,
            Vec<Vec<Sym>>,
        ) = match kind {
            ModelKind::Cir => {
                let (b, mu, s, x) = (par(1, 0), par(1, 1), par(1, 2), state(1, 0));
                (
                    &["b", "mu", "sigma"],
                    vec![Positive; 3],
                    &["x"],
                    vec![true],
                    vec![&b * &(&mu - &x)],
                    vec![vec![&(&s * &s) * &x]],
                )
            }
            ModelKind::Gbm => {
                let (mu, s, x) = (par(1, 0), par(1, 1), state(1, 0));
                (
                    &["mu", "sigma"],
                    vec![Real, Positive],
                    &["x"],
                    vec![true],
                    vec![&mu * &x],
                    vec![vec![&(&s * &s) * &(&x * &x)]],
                )
            }
            ModelKind::Bm => (
                &["c"],
                vec![Positive],
                &["x"],
                vec![false],
                vec![Polynomial::zero(1)],
                vec![vec![par(1, 0)]],
            ),
            ModelKind::Ou => {
                let (g, phi, s, x) = (par(1, 0), par(1, 1), par(1, 2), state(1, 0));
                (
                    &["g", "phistar", "sigma"],
                    vec![Positive, Real, Positive],
                    &["x"],
                    vec![false],
                    vec![&g * &(&phi - &x)],
                    vec![vec![&s * &s]],
                )
            }
            ModelKind::Bivariate => {
                let p = |i| par(2, i);
                let (x1, x2) = (state(2, 0), state(2, 1));
                let (a, b, c, g, phi, s) = (p(0), p(1), p(2), p(3), p(4), p(5));
                (
                    &["a", "b", "c", "g", "phistar", "sigma"],
                    vec![Positive; 6],
                    &["x1", "x2"],
                    vec![false, false],
                    vec![
                        &(&a * &(&x1 * &x2)) - &(&b * &(&x1 * &x1)),
                        &g * &(&phi - &x2),
                    ],
                    vec![
                        vec![&(&c * &c) * &(&x2 * &x2), Polynomial::zero(2)],
                        vec![Polynomial::zero(2), &s * &s],
                    ],
                )
            }
            ModelKind::Heston => {
                let p = |i| par(2, i);
                let (sv, vv) = (state(2, 0), state(2, 1));
                let (r, delta, theta, rho, sigma) = (p(0), p(1), p(2), p(3), p(4));
                let cross = &(&(&rho * &sigma) * &vv) * &sv;
                (
                    &["r", "delta", "theta", "rho", "sigma"],
                    vec![Real, Positive, Positive, Interval(-1.0, 1.0), Positive],
                    &["S", "V"],
                    vec![true, true],
                    vec![&r * &sv, &delta * &(&theta - &vv)],
                    vec![
                        vec![&(&sv * &sv) * &vv, cross.clone()],
                        vec![cross, &(&sigma * &sigma) * &vv],
                    ],
                )
            }
        };
        DiffusionModel {
            kind,
            param_names: params.iter().map(|s| s.to_string()).collect(),
            constraints,
            state_names: states.iter().map(|s| s.to_string()).collect(),
            positive_states: positive,
            drift,
            diffusion,
            systems: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn by_name(name: &str) -> Result<Self, ModelError> {
        Ok(Self::new(name.parse()?))
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.drift.len()
    }

    pub fn n_params(&self) -> usize {
        self.param_names.len()
    }

    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    pub fn constraints(&self) -> &[ParamConstraint] {
        &self.constraints
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    /// Per-state flag: the process lives on the positive half-line.
    pub fn positive_states(&self) -> &[bool] {
        &self.positive_states
    }

    pub fn drift(&self) -> &[Sym] {
        &self.drift
    }

    pub fn diffusion(&self) -> &[Vec<Sym>] {
        &self.diffusion
    }

    /// Truncation order used when none is given: 4 for scalar models,
    /// 3 otherwise.
    pub fn default_order(&self) -> u32 {
        if self.dim() == 1 {
            4
        } else {
            3
        }
    }

    pub fn check_params(&self, theta: &[f64]) -> Result<(), ModelError> {
        if theta.len() != self.n_params() {
            return Err(ModelError::ParamCount {
                model: self.kind,
                expected: self.n_params(),
                found: theta.len(),
            });
        }
        for ((name, c), &v) in self.param_names.iter().zip(&self.constraints).zip(theta) {
            if !c.admits(v) {
                return Err(ModelError::Constraint {
                    name: name.clone(),
                    value: v,
                });
            }
        }
        Ok(())
    }

    pub fn admits(&self, theta: &[f64]) -> bool {
        self.check_params(theta).is_ok()
    }

    /// Numeric drift and diffusion polynomials at `theta`.
    pub fn build(&self, theta: &[f64]) -> Result<ModelInstance, ModelError> {
        self.check_params(theta)?;
        let bind = |p: &Sym| p.map_coefficients(|c| c.eval(theta));
        Ok(ModelInstance {
            theta: theta.to_vec(),
            positive_states: self.positive_states.clone(),
            drift: self.drift.iter().map(bind).collect(),
            diffusion: self
                .diffusion
                .iter()
                .map(|row| row.iter().map(bind).collect())
                .collect(),
        })
    }

    /// Cumulant system of the given order, derived on first use and cached.
    pub fn ode_system(&self, order: u32) -> Result<Arc<CumulantOdeSystem>, ModelError> {
        let mut cache = self.systems.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(s) = cache.get(&order) {
            return Ok(Arc::clone(s));
        }
        let system = Arc::new(derive_ode_system(
            &self.drift,
            &self.diffusion,
            &self.param_names,
            order,
        )?);
        cache.insert(order, Arc::clone(&system));
        Ok(system)
    }

    pub fn state_admissible(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().all(|v| v.is_finite())
            && x
                .iter()
                .zip(&self.positive_states)
                .all(|(&v, &pos)| !pos || v >= 0.0)
    }
}

/// A model with numeric parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInstance {
    pub theta: Vec<f64>,
    pub positive_states: Vec<bool>,
    pub drift: Vec<Polynomial<f64>>,
    pub diffusion: Vec<Vec<Polynomial<f64>>>,
}

impl ModelInstance {
    pub fn dim(&self) -> usize {
        self.drift.len()
    }

    pub fn drift_at(&self, x: &[f64]) -> Vec<f64> {
        self.drift.iter().map(|p| p.eval(x)).collect()
    }

    pub fn diffusion_at(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.diffusion
            .iter()
            .map(|row| row.iter().map(|p| p.eval(x)).collect())
            .collect()
    }
}

/// Parses a model id and builds it at `theta`.
pub fn build(name: &str, theta: &[f64]) -> Result<(Arc<DiffusionModel>, ModelInstance), ModelError> {
    let model = Arc::new(DiffusionModel::by_name(name)?);
    let inst = model.build(theta)?;
    Ok((model, inst))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cir_polynomials() {
        let (_, m) = build("cir", &[1.5, 58.0, 15f64.sqrt()]).unwrap();
        assert_eq!(m.drift[0].render_default(), "87 - 1.5*x1");
        assert_eq!(m.drift_at(&[2.0]), vec![84.0]);
        assert!((m.diffusion_at(&[2.0])[0][0] - 30.0).abs() < 1e-12);
    }

    #[test]
    fn heston_symbolic_matrix() {
        let model = DiffusionModel::new(ModelKind::Heston);
        let names = ["S", "V"];
        let pn: Vec<&str> = model.param_names().iter().map(String::as_str).collect();
        let render = |p: &Sym| p.render_by(&names, |c| crate::polyalg::render_param_coeff(c, &pn));
        assert_eq!(render(&model.diffusion()[0][0]), "S^2*V");
        assert_eq!(render(&model.diffusion()[0][1]), "rho*sigma*S*V");
        assert_eq!(render(&model.diffusion()[1][1]), "sigma^2*V");
        assert_eq!(model.diffusion()[0][1], model.diffusion()[1][0]);
    }

    #[test]
    fn bivariate_with_zero_a_b() {
        let model = DiffusionModel::new(ModelKind::Bivariate);
        let m = model.build(&[1e-300, 1e-300, 1.8, 0.5, 5.0, 1.0]).unwrap();
        assert!(m.drift_at(&[3.0, 2.0])[0].abs() < 1e-290);
        assert!((m.diffusion_at(&[3.0, 2.0])[0][0] - 1.8 * 1.8 * 4.0).abs() < 1e-12);
    }

    #[test]
    fn parse_and_errors() {
        assert_eq!("CIR".parse::<ModelKind>().unwrap(), ModelKind::Cir);
        assert!(matches!(build("vasicek", &[]), Err(ModelError::UnknownModel(_))));
        assert!(matches!(
            build("cir", &[1.0, 2.0]),
            Err(ModelError::ParamCount { expected: 3, found: 2, .. })
        ));
        assert!(matches!(
            build("cir", &[-1.0, 2.0, 1.0]),
            Err(ModelError::Constraint { .. })
        ));
        assert!(matches!(
            build("heston", &[0.1, 1.0, 0.03, 1.0, 0.2]),
            Err(ModelError::Constraint { .. })
        ));
        assert!(build("gbm", &[-0.1, 0.2]).is_ok());
    }

    #[test]
    fn system_cache_reuses_derivation() {
        let model = DiffusionModel::new(ModelKind::Cir);
        let a = model.ode_system(4).unwrap();
        let b = model.ode_system(4).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(a.len(), 4);
        assert_eq!(model.ode_system(2).unwrap().len(), 2);
        assert!(model.ode_system(1).is_err());
    }

    #[test]
    fn default_orders() {
        assert_eq!(DiffusionModel::new(ModelKind::Cir).default_order(), 4);
        assert_eq!(DiffusionModel::new(ModelKind::Heston).default_order(), 3);
    }
}
