//! Parameter estimation for polynomial diffusion processes.
//!
//! The pipeline: a model's polynomial drift and diffusion are turned into a
//! closed system of cumulant ODEs by moment closure ([`cumulant`]), the system
//! is integrated between observations from a point mass ([`ode`]), the
//! predicted cumulants feed a saddlepoint density ([`saddlepoint`]), the
//! transition log-densities sum into a likelihood ([`likelihood`]), and a
//! random-walk Metropolis sampler explores the posterior ([`mcmc`]).
//!
//! The numeric core is generic over the scalar type; the aliases at the crate
//! root fix it to `f64`, which is what the pipeline modules use.

pub mod cumulant;
pub mod evalstats;
pub mod likelihood;
pub mod linalg;
pub mod mcmc;
pub mod models;
pub mod ode;
pub mod polyalg;
pub mod quadrature;
pub mod saddlepoint;
pub mod scalar;
pub mod special;

pub use polyalg::{MultiIndex, ParamPoly, Rational};
pub use scalar::{Ring, Scalar};

/// Polynomial with `f64` coefficients.
pub type Polynomial = polyalg::Polynomial<f64>;
/// Polynomial with exact rational coefficients.
pub type RationalPolynomial = polyalg::Polynomial<Rational>;
/// Polynomial whose coefficients are symbolic in the model parameters.
pub type SymbolicPolynomial = polyalg::Polynomial<ParamPoly>;
pub type CumulantSet = cumulant::CumulantSet<f64>;
pub type TruncatedCgf = saddlepoint::TruncatedCgf<f64>;
pub type SaddleSolution = saddlepoint::SaddleSolution<f64>;
pub type IntegratorConfig = ode::IntegratorConfig<f64>;
pub type BoundSystem = cumulant::BoundSystem<f64>;
