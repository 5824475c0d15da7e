//! Simulation and optimisation engine for mortgage assistance products.
//!
//! The crate has two halves:
//!
//! * an inner agent-based simulation of a mortgage ecosystem — borrower
//!   households with census-style financial profiles ([`population`]), loan
//!   servicing with a regulatory relief hierarchy ([`servicing`]), an economy
//!   agent driving income shocks and the house price index ([`economy`]),
//!   and a parameterised assistance product with a per-borrower cover ledger
//!   ([`products`]). Borrowers learn payment and relief decisions with a
//!   product-conditioned policy trained by clipped policy gradients
//!   ([`learner`]).
//! * an outer product-design layer ([`outer`], [`twolayer`]) that samples or
//!   adaptively optimises product parameter distributions, evaluated through
//!   delinquency, social-index, and provider-cost metrics with Pareto
//!   frontier extraction ([`metrics`]).
//!
//! Money is exact integer cents everywhere ([`money::Money`]); the numeric
//! kernel (networks, advantage estimation, integration, dominance) is generic
//! over the floating scalar ([`num::Scalar`]) with [`Real`] as the concrete
//! type used by the simulation.

pub mod borrower;
pub mod config;
pub mod economy;
pub mod eval;
pub mod learner;
pub mod metrics;
pub mod money;
pub mod num;
pub mod outer;
pub mod population;
pub mod products;
pub mod rng;
pub mod servicing;
pub mod sim;
pub mod twolayer;

/// Concrete scalar used by the simulation layer.
pub type Real = f64;

pub use money::Money;
