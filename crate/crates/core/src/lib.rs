//! Equilibria of continuous Bayesian games with correlated types:
//! best-response iteration on gridded strategy functions, a-posteriori
//! error certificates, and bounds on how far an equilibrium drifts when the
//! type distribution is perturbed.

pub mod best_response;
pub mod divergence;
pub mod equilibrium;
pub mod error;
pub mod expectation;
pub mod game;
pub mod quadrature;
pub mod report;
pub mod space;
pub mod stability;
pub mod strategy;

pub use error::{Error, Result};
pub use game::{DensityModel, GameSpec, Player, UtilityModel};
pub use quadrature::{QuadratureKind, QuadratureRule};
pub use space::BoxSpace;
pub use strategy::{Norm, StrategyGrid, StrategyProfile};
