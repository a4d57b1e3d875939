//! Rate-power tradeoff analysis for THz SWIPT receivers built on resonant
//! tunnelling diode (RTD) energy harvesters.
//!
//! The receiver abstraction is a per-symbol channel `y = sqrt(psi(|h s|^2)) + n`
//! where `psi` is a piecewise non-linear harvested-power transfer function with
//! alternating monotone logistic segments. This crate provides:
//!
//! - the piecewise 5-parameter logistic EH model ([`eh_model`]) and a
//!   least-squares fitter for tabulated transfer data ([`eh_fitting`]),
//! - link budget and Rician small-scale fading draws ([`channel`]),
//! - grid densities, the optimal output distributions and the pushforward
//!   machinery between transmit and output space ([`distributions`]),
//! - differential entropy, exact mutual information and the entropy-power
//!   lower bound ([`information`]),
//! - the constrained rate maximization, rate-power region sweeps, a
//!   truncated-Gaussian baseline and Monte Carlo fading averages
//!   ([`rate_power`]),
//! - the special functions and numeric kernels behind all of the above
//!   ([`special_math`]).
//!
//! All entropies and rates are in nats; powers are in watts unless a model
//! declares a different input-power unit.

pub mod channel;
pub mod distributions;
pub mod eh_fitting;
pub mod eh_model;
pub mod information;
pub mod rate_power;
pub mod special_math;
pub mod units;

/// Default node count for grid densities.
pub const DEFAULT_GRID_M: usize = 4001;
