//! Pricing of RFR caplets, floorlets and futures in affine short-rate models.
//!
//! The short rate is `r_t = ell(t) + <Lambda, X_t>` with `X` an affine process
//! on `R_+^m x R^n`. Prices are computed from the generalized Riccati system
//! of the extended process `(X, Y)`, `Y_t = int_0^t <Lambda, X_s> ds`, either by
//! Fourier inversion against a damped payoff kernel or by inverting forward
//! measure characteristic functions. A Monte Carlo engine serves as an
//! independent check.

pub mod affine_model;
pub mod error;
pub mod fourier_pricing;
pub mod futures;
pub mod fwd_measure_pricing;
pub mod mc_oracle;
pub mod quadrature;
pub mod riccati;
pub mod transform;

pub use affine_model::{build_catalog_model, catalog, AffineModelSpec, ModelConfig, ModelFamily};
pub use error::{PricingError, Result};
pub use transform::{fit_ell, CurveSpec, MarketState, PricingContext};
