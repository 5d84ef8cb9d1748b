//! Censored single-index regression.
//!
//! Estimates the direction θ₀ of a single-index model E[Y | X] = f(θ₀'X)
//! when the response is randomly right-censored, observing only
//! T = min(Y, C) and δ = 1{Y <= C}. Two M-estimation criteria are provided,
//! both built on the product-limit estimator of the censoring distribution:
//!
//! - weighted least squares, which reweights uncensored observations by
//!   their Kaplan-Meier masses, and
//! - synthetic data, which replaces the response by δT / (1 − G-hat(T−))
//!   and uses ordinary least squares on the transformed values.
//!
//! The unknown link is estimated by censored Nadaraya-Watson smoothing along
//! candidate directions, with density-based trimming keeping the criterion
//! away from thin regions. A plug-in sandwich estimator supplies Wald
//! standard errors for the free coordinates.
//!
//! ```
//! use censim::estimate::{fit, FitConfig, Method};
//! use censim::survival::Observation;
//!
//! // Noiseless uncensored toy data with θ₀ = (1, 1).
//! let sample: Vec<Observation> = (0..50)
//!     .map(|i| {
//!         let x1 = (i as f64 * 0.37) % 1.0;
//!         let x2 = (i as f64 * 0.61) % 1.0;
//!         Observation::new(x1 + x2, true, vec![x1, x2])
//!     })
//!     .collect();
//! let result = fit(&sample, Method::Wls, &FitConfig::default()).unwrap();
//! assert!((result.theta_hat.free()[0] - 1.0).abs() < 0.05);
//! ```
//!
//! The `censim` binary exposes the same functionality as `fit`, `simulate`
//! and `km` subcommands over CSV datasets.

pub mod dataset;
pub mod error;
pub mod estimate;
pub mod optimize;
pub mod simulate;
pub mod smooth;
pub mod survival;
pub mod transform;

pub use error::{Error, Result};
pub use estimate::{fit, FitConfig, FitResult, IndexParam, Method, SearchRegion};
pub use simulate::{run_monte_carlo, ConfigId, MseReport, SimulationConfig};
pub use survival::{km_fit, km_weights, KmTarget, Observation, StepCdf};
pub use transform::{synthetic_transform, SyntheticSample};
