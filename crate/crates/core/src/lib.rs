//! Quantile regression for responses on the open unit interval, built on two
//! reparameterizations of the power generalized Johnson S_B distribution.
//!
//! * [`kernel`]: kernel families `G` and link transforms `Q`.
//! * [`distribution`]: densities, cdfs, quantiles and samplers.
//! * [`regression`]: likelihoods, maximum likelihood fitting and inference.
//! * [`diagnostics`]: quantile residuals, normality tests and influence.
//! * [`simulation`]: Monte Carlo studies of estimator behaviour.

pub mod diagnostics;
pub mod distribution;
pub mod error;
pub mod kernel;
pub mod numdiff;
pub mod optim;
pub mod regression;
pub mod simulation;
pub mod special;

pub use distribution::{Pgjsb, Rpgjsb1Params, Rpgjsb2Params};
pub use error::{Error, Result};
pub use kernel::{KernelFamily, LinkTransform};
pub use regression::{fit, FitOptions, FitResult, ModelSpec, ParamVector, Variant};
