//! Discrete Weibull regression for count data.
//!
//! Both parameters of the discrete Weibull distribution get their own
//! additive predictor, so covariates can shift the location of the counts
//! and independently change their dispersion, from strong
//! over-dispersion to strong under-dispersion.
//!
//! ```
//! use dwgam::distribution::{pmf, quantile, DWParams};
//!
//! let p = DWParams::new(0.8, 1.5).unwrap();
//! assert!((pmf(0, &p) - 0.2).abs() < 1e-15);
//! assert_eq!(quantile(0.5, &p).unwrap(), 2);
//! ```

pub mod basis;
pub mod data;
pub mod distribution;
pub mod error;
pub mod optim;
pub mod prediction;
pub mod regression;
pub mod simulation;
pub mod stats;

pub use error::{Error, Result};

/// Version of this library, embedded in every written artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/distribution.md")]
    mod distribution {}
    #[doc = include_str!("../../../book/src/regression.md")]
    mod regression {}
    #[doc = include_str!("../../../book/src/prediction.md")]
    mod prediction {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
