//! Policy-evaluation engine for resource decentralization.
//!
//! Two halves share this crate:
//!
//! - [`model`]: a hierarchy model in which a central authority hands every
//!   school the same resource increment, while an informed local authority
//!   may reallocate the same budget toward schools whose needs match the
//!   resource. The module computes both regimes and their expected gains.
//! - [`dgp`], [`estimator`], [`did`] and [`montecarlo`]: a synthetic
//!   pupil-level panel generator, least-squares machinery with school fixed
//!   effects and cluster-robust inference, difference-in-differences
//!   designs, and a replication harness measuring bias, RMSE and coverage.
//!
//! [`io`] and [`cli`] provide the CSV schema, configuration file, report
//! tables and the `decentra` command-line front end.

pub mod cli;
pub mod dgp;
pub mod did;
pub mod error;
pub mod estimator;
pub mod io;
pub mod model;
pub mod montecarlo;
pub mod panel;
pub mod rng;

pub use error::{Error, Result};
