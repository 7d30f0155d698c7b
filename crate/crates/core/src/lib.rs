//! Short-horizon PV power forecasting with Chebyshev features,
//! constrained least squares and wrapper feature selection.

pub mod cls_solver;
pub mod data_ingest;
pub mod detrend;
pub mod error;
pub mod features;
pub mod forecast;
pub mod pipeline;
pub mod selection;
pub mod synthetic;

pub use error::{Error, ErrorKind, Result};
