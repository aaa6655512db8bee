//! Numerical toolkit for the Langford cusp-Hopf system.

pub mod atlas;
pub mod config;
pub mod error;
pub mod experiments;
pub mod flow;
pub mod manifest;
pub mod model;
pub mod parm;
pub mod poincare;
pub mod series2;

pub use error::{Error, Result};
