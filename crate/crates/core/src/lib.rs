//! Inductance-based self-sensing for pneumatic twisted-and-coiled actuators.

pub mod app;
pub mod control;
pub mod error;
pub mod ident;
pub mod model;
pub mod observer;
pub mod plant;
pub mod signal;

pub use error::{Error, Result};
