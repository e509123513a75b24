//! Low-rank phase retrieval by anchored regression.

pub mod anchor;
pub mod bench;
pub mod cli;
pub mod deconv;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod numlin;
pub mod oracle;
pub mod solver;

pub use error::{Error, Result};
