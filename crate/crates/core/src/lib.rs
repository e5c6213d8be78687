pub mod config;
pub mod coupling;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod io;
pub mod lattice;
pub mod observables;
pub mod seed;
pub mod spectral;
pub mod validation;

pub use error::{Error, Result};
