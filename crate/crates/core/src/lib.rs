pub mod catalog;
pub mod cli;
pub mod config;
pub mod error;
pub mod grid;
pub mod nonlinearity;
pub mod nonlocal;
pub mod quadrature;
pub mod solver;
pub mod special;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
