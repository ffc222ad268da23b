//! Non-Bloch band theory for one-dimensional non-Hermitian lattices and
//! simulation of self-healing skin edge modes.

pub mod cli;
pub mod config;
pub mod error;
pub mod evolution;
pub mod laurent;
pub mod model;
pub mod output;
pub mod skin;
pub mod spectra;

pub use error::{Error, Result};
pub use laurent::{LaurentSymbol, RootSet};
pub use model::{build_truncated, BlochModel, Boundary, Model, SingleBandModel, TruncatedHamiltonian, TwoChainModel};
