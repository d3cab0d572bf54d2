//! Entanglement and quantum discord between site pairs of ordered and
//! quenched-disordered XY and XYZ spin-1/2 chains, and the correlation
//! lengths extracted from their decay with distance.

pub mod ed;
pub mod error;
pub mod freefermion;
pub(crate) mod linalg;
pub mod fitting;
pub mod model;
pub mod mps;
pub mod qcorr;
pub mod quench;

pub use error::{Error, Result};
