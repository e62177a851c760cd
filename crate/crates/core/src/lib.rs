//! Desk-scale hybrid TDT-CTC speech recognition laboratory.

pub mod corpus;
pub mod decode;
pub mod eval;
pub mod lattice;
pub mod model;
pub mod verify;

/// The array crate used for features and parameters.
pub use ndarray;
