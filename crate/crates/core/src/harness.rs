//! Experiment layer: regression data, matrix factorization, comparison
//! runs and their file formats.

pub mod compare;
pub mod io;
pub mod mf;
pub mod regression;
