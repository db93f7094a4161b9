//! Experiment driver: instance families, scaling sweeps, slope fits and
//! reproducible text output.

pub mod config;
pub mod experiment;
pub mod families;
pub mod fit;
pub mod validate;
