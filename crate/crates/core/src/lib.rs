//! Classical simulated annealing and its quantum-walk quantization.
//!
//! Everything is simulated exactly on explicit state spaces: Metropolis
//! kernels and their spectra, annealed distributions, the bipartite walk
//! operator, phase estimation and the Zeno-style quantum annealer built on it.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anneal;
pub mod energy;
pub mod error;
pub mod harness;
pub mod markov;
pub mod pea;
pub mod qsa;
pub mod qwalk;

pub use error::{Error, Result};

/// Fixed-format decimal with 17 significant digits, used by every text and
/// CSV output so reruns are byte-identical.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
