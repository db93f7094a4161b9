//! Phase estimation on the walk operator.
//!
//! A `p`-qubit register starts in `|0⟩`, is put in uniform superposition,
//! controls `W^{2^{i-1}}` from ancilla `i`, and is read out after an inverse
//! Fourier transform. Joint statevectors use index `m·D + s`, with `m` the
//! register value and `s` the `D = d²` walk-space index.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::qwalk::{real_matvec_into, WalkBasisState, WalkOperator};

/// Widest register accepted.
pub const MAX_P: u32 = 24;
/// Largest joint statevector simulated densely.
pub const DENSE_AMPLITUDE_LIMIT: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeaConfig {
    p: u32,
    c_pea: f64,
}

impl PeaConfig {
    /// A register of exactly `p` qubits.
    pub fn with_p(p: u32) -> Result<Self> {
        if p == 0 {
            return Err(Error::param("p", "register needs at least one qubit"));
        }
        if p > MAX_P {
            return Err(Error::RegisterTooWide(p));
        }
        Ok(Self { p, c_pea: f64::NAN })
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    /// `NaN` when the width was fixed directly.
    pub fn c_pea(&self) -> f64 {
        self.c_pea
    }

    /// `2^p`.
    pub fn outcomes(&self) -> usize {
        1 << self.p
    }

    /// Controlled-walk applications per estimation, `2^p − 1`.
    pub fn walk_calls(&self) -> u64 {
        (1u64 << self.p) - 1
    }
}

/// Smallest `p ≥ 1` with `2^p ≥ c_pea/(ν√δ)`.
pub fn choose_p(nu: f64, delta: f64, c_pea: f64) -> Result<PeaConfig> {
    if !(nu > 0.0) {
        return Err(Error::param("nu", format!("{nu} is not positive")));
    }
    if !(delta > 0.0) {
        return Err(Error::ZeroGap);
    }
    if !(c_pea > 0.0) {
        return Err(Error::param("c_pea", format!("{c_pea} is not positive")));
    }
    let target = c_pea / (nu * delta.sqrt());
    let mut p = 1u32;
    while ((1u64 << p) as f64) < target {
        p += 1;
        if p > MAX_P {
            return Err(Error::RegisterTooWide(p));
        }
    }
    Ok(PeaConfig { p, c_pea })
}

/// `(1/2^p) Σ_{m'} e^{-2πi m m'/2^p} e^{i m' θ}` in closed form.
pub fn pea_amplitude(phase: f64, m: usize, p: u32) -> Complex64 {
    let n = (1usize << p) as f64;
    debug_assert!(m < 1 << p);
    if phase == 0.0 {
        return Complex64::new(f64::from(u8::from(m == 0)), 0.0);
    }
    let x = (phase - 2.0 * PI * m as f64 / n + PI).rem_euclid(2.0 * PI) - PI;
    let den = (0.5 * x).sin();
    if den == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    let mag = (0.5 * n * x).sin() / (n * den);
    Complex64::from_polar(mag, 0.5 * (n - 1.0) * x)
}

/// The same amplitude by direct summation of all `2^p` terms.
pub fn pea_amplitude_sum(phase: f64, m: usize, p: u32) -> Complex64 {
    let n = 1usize << p;
    let sum: Complex64 = (0..n)
        .map(|k| {
            let wrap = (m * k) % n;
            Complex64::from_polar(1.0, k as f64 * phase - 2.0 * PI * wrap as f64 / n as f64)
        })
        .sum();
    sum / n as f64
}

/// `π/(2^p θ)`, the bound on `|o(θ, 0)|` for `θ ∈ (0, π]`.
pub fn garbage_bound(phase: f64, p: u32) -> f64 {
    PI / ((1u64 << p) as f64 * phase)
}

fn unitary_dft(v: &[Complex64], negative_exponent: bool) -> Vec<Complex64> {
    let n = v.len();
    assert!(n.is_power_of_two(), "register length must be a power of two");
    let mut planner = FftPlanner::new();
    let fft = if negative_exponent {
        planner.plan_fft_forward(n)
    } else {
        planner.plan_fft_inverse(n)
    };
    let mut buf = v.to_vec();
    fft.process(&mut buf);
    let scale = 1.0 / (n as f64).sqrt();
    buf.iter_mut().for_each(|x| *x *= scale);
    buf
}

/// `|m⟩ ↦ 2^{-p/2} Σ_{m'} e^{-2πi m m'/2^p}|m'⟩`.
pub fn inverse_qft(v: &[Complex64]) -> Vec<Complex64> {
    unitary_dft(v, true)
}

/// The forward transform, inverse of [`inverse_qft`].
pub fn qft(v: &[Complex64]) -> Vec<Complex64> {
    unitary_dft(v, false)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeaOutcome {
    pub m: usize,
    pub probability: f64,
    /// Normalized post-measurement state; zero when `probability` is 0.
    pub post_state: WalkBasisState,
}

/// Outcome distribution of one estimation on a walk-basis state.
///
/// `phis` are the kernel phases `φ_j` for `j ≥ 1`. `|ψ±ⱼ⟩` sit at
/// `2φ_j` and `2π − 2φ_j`; `|ψ₀⟩` and the leaked remainder sit at phase 0
/// and so are read out as `m = 0` with certainty.
pub fn pea_analytic(state: &WalkBasisState, phis: &[f64], config: &PeaConfig) -> Vec<PeaOutcome> {
    assert_eq!(phis.len(), state.cplus.len(), "one phase per pair");
    let p = config.p();
    (0..config.outcomes())
        .map(|m| {
            let zero = m == 0;
            let mut post = WalkBasisState {
                c0: if zero { state.c0 } else { Complex64::new(0.0, 0.0) },
                cplus: Vec::with_capacity(phis.len()),
                cminus: Vec::with_capacity(phis.len()),
                leaked: if zero { state.leaked } else { 0.0 },
            };
            for ((&phi, cp), cm) in phis.iter().zip(&state.cplus).zip(&state.cminus) {
                let t = 2.0 * phi;
                post.cplus.push(cp * pea_amplitude(t, m, p));
                post.cminus.push(cm * pea_amplitude(2.0 * PI - t, m, p));
            }
            let probability = post.norm_sqr();
            if probability > 0.0 {
                let s = probability.sqrt();
                post.c0 /= s;
                post.cplus.iter_mut().chain(post.cminus.iter_mut()).for_each(|c| *c /= s);
                post.leaked /= probability;
            }
            PeaOutcome {
                m,
                probability,
                post_state: post,
            }
        })
        .collect()
}

/// Walsh-Hadamard transform over the register index.
fn hadamard_layer(joint: &mut [Complex64], dim: usize, p: u32) {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for bit in 0..p {
        let stride = 1usize << bit;
        for m in 0..(1usize << p) {
            if m & stride != 0 {
                continue;
            }
            let (lo, hi) = (m * dim, (m | stride) * dim);
            for s in 0..dim {
                let a = joint[lo + s];
                let b = joint[hi + s];
                joint[lo + s] = (a + b) * r;
                joint[hi + s] = (a - b) * r;
            }
        }
    }
}

/// Runs the estimation circuit on a joint statevector. With `inverse_ft`
/// false the final transform is skipped, as when the register is discarded
/// unread.
pub fn pea_dense(
    joint: &[Complex64],
    walk: &WalkOperator,
    config: &PeaConfig,
    inverse_ft: bool,
) -> Result<Vec<Complex64>> {
    let dim = walk.d() * walk.d();
    let n = config.outcomes();
    let total = n.saturating_mul(dim);
    if total > DENSE_AMPLITUDE_LIMIT {
        return Err(Error::DimensionTooLarge {
            got: total,
            limit: DENSE_AMPLITUDE_LIMIT,
        });
    }
    assert_eq!(joint.len(), total, "joint state has the wrong length");

    let mut state = joint.to_vec();
    hadamard_layer(&mut state, dim, config.p());

    // Controlled `W^(2^bit)` on every branch whose register has that bit set.
    let mut scratch = vec![Complex64::new(0.0, 0.0); dim];
    let mut power = walk.dense().clone();
    for bit in 0..config.p() {
        let mask = 1usize << bit;
        for m in (0..n).filter(|m| m & mask != 0) {
            let slice = &mut state[m * dim..(m + 1) * dim];
            real_matvec_into(&power, slice, &mut scratch);
            slice.copy_from_slice(&scratch);
        }
        if bit + 1 < config.p() {
            power = &power * &power;
        }
    }

    if inverse_ft {
        let mut column = vec![Complex64::new(0.0, 0.0); n];
        for s in 0..dim {
            for (m, c) in column.iter_mut().enumerate() {
                *c = state[m * dim + s];
            }
            for (m, c) in inverse_qft(&column).into_iter().enumerate() {
                state[m * dim + s] = c;
            }
        }
    }
    Ok(state)
}

/// `|0⟩ ⊗ ψ`.
pub fn with_clean_register(psi: &[Complex64], config: &PeaConfig) -> Vec<Complex64> {
    let mut joint = vec![Complex64::new(0.0, 0.0); psi.len() * config.outcomes()];
    joint[..psi.len()].copy_from_slice(psi);
    joint
}

/// Marginal distribution of the register.
pub fn register_distribution(joint: &[Complex64], dim: usize) -> Vec<f64> {
    joint
        .chunks(dim)
        .map(|c| c.iter().map(|x| x.norm_sqr()).sum())
        .collect()
}

/// Unnormalized walk-space state left by outcome `m`.
pub fn project_outcome(joint: &[Complex64], m: usize, dim: usize) -> Vec<Complex64> {
    joint[m * dim..(m + 1) * dim].to_vec()
}

/// `m,probability` rows.
pub fn histogram_csv(probabilities: &[f64]) -> String {
    let mut out = String::from("m,probability\n");
    for (m, p) in probabilities.iter().enumerate() {
        writeln!(out, "{m},{}", crate::fmt_f64(*p)).unwrap();
    }
    out
}
