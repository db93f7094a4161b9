//! Quantum simulated annealing: a chain of phase estimations that drags the
//! quantum Gibbs state from `β = 0` to `β_f`.
//!
//! Each step builds the walk at `β_k = kΔβ`, runs phase estimation on the
//! current state and keeps the post-measurement state. Two simulators are
//! available. The eigenbasis backend carries the exact `d²` state and filters
//! it through the closed-form outcome amplitudes; the dense backend runs the
//! estimation circuit on the full statevector.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::anneal::{check_delta, check_epsilon, sa_schedule, target_beta};
use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::markov::TransitionKernel;
use crate::pea::{
    choose_p, pea_amplitude, pea_dense, project_outcome, register_distribution,
    with_clean_register, PeaConfig,
};
use crate::qwalk::{Completion, PairCoefficients, WalkBasis, WalkOperator, DENSE_DIM_LIMIT};

pub const DEFAULT_C_Q: f64 = 1.0;
pub const DEFAULT_C_PEA: f64 = 1.0;
/// Largest `d` for which density-matrix propagation is offered.
pub const CHANNEL_DIM_LIMIT: usize = 8;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QsaSchedule {
    delta_beta: f64,
    q_steps: usize,
    beta_f: f64,
    nu: f64,
    pea: PeaConfig,
    epsilon: f64,
    c_q: f64,
}

/// `β_f = ln(2d/ε²)/γ`, `Q = ⌈c_q(β_f E_M)²/ε⌉`, `Δβ = β_f/Q`, `ν = ΔβE_M`,
/// and the register from [`choose_p`].
pub fn qsa_schedule(
    model: &EnergyModel,
    delta: f64,
    epsilon: f64,
    c_q: f64,
    c_pea: f64,
) -> Result<QsaSchedule> {
    check_delta(delta)?;
    check_epsilon(epsilon)?;
    if !(c_q > 0.0) {
        return Err(Error::param("c_q", format!("{c_q} is not positive")));
    }
    let beta_f = target_beta(model, epsilon);
    let scale = beta_f * model.e_max();
    let q_steps = (c_q * scale * scale / epsilon).ceil() as usize;
    let delta_beta = beta_f / q_steps as f64;
    let nu = delta_beta * model.e_max();
    let pea = choose_p(nu, delta, c_pea)?;
    Ok(QsaSchedule {
        delta_beta,
        q_steps,
        beta_f,
        nu,
        pea,
        epsilon,
        c_q,
    })
}

impl QsaSchedule {
    /// `Q` steps of size `β_f/Q` with a fixed register width.
    pub fn custom(model: &EnergyModel, beta_f: f64, q_steps: usize, p: u32) -> Result<Self> {
        if !(beta_f > 0.0) {
            return Err(Error::param("beta_f", format!("{beta_f} is not positive")));
        }
        if q_steps == 0 {
            return Err(Error::param("q_steps", "need at least one step"));
        }
        let delta_beta = beta_f / q_steps as f64;
        Ok(Self {
            delta_beta,
            q_steps,
            beta_f,
            nu: delta_beta * model.e_max(),
            pea: PeaConfig::with_p(p)?,
            epsilon: f64::NAN,
            c_q: f64::NAN,
        })
    }

    pub fn delta_beta(&self) -> f64 {
        self.delta_beta
    }

    pub fn q_steps(&self) -> usize {
        self.q_steps
    }

    pub fn beta_f(&self) -> f64 {
        self.beta_f
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn pea(&self) -> &PeaConfig {
        &self.pea
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn c_q(&self) -> f64 {
        self.c_q
    }

    /// `β_k = kΔβ`; `β_Q = β_f`.
    pub fn beta(&self, k: usize) -> f64 {
        if k == self.q_steps {
            self.beta_f
        } else {
            k as f64 * self.delta_beta
        }
    }

    /// Scheduled walk calls, `Q(2^p − 1)`.
    pub fn walk_budget(&self) -> u64 {
        self.q_steps as u64 * self.pea.walk_calls()
    }
}

/// `d·e^{-β_f γ} + τ′Qν²`, clamped to 1.
pub fn qsa_error_bound(model: &EnergyModel, schedule: &QsaSchedule, tau_prime: f64) -> f64 {
    assert!(tau_prime > 0.0, "tau_prime must be positive");
    let thermal = model.dim() as f64 * (-schedule.beta_f() * model.gamma()).exp();
    let zeno = tau_prime * schedule.q_steps() as f64 * schedule.nu() * schedule.nu();
    (thermal + zeno).min(1.0)
}

/// Cost predictions. The `*_formula` fields are the bare expressions
/// `β_f E_M/(τδ)` and `c_pea c_q² (β_f E_M)³/(ε²√δ)`; the `*_scheduled`
/// fields are the integer counts the schedules actually use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictedCosts {
    pub n_sa_formula: f64,
    pub n_qsa_formula: f64,
    pub n_sa_scheduled: u64,
    pub n_qsa_scheduled: u64,
}

pub fn predicted_costs(
    model: &EnergyModel,
    delta: f64,
    epsilon: f64,
    tau: f64,
    c_q: f64,
    c_pea: f64,
) -> Result<PredictedCosts> {
    let sa = sa_schedule(model, delta, epsilon, tau)?;
    let qsa = qsa_schedule(model, delta, epsilon, c_q, c_pea)?;
    let scale = target_beta(model, epsilon) * model.e_max();
    Ok(PredictedCosts {
        n_sa_formula: scale / (tau * delta),
        n_qsa_formula: c_pea * c_q * c_q * scale.powi(3) / (epsilon * epsilon * delta.sqrt()),
        n_sa_scheduled: sa.steps() as u64,
        n_qsa_scheduled: qsa.walk_budget(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    /// Eigenbasis propagation with the canonical completion.
    Analytic,
    /// Dense circuit simulation with the given completion.
    Dense(Completion),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Read the register after every estimation.
    MeasureEach,
    /// Never read the registers; the inverse transform is skipped.
    Deferred,
}

/// Work done by one run. Never shared between runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CostCounter {
    pub markov_steps: u64,
    pub walk_calls: u64,
}

impl CostCounter {
    pub fn add_markov_steps(&mut self, n: u64) {
        self.markov_steps += n;
    }

    pub fn add_walk_calls(&mut self, n: u64) {
        self.walk_calls += n;
    }

    /// Each walk call costs as much as four Markov steps.
    pub fn markov_equivalent(&self) -> u64 {
        self.markov_steps + 4 * self.walk_calls
    }

    pub fn merge(&mut self, other: &CostCounter) {
        self.markov_steps += other.markov_steps;
        self.walk_calls += other.walk_calls;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QsaResult {
    pub final_state_index: usize,
    pub success: bool,
    pub walk_calls: u64,
    pub pea_failures: u64,
    /// Probability that the final readout lands in the ground set, given
    /// the sampled estimation outcomes.
    pub exact_success_prob: Option<f64>,
}

/// The walk at one schedule point, in the form a backend needs.
#[derive(Debug, Clone)]
pub enum WalkStep {
    Analytic(WalkBasis),
    Dense(WalkOperator),
}

impl WalkStep {
    pub fn build(kernel: &TransitionKernel, model: &EnergyModel, backend: Backend) -> Result<Self> {
        Ok(match backend {
            Backend::Analytic => WalkStep::Analytic(WalkBasis::new(kernel, model)?),
            Backend::Dense(c) => WalkStep::Dense(WalkOperator::build(kernel, c)?),
        })
    }
}

/// Walks for every schedule point, built once and reused across runs.
#[derive(Debug, Clone)]
pub struct QsaPlan {
    steps: Vec<Arc<WalkStep>>,
}

impl QsaPlan {
    pub fn new<F>(
        model: &EnergyModel,
        schedule: &QsaSchedule,
        mut kernel_at: F,
        backend: Backend,
    ) -> Result<Self>
    where
        F: FnMut(f64) -> Result<TransitionKernel>,
    {
        let steps = (1..=schedule.q_steps())
            .map(|k| Ok(Arc::new(WalkStep::build(&kernel_at(schedule.beta(k))?, model, backend)?)))
            .collect::<Result<_>>()?;
        Ok(Self { steps })
    }

    pub fn run(
        &self,
        model: &EnergyModel,
        schedule: &QsaSchedule,
        mode: Mode,
        rng: &mut impl Rng,
    ) -> Result<QsaResult> {
        run_steps(model, schedule, mode, rng, |k| Ok(Arc::clone(&self.steps[k - 1])))
    }
}

/// One sampled run, building each walk as it is reached.
pub fn run_qsa<F>(
    model: &EnergyModel,
    schedule: &QsaSchedule,
    mut kernel_at: F,
    backend: Backend,
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<QsaResult>
where
    F: FnMut(f64) -> Result<TransitionKernel>,
{
    run_steps(model, schedule, mode, rng, |k| {
        Ok(Arc::new(WalkStep::build(&kernel_at(schedule.beta(k))?, model, backend)?))
    })
}

/// `|φ₀(0) 𝔬⟩`: amplitude `1/√d` on every `|σ 𝔬⟩`.
pub fn initial_state(d: usize) -> Vec<Complex64> {
    let mut psi = vec![ZERO; d * d];
    let a = Complex64::new((d as f64).sqrt().recip(), 0.0);
    for s in 0..d {
        psi[s * d] = a;
    }
    psi
}

/// Readout distribution of the first factor (unnormalized if `psi` is).
pub fn first_factor_distribution(psi: &[Complex64], d: usize) -> Vec<f64> {
    psi.chunks(d).map(|c| c.iter().map(|x| x.norm_sqr()).sum()).collect()
}

fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

fn scale(v: &mut [Complex64], by: f64) {
    v.iter_mut().for_each(|x| *x *= by);
}

/// Inverse-CDF pick in ascending order; falls back to the last positive
/// weight when rounding leaves `u` past the total.
fn pick(weights: impl Iterator<Item = f64>, u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Outcome probability of register value `m` on the eigenbasis backend.
fn analytic_outcome_prob(
    basis: &WalkBasis,
    pc: &PairCoefficients,
    phase0_mass: f64,
    m: usize,
    p: u32,
) -> f64 {
    let mut prob = if m == 0 { phase0_mass } else { 0.0 };
    for (k, (tp, tm)) in basis.pair_phases().into_iter().enumerate() {
        prob += pea_amplitude(tp, m, p).norm_sqr() * pc.plus[k].norm_sqr()
            + pea_amplitude(tm, m, p).norm_sqr() * pc.minus[k].norm_sqr();
    }
    prob
}

/// Mass of `psi` at walk phase 0.
fn phase0_mass(psi: &[Complex64], pc: &PairCoefficients) -> f64 {
    let pairs: f64 = pc.plus.iter().chain(&pc.minus).map(|c| c.norm_sqr()).sum();
    (norm_sqr(psi) - pairs).max(0.0)
}

fn run_steps<S>(
    model: &EnergyModel,
    schedule: &QsaSchedule,
    mode: Mode,
    rng: &mut impl Rng,
    mut step_at: S,
) -> Result<QsaResult>
where
    S: FnMut(usize) -> Result<Arc<WalkStep>>,
{
    let d = model.dim();
    let cfg = *schedule.pea();
    let n = cfg.outcomes();
    let mut psi = initial_state(d);
    let mut counter = CostCounter::default();
    let mut pea_failures = 0;

    for k in 1..=schedule.q_steps() {
        let step = step_at(k)?;
        let u: f64 = rng.random();
        match (&*step, mode) {
            (WalkStep::Analytic(basis), Mode::MeasureEach) => {
                let pc = basis.pair_coefficients(&psi);
                let zero_mass = phase0_mass(&psi, &pc);
                let m = pick(
                    (0..n).map(|m| analytic_outcome_prob(basis, &pc, zero_mass, m, cfg.p())),
                    u,
                );
                psi = basis.filter(&psi, &pc, |t| pea_amplitude(t, m, cfg.p()));
                pea_failures += u64::from(m != 0);
            }
            (WalkStep::Analytic(basis), Mode::Deferred) => {
                let power = ((u * n as f64) as usize).min(n - 1) as u64;
                psi = basis.apply_walk_power(&psi, power);
            }
            (WalkStep::Dense(walk), _) => {
                let measured = mode == Mode::MeasureEach;
                let joint = pea_dense(&with_clean_register(&psi, &cfg), walk, &cfg, measured)?;
                let dim = d * d;
                let m = pick(register_distribution(&joint, dim).into_iter(), u);
                psi = project_outcome(&joint, m, dim);
                if measured {
                    pea_failures += u64::from(m != 0);
                }
            }
        }
        let norm = norm_sqr(&psi);
        scale(&mut psi, norm.sqrt().recip());
        counter.add_walk_calls(cfg.walk_calls());
    }

    let readout = first_factor_distribution(&psi, d);
    let total: f64 = readout.iter().sum();
    let final_state_index = pick(readout.iter().map(|p| p / total), rng.random());
    let success_prob = readout
        .iter()
        .enumerate()
        .filter(|&(s, _)| model.is_ground(s))
        .map(|(_, p)| p / total)
        .sum();
    Ok(QsaResult {
        final_state_index,
        success: model.is_ground(final_state_index),
        walk_calls: counter.walk_calls,
        pea_failures,
        exact_success_prob: Some(success_prob),
    })
}

/// Exact figures for the branch in which every estimation reads `m = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactQsa {
    /// `P₀`, the probability that all `Q` estimations read 0.
    pub all_zero_prob: f64,
    /// Probability of all zeros and a ground-state readout.
    pub success_and_all_zero: f64,
    /// First-factor readout weights on the all-zeros branch; sums to `P₀`.
    pub readout: Vec<f64>,
    /// Ground-state readout probability averaged over every outcome history,
    /// present when `d ≤ CHANNEL_DIM_LIMIT`.
    pub unconditional_success: Option<f64>,
}

impl ExactQsa {
    /// `1 − P(all zeros ∧ ground)`: every other history counts as failure.
    pub fn failure_prob(&self) -> f64 {
        1.0 - self.success_and_all_zero
    }

    /// `1 − P₀`.
    pub fn zeno_deficit(&self) -> f64 {
        1.0 - self.all_zero_prob
    }
}

/// Unnormalized state of the all-zeros branch after the whole schedule.
pub fn all_zero_branch<F>(
    model: &EnergyModel,
    schedule: &QsaSchedule,
    mut kernel_at: F,
    backend: Backend,
) -> Result<Vec<Complex64>>
where
    F: FnMut(f64) -> Result<TransitionKernel>,
{
    let d = model.dim();
    let cfg = *schedule.pea();
    let mut psi = initial_state(d);
    for k in 1..=schedule.q_steps() {
        let kernel = kernel_at(schedule.beta(k))?;
        psi = match WalkStep::build(&kernel, model, backend)? {
            WalkStep::Analytic(basis) => {
                let pc = basis.pair_coefficients(&psi);
                basis.filter(&psi, &pc, |t| pea_amplitude(t, 0, cfg.p()))
            }
            WalkStep::Dense(walk) => {
                let joint = pea_dense(&with_clean_register(&psi, &cfg), &walk, &cfg, true)?;
                project_outcome(&joint, 0, d * d)
            }
        };
    }
    Ok(psi)
}

/// Exact all-zeros-branch success on the eigenbasis backend, plus the
/// unconditional success for small `d`.
pub fn qsa_success_exact<F>(
    model: &EnergyModel,
    schedule: &QsaSchedule,
    mut kernel_at: F,
) -> Result<ExactQsa>
where
    F: FnMut(f64) -> Result<TransitionKernel>,
{
    let d = model.dim();
    let psi = all_zero_branch(model, schedule, &mut kernel_at, Backend::Analytic)?;
    let readout = first_factor_distribution(&psi, d);
    let unconditional_success = if d <= CHANNEL_DIM_LIMIT {
        let dist = qsa_distribution_exact(model, schedule, &mut kernel_at, Backend::Analytic, Mode::MeasureEach)?;
        Some(ground_mass(model, &dist))
    } else {
        None
    };
    Ok(ExactQsa {
        all_zero_prob: readout.iter().sum(),
        success_and_all_zero: ground_mass(model, &readout),
        readout,
        unconditional_success,
    })
}

fn ground_mass(model: &EnergyModel, weights: &[f64]) -> f64 {
    model.ground_set().iter().map(|&s| weights[s]).sum()
}

type CMatrix = DMatrix<Complex64>;

/// `g(x) = 2^{-p} Σ_{m'} e^{i m' x}`, the overlap of two estimation outputs.
fn register_overlap(x: f64, p: u32) -> Complex64 {
    pea_amplitude(x.rem_euclid(2.0 * PI), 0, p)
}

/// One estimation as a channel on the walk-space density matrix, averaged
/// over the outcome.
///
/// Eigenbasis form: the channel multiplies the `(b, c)` element in the walk
/// eigenbasis by `g(θ_b − θ_c)`, whatever the mode.
fn analytic_channel(basis: &WalkBasis, rho: &CMatrix, p: u32) -> CMatrix {
    let dim = rho.nrows();
    let mut thetas = Vec::new();
    let mut cols = Vec::new();
    for (&j, (tp, tm)) in basis.active().iter().zip(basis.pair_phases()) {
        for (plus, t) in [(true, tp), (false, tm)] {
            thetas.push(t);
            cols.push(basis.eigvec(j, plus));
        }
    }
    let r = thetas.len();
    let b = CMatrix::from_fn(dim, r, |i, c| cols[c][i]);
    let bh = b.adjoint();
    let p0 = CMatrix::identity(dim, dim) - &b * &bh;
    let g = CMatrix::from_fn(r, r, |i, c| register_overlap(thetas[i] - thetas[c], p));
    let gv: Vec<Complex64> = thetas.iter().map(|&t| register_overlap(t, p)).collect();

    let rho_p0 = rho * &p0;
    let mut left = &bh * &rho_p0;
    for (i, gi) in gv.iter().enumerate() {
        left.row_mut(i).iter_mut().for_each(|x| *x *= gi);
    }
    let mixed = &b * left;
    let core = (&bh * rho * &b).component_mul(&g);
    // ρ is Hermitian, so the P0·ρ·B block is the adjoint of the B·ρ·P0 block.
    &p0 * &rho_p0 + &mixed + mixed.adjoint() + &b * core * &bh
}

/// Kraus operators `K_m` of one dense estimation, one per register value.
fn dense_kraus(walk: &WalkOperator, cfg: &PeaConfig, inverse_ft: bool) -> Result<Vec<CMatrix>> {
    let dim = walk.d() * walk.d();
    let n = cfg.outcomes();
    let mut kraus = vec![CMatrix::zeros(dim, dim); n];
    let mut e = vec![ZERO; dim];
    for i in 0..dim {
        e.fill(ZERO);
        e[i] = Complex64::new(1.0, 0.0);
        let joint = pea_dense(&with_clean_register(&e, cfg), walk, cfg, inverse_ft)?;
        for (m, k) in kraus.iter_mut().enumerate() {
            for s in 0..dim {
                k[(s, i)] = joint[m * dim + s];
            }
        }
    }
    Ok(kraus)
}

/// Exact first-factor readout distribution averaged over every estimation
/// outcome, by density-matrix propagation. Limited to `d ≤ 8`.
pub fn qsa_distribution_exact<F>(
    model: &EnergyModel,
    schedule: &QsaSchedule,
    mut kernel_at: F,
    backend: Backend,
    mode: Mode,
) -> Result<Vec<f64>>
where
    F: FnMut(f64) -> Result<TransitionKernel>,
{
    let d = model.dim();
    let limit = CHANNEL_DIM_LIMIT.min(DENSE_DIM_LIMIT);
    if d > limit {
        return Err(Error::DimensionTooLarge { got: d, limit });
    }
    let cfg = *schedule.pea();
    let psi0 = nalgebra::DVector::from_vec(initial_state(d));
    let mut rho = &psi0 * psi0.adjoint();
    for k in 1..=schedule.q_steps() {
        let kernel = kernel_at(schedule.beta(k))?;
        rho = match WalkStep::build(&kernel, model, backend)? {
            WalkStep::Analytic(basis) => analytic_channel(&basis, &rho, cfg.p()),
            WalkStep::Dense(walk) => {
                let kraus = dense_kraus(&walk, &cfg, mode == Mode::MeasureEach)?;
                kraus
                    .iter()
                    .fold(CMatrix::zeros(rho.nrows(), rho.ncols()), |acc, km| {
                        acc + km * &rho * km.adjoint()
                    })
            }
        };
    }
    Ok((0..d)
        .map(|a| (0..d).map(|b| rho[(a * d + b, a * d + b)].re).sum())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anneal::run_rng;
    use crate::markov::MetropolisChain;

    fn two_state_chain() -> MetropolisChain {
        let model = EnergyModel::new(vec![0.0, 1.0]).unwrap();
        let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        MetropolisChain::new(model, swap, 0.5).unwrap()
    }

    fn four_state_chain() -> MetropolisChain {
        let model = EnergyModel::new(vec![0.0, 0.9, 0.4, 1.6]).unwrap();
        let p = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 0.2, 0.3, 0.5, //
                0.2, 0.0, 0.5, 0.3, //
                0.3, 0.5, 0.0, 0.2, //
                0.5, 0.3, 0.2, 0.0,
            ],
        );
        MetropolisChain::new(model, p, 0.5).unwrap()
    }

    #[test]
    fn schedule_example() {
        let chain = two_state_chain();
        let s = qsa_schedule(chain.model(), 0.75, 0.1, 1.0, 1.0).unwrap();
        assert!((s.beta_f() - 400f64.ln()).abs() < 1e-12);
        assert_eq!(s.q_steps(), 359);
        assert!((s.delta_beta() - 0.016_689).abs() < 1e-6);
        assert!((s.nu() - s.delta_beta()).abs() < 1e-15);
        assert_eq!(s.pea().p(), 7);
        assert_eq!(s.walk_budget(), 359 * 127);
        assert!((s.q_steps() as f64 * s.delta_beta() - s.beta_f()).abs() < 1e-12);
        assert_eq!(s.beta(s.q_steps()), s.beta_f());
    }

    #[test]
    fn schedule_scales_with_energy() {
        let a = EnergyModel::new(vec![0.0, 1.0, 3.0]).unwrap();
        let b = EnergyModel::new(vec![0.0, 2.0, 6.0]).unwrap();
        let sa = qsa_schedule(&a, 0.5, 0.1, 1.0, 1.0).unwrap();
        let sb = qsa_schedule(&b, 0.5, 0.1, 1.0, 1.0).unwrap();
        // β_f halves with γ, E_M doubles: β_f E_M is unchanged, and so are Q and ν.
        assert_eq!(sa.q_steps(), sb.q_steps());
        assert!((sa.nu() - sb.nu()).abs() < 1e-12);
        assert!(matches!(qsa_schedule(&a, 0.5, 0.0, 1.0, 1.0), Err(Error::InvalidParameter { .. })));
        assert!(matches!(qsa_schedule(&a, 0.0, 0.1, 1.0, 1.0), Err(Error::ZeroGap)));
    }

    #[test]
    fn error_bound_examples() {
        let chain = two_state_chain();
        let s = qsa_schedule(chain.model(), 0.75, 0.1, 1.0, 1.0).unwrap();
        let thermal = 2.0 * (-s.beta_f()).exp();
        assert!((thermal - 0.005).abs() < 1e-15);
        let bound = qsa_error_bound(chain.model(), &s, 1.0);
        assert!((bound - (0.005 + 359.0 * s.nu() * s.nu())).abs() < 1e-12);
        assert!((bound - 0.105).abs() < 1e-3);
        let long = QsaSchedule::custom(chain.model(), s.beta_f(), 1 << 20, 1).unwrap();
        assert!(qsa_error_bound(chain.model(), &long, 1.0) - thermal < 1e-4);
    }

    #[test]
    fn predicted_cost_examples() {
        let chain = two_state_chain();
        let m = chain.model();
        let c = predicted_costs(m, 0.75, 0.1, 0.25, 1.0, 1.0).unwrap();
        assert_eq!(c.n_sa_scheduled, 32);
        assert_eq!(c.n_qsa_scheduled, 359 * 127);
        let half = predicted_costs(m, 0.375, 0.1, 0.25, 1.0, 1.0).unwrap();
        assert!((half.n_sa_formula / c.n_sa_formula - 2.0).abs() < 1e-12);
        assert!((half.n_qsa_formula / c.n_qsa_formula - 2f64.sqrt()).abs() < 1e-12);
        let tight = predicted_costs(m, 0.75, 0.05, 0.25, 1.0, 1.0).unwrap();
        let log_ratio = (2.0 * 2.0 / 0.0025f64).ln() / (2.0 * 2.0 / 0.01f64).ln();
        assert!((tight.n_sa_formula / c.n_sa_formula - log_ratio).abs() < 1e-12);
        assert!(tight.n_qsa_formula / c.n_qsa_formula > 4.0);
    }

    #[test]
    fn no_steps_reads_uniform() {
        let model = EnergyModel::new(vec![0.0, 0.0, 1.0, 2.0]).unwrap();
        let psi = initial_state(4);
        let q = first_factor_distribution(&psi, 4);
        assert!((ground_mass(&model, &q) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_resonant_step_from_gibbs_is_certain() {
        let chain = two_state_chain();
        let s = QsaSchedule::custom(chain.model(), 1e-12, 1, 3).unwrap();
        let exact = qsa_success_exact(chain.model(), &s, |b| chain.kernel(b)).unwrap();
        assert!((exact.all_zero_prob - 1.0).abs() < 1e-10);
    }

    #[test]
    fn two_state_exact_meets_bound() {
        let chain = two_state_chain();
        let s = qsa_schedule(chain.model(), 0.75, 0.1, 1.0, 1.0).unwrap();
        let exact = qsa_success_exact(chain.model(), &s, |b| chain.kernel(b)).unwrap();
        assert!(exact.failure_prob() <= qsa_error_bound(chain.model(), &s, 1.0));
        assert!(exact.failure_prob() <= 0.1);
        let unc = exact.unconditional_success.unwrap();
        assert!(unc >= exact.success_and_all_zero - 1e-12);
    }

    #[test]
    fn backends_agree_on_all_zero_branch() {
        let chain = four_state_chain();
        let s = QsaSchedule::custom(chain.model(), 2.0, 5, 4).unwrap();
        let a = all_zero_branch(chain.model(), &s, |b| chain.kernel(b), Backend::Analytic).unwrap();
        let d = all_zero_branch(
            chain.model(),
            &s,
            |b| chain.kernel(b),
            Backend::Dense(Completion::Canonical),
        )
        .unwrap();
        for (x, y) in a.iter().zip(&d) {
            assert!((x - y).norm() < 1e-10);
        }
    }

    #[test]
    fn channels_agree_across_backends_and_modes() {
        let chain = four_state_chain();
        let s = QsaSchedule::custom(chain.model(), 2.0, 3, 3).unwrap();
        let kernel_at = |b| chain.kernel(b);
        let analytic =
            qsa_distribution_exact(chain.model(), &s, kernel_at, Backend::Analytic, Mode::MeasureEach)
                .unwrap();
        for mode in [Mode::MeasureEach, Mode::Deferred] {
            let dense = qsa_distribution_exact(
                chain.model(),
                &s,
                kernel_at,
                Backend::Dense(Completion::Canonical),
                mode,
            )
            .unwrap();
            for (x, y) in analytic.iter().zip(&dense) {
                assert!((x - y).abs() < 1e-10, "{mode:?}: {x} vs {y}");
            }
        }
        assert!((analytic.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn sampled_runs_count_walk_calls_and_repeat() {
        let chain = four_state_chain();
        let s = QsaSchedule::custom(chain.model(), 2.0, 6, 3).unwrap();
        for backend in [Backend::Analytic, Backend::Dense(Completion::Seeded(4))] {
            for mode in [Mode::MeasureEach, Mode::Deferred] {
                let run = |seed| {
                    run_qsa(chain.model(), &s, |b| chain.kernel(b), backend, mode, &mut run_rng(seed, 0))
                        .unwrap()
                };
                let a = run(17);
                assert_eq!(a, run(17));
                assert_eq!(a.walk_calls, 6 * 7);
                if mode == Mode::Deferred {
                    assert_eq!(a.pea_failures, 0);
                }
            }
        }
    }

    #[test]
    fn plan_matches_on_the_fly_run() {
        let chain = four_state_chain();
        let s = QsaSchedule::custom(chain.model(), 2.0, 6, 3).unwrap();
        let plan = QsaPlan::new(chain.model(), &s, |b| chain.kernel(b), Backend::Analytic).unwrap();
        for seed in 0..5 {
            let a = plan.run(chain.model(), &s, Mode::MeasureEach, &mut run_rng(seed, 1)).unwrap();
            let b = run_qsa(
                chain.model(),
                &s,
                |b| chain.kernel(b),
                Backend::Analytic,
                Mode::MeasureEach,
                &mut run_rng(seed, 1),
            )
            .unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn cost_counter_accumulates() {
        let mut c = CostCounter::default();
        c.add_walk_calls(3);
        c.add_markov_steps(2);
        let mut total = CostCounter::default();
        total.merge(&c);
        total.merge(&c);
        assert_eq!(total.walk_calls, 6);
        assert_eq!(total.markov_equivalent(), 4 + 24);
    }
}
