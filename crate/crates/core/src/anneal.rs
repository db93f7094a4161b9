//! Discrete-time Markov chain annealing with a constant `Δβ` schedule.

use std::fmt::Write as _;
use std::ops::ControlFlow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::energy::{BoltzmannDist, EnergyModel};
use crate::error::{Error, Result};
use crate::markov::TransitionKernel;

pub const DEFAULT_TAU: f64 = 0.25;
/// Ceiling on `‖h‖²` along a run.
pub const LYAPUNOV_LIMIT: f64 = 2.0 + 1e-6;
const MAX_TAU_HALVINGS: u32 = 8;

/// Final inverse temperature `ln(2d/ε²)/γ` shared by both annealers.
pub fn target_beta(model: &EnergyModel, epsilon: f64) -> f64 {
    (2.0 * model.dim() as f64 / (epsilon * epsilon)).ln() / model.gamma()
}

pub(crate) fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(Error::param("epsilon", format!("{epsilon} is outside (0, 1)")))
    }
}

pub(crate) fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0) {
        return Err(Error::ZeroGap);
    }
    if delta > 1.0 {
        return Err(Error::param("delta", format!("{delta} exceeds 1")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaSchedule {
    delta_beta: f64,
    steps: usize,
    target_beta: f64,
    tau: f64,
    epsilon: f64,
    delta: f64,
}

/// `Δβ = τδ/E_M`, `P = ⌈β_target/Δβ⌉`.
pub fn sa_schedule(model: &EnergyModel, delta: f64, epsilon: f64, tau: f64) -> Result<SaSchedule> {
    check_delta(delta)?;
    check_epsilon(epsilon)?;
    if !(tau > 0.0) {
        return Err(Error::param("tau", format!("{tau} is not positive")));
    }
    let delta_beta = tau * delta / model.e_max();
    let target_beta = target_beta(model, epsilon);
    let steps = (target_beta / delta_beta).ceil() as usize;
    Ok(SaSchedule {
        delta_beta,
        steps,
        target_beta,
        tau,
        epsilon,
        delta,
    })
}

impl SaSchedule {
    pub fn delta_beta(&self) -> f64 {
        self.delta_beta
    }

    /// Number of Markov steps `P`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// `P·Δβ`, the last temperature actually visited. At least the target.
    pub fn beta_f(&self) -> f64 {
        self.steps as f64 * self.delta_beta
    }

    /// `ln(2d/ε²)/γ`.
    pub fn target_beta(&self) -> f64 {
        self.target_beta
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn beta(&self, k: usize) -> f64 {
        k as f64 * self.delta_beta
    }

    /// A copy with `P` forced to `steps`, keeping `Δβ`.
    pub fn truncated(&self, steps: usize) -> Self {
        Self { steps, ..*self }
    }
}

/// `‖(μ^σ/√π^σ)_σ‖₂`.
pub fn h_norm(mu: &[f64], dist: &BoltzmannDist) -> f64 {
    assert_eq!(mu.len(), dist.probabilities().len(), "dimension mismatch");
    mu.iter()
        .zip(dist.probabilities())
        .map(|(m, p)| m * m / p)
        .sum::<f64>()
        .sqrt()
}

/// `√(2d)·e^{-β_f γ/2}`, clamped to 1.
pub fn sa_error_bound(model: &EnergyModel, beta_f: f64) -> f64 {
    assert!(beta_f >= 0.0, "beta_f must be non-negative");
    ((2.0 * model.dim() as f64).sqrt() * (-0.5 * beta_f * model.gamma()).exp()).min(1.0)
}

/// One recorded point of an exact run. Step 0 is the uniform start.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub step: usize,
    pub beta: f64,
    pub mu: Vec<f64>,
    pub h_norm: f64,
    pub error_mass: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct StepView<'a> {
    pub step: usize,
    pub beta: f64,
    pub mu: &'a [f64],
    pub h_norm: f64,
    pub error_mass: f64,
}

impl StepView<'_> {
    pub fn to_owned(&self) -> TraceStep {
        TraceStep {
            step: self.step,
            beta: self.beta,
            mu: self.mu.to_vec(),
            h_norm: self.h_norm,
            error_mass: self.error_mass,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionTrace {
    pub steps: Vec<TraceStep>,
}

impl DistributionTrace {
    pub fn last(&self) -> &TraceStep {
        self.steps.last().expect("a trace always holds the initial step")
    }

    pub fn final_error_mass(&self) -> f64 {
        self.last().error_mass
    }

    pub fn max_h_norm_sq(&self) -> f64 {
        self.steps.iter().map(|s| s.h_norm * s.h_norm).fold(0.0, f64::max)
    }

    /// Largest `c` with `Δ‖h‖² = -δ‖h‖² + 2δ + cδ²` over the run.
    pub fn recurrence_constant(&self, delta: f64) -> f64 {
        self.steps
            .windows(2)
            .map(|w| {
                let prev = w[0].h_norm * w[0].h_norm;
                let next = w[1].h_norm * w[1].h_norm;
                (next - prev + delta * prev - 2.0 * delta) / (delta * delta)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `step,beta,h_norm,error_mass,markov_steps`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,beta,h_norm,error_mass,markov_steps\n");
        for s in &self.steps {
            writeln!(
                out,
                "{},{},{},{},{}",
                s.step,
                crate::fmt_f64(s.beta),
                crate::fmt_f64(s.h_norm),
                crate::fmt_f64(s.error_mass),
                s.step
            )
            .unwrap();
        }
        out
    }
}

/// Propagates `μ(β_k) = M(β_k) μ(β_{k-1})` from the uniform distribution and
/// records every step.
pub fn anneal_exact<F>(
    model: &EnergyModel,
    schedule: &SaSchedule,
    kernel_at: F,
) -> Result<DistributionTrace>
where
    F: FnMut(f64) -> Result<TransitionKernel>,
{
    let mut steps = Vec::with_capacity(schedule.steps() + 1);
    anneal_exact_until(model, schedule, kernel_at, |view| {
        steps.push(view.to_owned());
        ControlFlow::Continue(())
    })?;
    Ok(DistributionTrace { steps })
}

/// Streaming form of [`anneal_exact`]: the observer sees each step without
/// the trace being stored and may stop the run early. Returns the last step
/// observed.
pub fn anneal_exact_until<F, O>(
    model: &EnergyModel,
    schedule: &SaSchedule,
    mut kernel_at: F,
    mut observe: O,
) -> Result<TraceStep>
where
    F: FnMut(f64) -> Result<TransitionKernel>,
    O: FnMut(&StepView<'_>) -> ControlFlow<()>,
{
    let d = model.dim();
    let mut mu = vec![1.0 / d as f64; d];
    let mut step = 0;
    let mut beta = 0.0;
    loop {
        let view = StepView {
            step,
            beta,
            mu: &mu,
            h_norm: h_norm(&mu, &model.boltzmann(beta)),
            error_mass: model.excited_mass(&mu),
        };
        if observe(&view).is_break() || step == schedule.steps() {
            return Ok(view.to_owned());
        }
        step += 1;
        beta = schedule.beta(step);
        mu = kernel_at(beta)?.apply(&mu);
    }
}

/// Outcome of an [`anneal_guarded`] run.
#[derive(Debug, Clone)]
pub struct GuardedRun {
    pub schedule: SaSchedule,
    pub trace: DistributionTrace,
    pub halvings: u32,
}

/// Runs [`anneal_exact`], halving `τ` (at most 8 times) while some step has
/// `‖h‖² > 2 + 1e-6`. The last attempt is returned even if it still fails.
pub fn anneal_guarded<F>(
    model: &EnergyModel,
    delta: f64,
    epsilon: f64,
    tau: f64,
    mut kernel_at: F,
) -> Result<GuardedRun>
where
    F: FnMut(f64) -> Result<TransitionKernel>,
{
    let mut tau = tau;
    let mut halvings = 0;
    loop {
        let schedule = sa_schedule(model, delta, epsilon, tau)?;
        let trace = anneal_exact(model, &schedule, &mut kernel_at)?;
        if trace.max_h_norm_sq() <= LYAPUNOV_LIMIT || halvings == MAX_TAU_HALVINGS {
            return Ok(GuardedRun {
                schedule,
                trace,
                halvings,
            });
        }
        tau *= 0.5;
        halvings += 1;
    }
}

/// Generator for run `run_index` of a seeded batch: ChaCha8 keyed by `seed`,
/// with the run index selecting the stream.
pub fn run_rng(seed: u64, run_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run_index);
    rng
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledRun {
    /// `σ^(0), …, σ^(P)`.
    pub trajectory: Vec<usize>,
    pub markov_steps: usize,
}

impl SampledRun {
    pub fn final_state(&self) -> usize {
        *self.trajectory.last().expect("trajectory holds the initial state")
    }
}

/// One sampled trajectory: uniform start, then inverse-CDF steps through the
/// columns of `M(β_k)`.
pub fn anneal_sampled<F>(
    model: &EnergyModel,
    schedule: &SaSchedule,
    mut kernel_at: F,
    rng: &mut impl Rng,
) -> Result<SampledRun>
where
    F: FnMut(f64) -> Result<TransitionKernel>,
{
    let d = model.dim();
    let start = ((rng.random::<f64>() * d as f64) as usize).min(d - 1);
    let mut trajectory = Vec::with_capacity(schedule.steps() + 1);
    trajectory.push(start);
    let mut state = start;
    for k in 1..=schedule.steps() {
        let kernel = kernel_at(schedule.beta(k))?;
        state = kernel.sample_next(state, rng.random::<f64>());
        trajectory.push(state);
    }
    Ok(SampledRun {
        trajectory,
        markov_steps: schedule.steps(),
    })
}
