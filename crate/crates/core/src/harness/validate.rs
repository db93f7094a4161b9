//! The invariant suite behind `qsa validate` and the acceptance tests.
//!
//! Each check draws its corpus from `run_rng(seed, i)` so results depend only
//! on the seed and the corpus size.

use std::f64::consts::PI;
use std::fmt;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::anneal::{anneal_exact, run_rng, sa_error_bound, sa_schedule, target_beta, DEFAULT_TAU, LYAPUNOV_LIMIT};
use crate::error::Result;
use crate::markov::MetropolisChain;
use crate::pea::{
    choose_p, garbage_bound, pea_amplitude, pea_amplitude_sum, pea_dense, project_outcome,
    register_distribution, with_clean_register, PeaConfig,
};
use crate::qsa::{
    all_zero_branch, first_factor_distribution, qsa_distribution_exact, qsa_schedule, Backend, Mode,
    QsaSchedule,
};
use crate::qwalk::{check_spectral_correspondence, Completion, WalkOperator};

use super::config::ExperimentConfig;
use super::experiment::{measure_gap, quantum_cost, scaling_experiment, schedule_gap, sa_experiment, qsa_experiment};
use super::families::{random_chain, random_well_connected_chain};
use super::fit::fit_log_log;

#[derive(Debug, Clone)]
pub struct Check {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {}. {}: {} ({:.1}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

fn timed(id: u8, name: &'static str, body: impl FnOnce() -> Result<(bool, String)>) -> Check {
    let start = Instant::now();
    let (passed, detail) = body().unwrap_or_else(|e| (false, format!("error: {e}")));
    Check {
        id,
        name,
        passed,
        detail,
        elapsed: start.elapsed(),
    }
}

/// Corpus sizes for each check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuiteSize {
    pub kernels: usize,
    pub completion_pairs: usize,
    pub pea_triples: usize,
    pub backend_instances: usize,
    pub lyapunov_instances: usize,
    pub zeno_instances: usize,
    pub bound_instances: usize,
}

impl SuiteSize {
    pub fn full() -> Self {
        Self {
            kernels: 500,
            completion_pairs: 50,
            pea_triples: 1000,
            backend_instances: 20,
            lyapunov_instances: 100,
            zeno_instances: 5,
            bound_instances: 50,
        }
    }

    pub fn quick() -> Self {
        Self {
            kernels: 40,
            completion_pairs: 10,
            pea_triples: 200,
            backend_instances: 4,
            lyapunov_instances: 10,
            zeno_instances: 2,
            bound_instances: 8,
        }
    }
}

fn random_lazy_chain(rng: &mut ChaCha8Rng, d_max: usize) -> Result<(MetropolisChain, f64)> {
    let d = rng.random_range(2..=d_max);
    let laziness = rng.random_range(0.5..0.95);
    let beta = rng.random_range(0.0..3.0);
    Ok((random_chain(d, laziness, rng)?, beta))
}

fn worst(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(0.0, f64::max)
}

/// Dense walk eigenphases against `{0, ±2 arccos λ_j}`, residual phases
/// against `{0, π}` and the fixed point `|φ₀ 𝔬⟩`.
pub fn spectral_correspondence(kernels: usize, seed: u64) -> Check {
    timed(1, "spectral correspondence", || {
        let errors = (0..kernels)
            .into_par_iter()
            .map(|i| {
                let mut rng = run_rng(seed, i as u64);
                let (chain, beta) = random_lazy_chain(&mut rng, 16)?;
                let completion = if i % 2 == 0 {
                    Completion::Canonical
                } else {
                    Completion::Seeded(rng.random())
                };
                let walk = WalkOperator::build(&chain.kernel(beta)?, completion)?;
                Ok(check_spectral_correspondence(&walk, &chain.spectrum(beta)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let pair = worst(errors.iter().map(|c| c.pair_error));
        let residual = worst(errors.iter().map(|c| c.residual_error));
        let fixed = worst(errors.iter().map(|c| c.fixed_point_error));
        Ok((
            pair.max(residual).max(fixed) <= 1e-8,
            format!(
                "{kernels} kernels, worst pair {pair:.2e}, residual {residual:.2e}, fixed point {fixed:.2e} (tol 1e-8)"
            ),
        ))
    })
}

fn random_marker_state(d: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    let mut psi = vec![Complex64::new(0.0, 0.0); d * d];
    for a in 0..d {
        psi[a * d] = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    }
    let n = psi.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    psi.iter_mut().for_each(|x| *x /= n);
    psi
}

/// Register distributions and marker-subspace post-states from two seeded
/// completions (and the canonical one) on inputs in `span{|σ 𝔬⟩}`.
pub fn completion_invariance(pairs: usize, seed: u64) -> Check {
    timed(2, "completion invariance", || {
        let errors = (0..pairs)
            .into_par_iter()
            .map(|i| {
                let mut rng = run_rng(seed, i as u64);
                let (chain, beta) = random_lazy_chain(&mut rng, 6)?;
                let d = chain.model().dim();
                let cfg = PeaConfig::with_p(rng.random_range(1..=5))?;
                let psi = with_clean_register(&random_marker_state(d, &mut rng), &cfg);
                let kernel = chain.kernel(beta)?;
                let s1: u64 = rng.random();
                let completions = [Completion::Seeded(s1), Completion::Seeded(s1 ^ 0x5DEECE66D), Completion::Canonical];
                let outs = completions
                    .iter()
                    .map(|&c| pea_dense(&psi, &WalkOperator::build(&kernel, c)?, &cfg, true))
                    .collect::<Result<Vec<_>>>()?;
                let dim = d * d;
                let mut err: f64 = 0.0;
                for other in &outs[1..] {
                    let (pa, pb) = (register_distribution(&outs[0], dim), register_distribution(other, dim));
                    err = err.max(worst(pa.iter().zip(&pb).map(|(a, b)| (a - b).abs())));
                    for m in 0..cfg.outcomes() {
                        let (a, b) = (project_outcome(&outs[0], m, dim), project_outcome(other, m, dim));
                        err = err.max(worst((0..d).map(|s| (a[s * d] - b[s * d]).norm())));
                    }
                }
                Ok(err)
            })
            .collect::<Result<Vec<_>>>()?;
        let err = worst(errors.into_iter());
        Ok((err <= 1e-8, format!("{pairs} pairs, worst difference {err:.2e} (tol 1e-8)")))
    })
}

/// Closed-form outcome amplitudes against the defining sum, and the garbage
/// bound on the zero outcome.
pub fn pea_amplitude_law(triples: usize, seed: u64) -> Check {
    timed(3, "phase estimation amplitude law", || {
        let mut rng = run_rng(seed, 0);
        let mut err: f64 = 0.0;
        let mut violations = 0;
        for _ in 0..triples {
            let p = rng.random_range(1..=10);
            let m = rng.random_range(0..1usize << p);
            let phase = rng.random_range(0.0..2.0 * PI);
            err = err.max((pea_amplitude(phase, m, p) - pea_amplitude_sum(phase, m, p)).norm());

            let phi = rng.random_range(1e-6..PI / 2.0);
            let bound = garbage_bound(2.0 * phi, p);
            for t in [2.0 * phi, 2.0 * PI - 2.0 * phi] {
                if pea_amplitude(t, 0, p).norm() > bound {
                    violations += 1;
                }
            }
        }
        Ok((
            err <= 1e-10 && violations == 0,
            format!("{triples} triples, worst closed-form error {err:.2e} (tol 1e-10), {violations} bound violations"),
        ))
    })
}

/// Dense canonical-completion runs against the eigenbasis backend: full
/// readout distributions in both modes and the all-zeros branch.
pub fn backend_equivalence(instances: usize, seed: u64) -> Check {
    timed(4, "backend equivalence", || {
        let errors = (0..instances)
            .into_par_iter()
            .map(|i| {
                let mut rng = run_rng(seed, i as u64);
                let (chain, _) = random_lazy_chain(&mut rng, 6)?;
                let model = chain.model();
                let q = rng.random_range(1..=8);
                let p = rng.random_range(1..=5);
                let beta_f = rng.random_range(0.5..4.0);
                let schedule = QsaSchedule::custom(model, beta_f, q, p)?;
                let kernel_at = |b| chain.kernel(b);
                let dense = Backend::Dense(Completion::Canonical);
                let mut err: f64 = 0.0;
                for mode in [Mode::MeasureEach, Mode::Deferred] {
                    let a = qsa_distribution_exact(model, &schedule, kernel_at, Backend::Analytic, mode)?;
                    let b = qsa_distribution_exact(model, &schedule, kernel_at, dense, mode)?;
                    err = err.max(worst(a.iter().zip(&b).map(|(x, y)| (x - y).abs())));
                }
                let d = model.dim();
                let a = first_factor_distribution(&all_zero_branch(model, &schedule, kernel_at, Backend::Analytic)?, d);
                let b = first_factor_distribution(&all_zero_branch(model, &schedule, kernel_at, dense)?, d);
                err = err.max(worst(a.iter().zip(&b).map(|(x, y)| (x - y).abs())));
                Ok(err)
            })
            .collect::<Result<Vec<_>>>()?;
        let err = worst(errors.into_iter());
        Ok((err <= 1e-7, format!("{instances} instances, worst difference {err:.2e} (tol 1e-7)")))
    })
}

/// `‖h‖² ≤ 2 + 1e-6` at every step with `ΔβE_M = δ/4`, where `δ` is the
/// exact minimum gap over the schedule, and the final error within
/// `√(2d)e^{-β_f γ/2}`.
pub fn lyapunov_suite(instances: usize, seed: u64) -> Check {
    timed(5, "h-norm recurrence", || {
        let results = (0..instances)
            .into_par_iter()
            .map(|i| {
                let mut rng = run_rng(seed, i as u64);
                let d = rng.random_range(2..=8);
                let eps = [0.05, 0.1, 0.2][i % 3];
                let chain = random_well_connected_chain(d, 0.5, &mut rng)?;
                let model = chain.model();
                let delta = schedule_gap(&chain, eps, DEFAULT_TAU, 64)?;
                let s = sa_schedule(model, delta, eps, DEFAULT_TAU)?;
                let trace = anneal_exact(model, &s, |b| chain.kernel(b))?;
                let bound = sa_error_bound(model, s.beta_f());
                Ok((trace.max_h_norm_sq(), trace.final_error_mass() / bound, s.steps()))
            })
            .collect::<Result<Vec<_>>>()?;
        let h = worst(results.iter().map(|r| r.0));
        let ratio = worst(results.iter().map(|r| r.1));
        let steps: usize = results.iter().map(|r| r.2).sum();
        Ok((
            h <= LYAPUNOV_LIMIT && ratio <= 1.0,
            format!(
                "{instances} runs, {steps} steps, max h^2 {h:.6} (limit 2+1e-6), worst error/bound {ratio:.3e}"
            ),
        ))
    })
}

/// Exponent of `1 − P₀` in `Q` over four doublings at fixed `β_f`.
pub fn zeno_law(instances: usize, seed: u64) -> Check {
    timed(6, "Zeno scaling", || {
        let slopes = (0..instances)
            .into_par_iter()
            .map(|i| {
                let mut rng = run_rng(seed, i as u64);
                let d = rng.random_range(3..=8);
                let chain = random_well_connected_chain(d, 0.5, &mut rng)?;
                let model = chain.model();
                let eps = 0.1;
                let delta = measure_gap(&chain, eps, DEFAULT_TAU, 64)?;
                let beta_f = target_beta(model, eps);
                let q0 = (4.0 * beta_f * model.e_max()).ceil() as usize;
                let mut qs = Vec::new();
                let mut deficits = Vec::new();
                for k in 0..5 {
                    let q = q0 << k;
                    let nu = beta_f * model.e_max() / q as f64;
                    let p = choose_p(nu, delta, 1.0)?.p();
                    let s = QsaSchedule::custom(model, beta_f, q, p)?;
                    let psi = all_zero_branch(model, &s, |b| chain.kernel(b), Backend::Analytic)?;
                    qs.push(q as f64);
                    deficits.push(1.0 - psi.iter().map(|x| x.norm_sqr()).sum::<f64>());
                }
                Ok(fit_log_log(&qs, &deficits).slope)
            })
            .collect::<Result<Vec<_>>>()?;
        let passed = slopes.iter().all(|s| (s + 1.0).abs() <= 0.2);
        let list = slopes.iter().map(|s| format!("{s:.3}")).collect::<Vec<_>>().join(", ");
        Ok((passed, format!("{instances} instances, exponents [{list}] (target -1 ± 0.2)")))
    })
}

/// Fits one `τ′` so that `1 − P(all zeros ∧ ground) ≤ d e^{-β_f γ} + τ′Qν²`
/// on every instance.
pub fn error_bound(instances: usize, seed: u64) -> Check {
    timed(7, "quantum error bound", || {
        let taus = (0..instances)
            .into_par_iter()
            .map(|i| {
                let mut rng = run_rng(seed, i as u64);
                let d = rng.random_range(2..=16);
                let eps = [0.05, 0.1, 0.2][i % 3];
                let chain = random_well_connected_chain(d, 0.5, &mut rng)?;
                let model = chain.model();
                let delta = measure_gap(&chain, eps, DEFAULT_TAU, 64)?;
                let cost = quantum_cost(&chain, qsa_schedule(model, delta, eps, 1.0, 1.0)?)?;
                let s = cost.schedule;
                let thermal = d as f64 * (-s.beta_f() * model.gamma()).exp();
                let zeno = s.q_steps() as f64 * s.nu() * s.nu();
                Ok(((1.0 - cost.success - thermal).max(0.0) / zeno, 1.0 - cost.success, thermal + zeno))
            })
            .collect::<Result<Vec<_>>>()?;
        let tau = worst(taus.iter().map(|t| t.0));
        let worst_failure = worst(taus.iter().map(|t| t.1));
        let worst_ratio = worst(taus.iter().map(|t| t.1 / t.2));
        Ok((
            tau <= 10.0,
            format!(
                "{instances} instances, fitted tau' {tau:.4} (limit 10), worst failure {worst_failure:.3e}, \
                 worst failure/(thermal+Q nu^2) {worst_ratio:.3}"
            ),
        ))
    })
}

/// Slopes of the barrier sweep against `-1` and `-1/2`.
pub fn headline_scaling(cfg: &ExperimentConfig) -> Check {
    timed(8, "cost scaling", || {
        let report = scaling_experiment(cfg)?;
        let (Some(sa), Some(qsa)) = (report.sa_fit, report.qsa_fit) else {
            return Ok((false, "fewer than two distinct gaps".into()));
        };
        let (lo, hi) = report
            .rows
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r.delta), hi.max(r.delta)));
        let decades = (hi / lo).log10();
        let passed = (sa.slope + 1.0).abs() <= 0.15 && (qsa.slope + 0.5).abs() <= 0.15 && decades >= 2.0;
        Ok((
            passed,
            format!(
                "{} instances over {decades:.2} decades of delta, s_sa {:.4} ± {:.4}, s_qsa {:.4} ± {:.4}, separation significant: {}",
                report.rows.len(),
                sa.slope,
                sa.slope_se,
                qsa.slope,
                qsa.slope_se,
                report.separation_significant()
            ),
        ))
    })
}

/// Every subcommand output computed twice from the same config.
pub fn determinism(seed: u64) -> Check {
    timed(9, "determinism", || {
        let mut cfg = ExperimentConfig::parse("family = random_energies\nd = 5\ninstances = 3\nruns = 20\ngap_grid = 32").unwrap();
        cfg.seed = seed;
        let mut same = true;
        for _ in 0..2 {
            same &= sa_experiment(&cfg)? == sa_experiment(&cfg)?;
            same &= qsa_experiment(&cfg)? == qsa_experiment(&cfg)?;
            cfg.family = super::families::Family::TwoLevel;
        }
        Ok((same, format!("repeated outputs identical: {same}")))
    })
}

/// Runs the whole suite with the given sizes; the scaling check uses `cfg`.
pub fn run_suite(size: SuiteSize, seed: u64, scaling: &ExperimentConfig) -> Vec<Check> {
    vec![
        spectral_correspondence(size.kernels, seed),
        completion_invariance(size.completion_pairs, seed),
        pea_amplitude_law(size.pea_triples, seed),
        backend_equivalence(size.backend_instances, seed),
        lyapunov_suite(size.lyapunov_instances, seed),
        zeno_law(size.zeno_instances, seed),
        error_bound(size.bound_instances, seed),
        headline_scaling(scaling),
        determinism(seed),
    ]
}
