use std::f64::consts::PI;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use quantum_anneal::anneal::{anneal_exact, sa_error_bound, sa_schedule, LYAPUNOV_LIMIT};
use quantum_anneal::energy::EnergyModel;
use quantum_anneal::harness::families::{complete_proposal, random_proposal};
use quantum_anneal::harness::fit::fit_log_log;
use quantum_anneal::markov::{spectrum_cross_check, MetropolisChain, TransitionKernel};
use quantum_anneal::pea::{choose_p, garbage_bound, inverse_qft, pea_amplitude, pea_amplitude_sum, qft};
use quantum_anneal::qsa::qsa_schedule;
use quantum_anneal::qwalk::{check_spectral_correspondence, Completion, WalkOperator};

/// Energies on a small integer grid so ground states and gaps are exact,
/// with at least one excited level.
fn energies(max_d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0u8..6, 2..=max_d)
        .prop_filter("not all degenerate", |v| v.iter().any(|&e| e != v[0]))
        .prop_map(|v| v.into_iter().map(|e| f64::from(e) * 0.5 - 1.0).collect())
}

fn complete_chain(energies: Vec<f64>) -> MetropolisChain {
    let model = EnergyModel::new(energies).unwrap();
    let d = model.dim();
    MetropolisChain::new(model, complete_proposal(d), 0.5).unwrap()
}

fn chain(energies: Vec<f64>, seed: u64, laziness: f64) -> MetropolisChain {
    let model = EnergyModel::new(energies).unwrap();
    let d = model.dim();
    let proposal = random_proposal(d, &mut ChaCha8Rng::seed_from_u64(seed));
    MetropolisChain::new(model, proposal, laziness).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ground_mass_grows_with_beta(e in energies(12), b1 in 0.0f64..20.0, db in 0.0f64..20.0) {
        let m = EnergyModel::new(e).unwrap();
        let lo = m.boltzmann(b1);
        let hi = m.boltzmann(b1 + db);
        for &s in m.ground_set() {
            prop_assert!(hi.probabilities()[s] >= lo.probabilities()[s] - 1e-15);
        }
    }

    #[test]
    fn gibbs_amplitudes_are_normalized(e in energies(64), beta in 0.0f64..100.0) {
        let amps = EnergyModel::new(e).unwrap().boltzmann(beta).gibbs_amplitudes();
        let norm: f64 = amps.iter().map(|a| a * a).sum();
        prop_assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn excited_tail_is_bounded(e in energies(32), beta in 0.0f64..50.0) {
        let m = EnergyModel::new(e).unwrap();
        let tail = m.excited_mass(m.boltzmann(beta).probabilities());
        prop_assert!(tail <= m.dim() as f64 * (-beta * m.gamma()).exp() + 1e-15);
    }

    #[test]
    fn kernels_are_reversible_and_stochastic(e in energies(16), seed: u64, beta in 0.0f64..5.0, laziness in 0.0f64..0.95) {
        let c = chain(e, seed, laziness);
        let k = c.kernel(beta).unwrap();
        let balance = k.detailed_balance(&c.model().boltzmann(beta));
        prop_assert!(balance.max_violation < 1e-12, "{balance:?}");
        for col in 0..k.dim() {
            let sum: f64 = k.matrix().column(col).iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(k.matrix().column(col).iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn kernel_and_symmetrized_spectra_agree(e in energies(32), seed: u64, beta in 0.0f64..3.0) {
        let c = chain(e, seed, 0.5);
        let k = c.kernel(beta).unwrap();
        let s = c.spectrum(beta).unwrap();
        prop_assert!(spectrum_cross_check(&k, &s) < 1e-9);
        prop_assert!(s.lambdas().iter().all(|&l| l >= -1e-12));
        prop_assert!((s.lambdas()[0] - 1.0).abs() < 1e-10);
        let gibbs = c.model().boltzmann(beta).gibbs_amplitudes();
        let v0 = s.eigvec(0);
        let sign = v0.iter().zip(&gibbs).map(|(a, b)| a * b).sum::<f64>().signum();
        for (a, b) in v0.iter().zip(&gibbs) {
            prop_assert!((sign * a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn walk_phases_double_kernel_angles(e in energies(7), seed: u64, beta in 0.0f64..3.0, completion_seed: u64) {
        let c = chain(e, seed, 0.5);
        let k = c.kernel(beta).unwrap();
        let s = c.spectrum(beta).unwrap();
        for completion in [Completion::Canonical, Completion::Seeded(completion_seed)] {
            let walk = WalkOperator::build(&k, completion).unwrap();
            let w = walk.dense();
            let gram = w.transpose() * w;
            for i in 0..gram.nrows() {
                for j in 0..gram.ncols() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((gram[(i, j)] - expect).abs() < 1e-10);
                }
            }
            let check = check_spectral_correspondence(&walk, &s);
            prop_assert!(check.worst() < 1e-8, "{check:?}");
        }
    }

    #[test]
    fn annealing_keeps_lyapunov_and_error_bounds(e in energies(10), eps in 0.05f64..0.3) {
        let c = complete_chain(e);
        let beta_target = quantum_anneal::anneal::target_beta(c.model(), eps);
        let delta = c.min_gap((0..=64).map(|i| beta_target * f64::from(i) / 64.0)).unwrap();
        // Shrink to the smallest gap met on the finer schedule grid.
        let schedule = sa_schedule(c.model(), delta, eps, 0.25).unwrap();
        let delta = delta.min(c.min_gap((0..=schedule.steps()).map(|k| schedule.beta(k))).unwrap());
        let schedule = sa_schedule(c.model(), delta, eps, 0.25).unwrap();
        let expected_steps = (schedule.target_beta() * c.model().e_max() / (0.25 * delta)).ceil() as usize;
        prop_assert_eq!(schedule.steps(), expected_steps);
        let trace = anneal_exact(c.model(), &schedule, |b| c.kernel(b)).unwrap();
        prop_assert!(trace.max_h_norm_sq() <= LYAPUNOV_LIMIT);
        for step in &trace.steps {
            prop_assert!((0.0..=1.0).contains(&step.error_mass));
        }
        prop_assert!(trace.final_error_mass() <= sa_error_bound(c.model(), schedule.beta_f()) + 1e-10);
    }

    #[test]
    fn pea_closed_form_matches_sum(phase in -PI..PI, p in 1u32..=10, m_frac in 0.0f64..1.0) {
        let m = ((m_frac * f64::from(1u32 << p)) as usize).min((1 << p) - 1);
        prop_assert!((pea_amplitude(phase, m, p) - pea_amplitude_sum(phase, m, p)).norm() < 1e-10);
    }

    #[test]
    fn pea_outcomes_are_complete(phase in -PI..PI, p in 1u32..=12) {
        let total: f64 = (0..1usize << p).map(|m| pea_amplitude(phase, m, p).norm_sqr()).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn garbage_amplitude_is_bounded(phi in 1e-6f64..=PI / 2.0, p in 1u32..=12) {
        prop_assert!(pea_amplitude(2.0 * phi, 0, p).norm() <= garbage_bound(2.0 * phi, p) * (1.0 + 1e-12));
    }

    #[test]
    fn qft_round_trips(re in prop::collection::vec(-1.0f64..1.0, 16), im in prop::collection::vec(-1.0f64..1.0, 16)) {
        let v: Vec<_> = re.iter().zip(&im).map(|(&a, &b)| num_complex::Complex64::new(a, b)).collect();
        let back = qft(&inverse_qft(&v));
        for (a, b) in back.iter().zip(&v) {
            prop_assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn register_is_the_smallest_admissible(nu in 1e-4f64..1.0, delta in 1e-6f64..1.0, c_pea in 0.1f64..10.0) {
        let cfg = choose_p(nu, delta, c_pea).unwrap();
        let target = c_pea / (nu * delta.sqrt());
        prop_assert!(f64::from(1u32 << cfg.p()) >= target);
        prop_assert!(cfg.p() == 1 || f64::from(1u32 << (cfg.p() - 1)) < target);
        prop_assert_eq!(cfg.walk_calls(), (1u64 << cfg.p()) - 1);
    }

    #[test]
    fn quantum_schedule_formulas(e in energies(16), delta in 1e-4f64..0.5, eps in 0.01f64..0.5) {
        let m = EnergyModel::new(e).unwrap();
        let s = qsa_schedule(&m, delta, eps, 1.0, 1.0).unwrap();
        let beta_f = (2.0 * m.dim() as f64 / (eps * eps)).ln() / m.gamma();
        prop_assert!((s.beta_f() - beta_f).abs() < 1e-12 * beta_f);
        prop_assert_eq!(s.q_steps(), ((beta_f * m.e_max()).powi(2) / eps).ceil() as usize);
        prop_assert!((s.nu() - s.delta_beta() * m.e_max()).abs() < 1e-15);
        prop_assert_eq!(s.walk_budget(), s.q_steps() as u64 * ((1u64 << s.pea().p()) - 1));
    }

    #[test]
    fn log_log_fit_recovers_power_laws(slope in -3.0f64..3.0, scale in 0.1f64..10.0) {
        let x: Vec<f64> = (0..8).map(|k| 10f64.powf(-0.5 * f64::from(k))).collect();
        let y: Vec<f64> = x.iter().map(|v| scale * v.powf(slope)).collect();
        let f = fit_log_log(&x, &y);
        prop_assert!((f.slope - slope).abs() < 1e-10);
        prop_assert!((f.intercept - scale.ln()).abs() < 1e-9);
    }
}

#[test]
fn uniform_kernel_is_a_rank_one_projector() {
    let d = 5;
    let model = EnergyModel::new(vec![0.0, 1.0, 1.0, 2.0, 3.0]).unwrap();
    let m = nalgebra::DMatrix::from_element(d, d, 1.0 / d as f64);
    let k = TransitionKernel::from_matrix(&model, 0.0, m.clone(), 0.0).unwrap();
    let chain = MetropolisChain::new(model, complete_proposal(d), 1.0 / d as f64).unwrap();
    assert!((chain.kernel(0.0).unwrap().matrix() - &m).amax() < 1e-15);
    let s = chain.spectrum(0.0).unwrap();
    assert!((s.delta() - 1.0).abs() < 1e-12);
    assert!(s.lambdas()[1..].iter().all(|l| l.abs() < 1e-12));
    assert!(spectrum_cross_check(&k, &s) < 1e-12);
}
