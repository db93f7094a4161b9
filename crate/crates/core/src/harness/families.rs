//! Instance families with tunable spectral gap, and random corpora.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::markov::MetropolisChain;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    TwoLevel,
    BarrierChain,
    RandomEnergies,
    IsingRing,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::TwoLevel => "two_level",
            Family::BarrierChain => "barrier_chain",
            Family::RandomEnergies => "random_energies",
            Family::IsingRing => "ising_ring",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_level" => Ok(Family::TwoLevel),
            "barrier_chain" => Ok(Family::BarrierChain),
            "random_energies" => Ok(Family::RandomEnergies),
            "ising_ring" => Ok(Family::IsingRing),
            other => Err(Error::UnknownFamily(other.to_string())),
        }
    }
}

/// One member of a family: a Metropolis chain and the grid value that
/// produced it.
#[derive(Debug, Clone)]
pub struct Instance {
    pub id: usize,
    pub parameter: f64,
    pub chain: MetropolisChain,
}

/// Nearest-neighbour moves on a ring of `d` states.
pub fn ring_proposal(d: usize) -> DMatrix<f64> {
    assert!(d >= 2, "a ring needs two states");
    let mut p = DMatrix::zeros(d, d);
    for s in 0..d {
        p[((s + 1) % d, s)] += 0.5;
        p[((s + d - 1) % d, s)] += 0.5;
    }
    p
}

/// Uniform moves to every other state.
pub fn complete_proposal(d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |r, c| if r == c { 0.0 } else { 1.0 / (d - 1) as f64 })
}

/// Single-spin flips on `n` spins; state bits are spin values.
pub fn single_flip_proposal(n: u32) -> DMatrix<f64> {
    let d = 1usize << n;
    let mut p = DMatrix::zeros(d, d);
    for s in 0..d {
        for i in 0..n {
            p[(s ^ (1 << i), s)] = 1.0 / n as f64;
        }
    }
    p
}

/// Symmetrized random mixture of fixed-point-free permutations: symmetric,
/// doubly stochastic, zero diagonal. The first permutation is a single
/// `d`-cycle, so the proposal is irreducible.
pub fn random_proposal(d: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    assert!(d >= 2, "need two states");
    let terms = rng.random_range(1..=d.min(4));
    let weights: Vec<f64> = (0..terms).map(|_| rng.random::<f64>() + 0.1).collect();
    let total: f64 = weights.iter().sum();
    let mut w = DMatrix::zeros(d, d);
    let mut order: Vec<usize> = (0..d).collect();
    order.shuffle(rng);
    for (i, &from) in order.iter().enumerate() {
        w[(order[(i + 1) % d], from)] += weights[0] / total;
    }
    let mut perm: Vec<usize> = (0..d).collect();
    for weight in &weights[1..] {
        loop {
            perm.shuffle(rng);
            if perm.iter().enumerate().all(|(i, &p)| i != p) {
                break;
            }
        }
        for (from, &to) in perm.iter().enumerate() {
            w[(to, from)] += weight / total;
        }
    }
    (&w + w.transpose()) * 0.5
}

/// Random energies on a grid of `levels` values in `[0, 1]`, with state 0
/// forced to the bottom and some state forced to the top.
pub fn random_levels(d: usize, levels: u32, rng: &mut impl Rng) -> Vec<f64> {
    assert!(levels >= 2, "need two levels");
    let step = 1.0 / f64::from(levels - 1);
    let mut e: Vec<f64> = (0..d).map(|_| f64::from(rng.random_range(0..levels)) * step).collect();
    e[0] = 0.0;
    let top = rng.random_range(1..d);
    e[top] = 1.0;
    e
}

pub fn two_level(laziness: f64) -> Result<MetropolisChain> {
    let model = EnergyModel::new(vec![0.0, 1.0])?;
    MetropolisChain::new(model, ring_proposal(2), laziness)
}

/// Ring of `d` states (even, ≥ 6) with the ground state at 0 and a second
/// well of depth `well` at `d/2`. The arc through `1..d/2` sits at
/// `well + barrier`, the other arc at `well + cap`. With `cap ≥ barrier`
/// the energy scale and gap stay fixed while the barrier varies.
pub fn barrier_chain(
    d: usize,
    barrier: f64,
    well: f64,
    cap: f64,
    laziness: f64,
) -> Result<MetropolisChain> {
    if d < 6 || !d.is_multiple_of(2) {
        return Err(Error::param("d", format!("barrier_chain needs an even d ≥ 6, got {d}")));
    }
    if !(well > 0.0) || barrier < 0.0 || cap < barrier {
        return Err(Error::param(
            "barrier",
            format!("need well > 0 and 0 ≤ barrier ≤ cap (well {well}, barrier {barrier}, cap {cap})"),
        ));
    }
    let half = d / 2;
    let energies = (0..d)
        .map(|s| match s {
            0 => 0.0,
            s if s == half => well,
            s if s < half => well + barrier,
            _ => well + cap,
        })
        .collect();
    MetropolisChain::new(EnergyModel::new(energies)?, ring_proposal(d), laziness)
}

/// `E(s) = -J Σ s_i s_{i+1} - h Σ s_i` on a periodic ring of `n` spins,
/// with spin `i` up when bit `i` of the state is set.
pub fn ising_energies(n: u32, coupling: f64, field: f64) -> Vec<f64> {
    let spin = |s: usize, i: u32| if s >> i & 1 == 1 { 1.0 } else { -1.0 };
    (0..1usize << n)
        .map(|s| {
            let bonds: f64 = (0..n).map(|i| spin(s, i) * spin(s, (i + 1) % n)).sum();
            let mag: f64 = (0..n).map(|i| spin(s, i)).sum();
            -coupling * bonds - field * mag
        })
        .collect()
}

pub fn ising_ring(n: u32, coupling: f64, field: f64, laziness: f64) -> Result<MetropolisChain> {
    if !(2..=12).contains(&n) {
        return Err(Error::param("spins", format!("{n} is outside 2..=12")));
    }
    let model = EnergyModel::new(ising_energies(n, coupling, field))?;
    MetropolisChain::new(model, single_flip_proposal(n), laziness)
}

pub fn random_energies(d: usize, levels: u32, laziness: f64, rng: &mut impl Rng) -> Result<MetropolisChain> {
    let model = EnergyModel::new(random_levels(d, levels, rng))?;
    MetropolisChain::new(model, complete_proposal(d), laziness)
}

/// A random lazy chain for property corpora: random energies on a grid
/// and a random sparse symmetric proposal.
pub fn random_chain(d: usize, laziness: f64, rng: &mut impl Rng) -> Result<MetropolisChain> {
    let levels = rng.random_range(2..=6);
    let model = EnergyModel::new(random_levels(d, levels, rng))?;
    MetropolisChain::new(model, random_proposal(d, rng), laziness)
}

/// Like [`random_chain`] but mixed half-and-half with the complete graph so
/// every state reaches the ground state in one move.
pub fn random_well_connected_chain(d: usize, laziness: f64, rng: &mut impl Rng) -> Result<MetropolisChain> {
    let levels = rng.random_range(2..=5);
    let model = EnergyModel::new(random_levels(d, levels, rng))?;
    let p = (random_proposal(d, rng) + complete_proposal(d)) * 0.5;
    MetropolisChain::new(model, p, laziness)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anneal::run_rng;
    use nalgebra::SymmetricEigen;
    use std::f64::consts::PI;

    fn assert_proposal(p: &DMatrix<f64>) {
        let d = p.nrows();
        for c in 0..d {
            assert_eq!(p[(c, c)], 0.0);
            assert!((p.column(c).sum() - 1.0).abs() < 1e-12);
            for r in 0..d {
                assert!((p[(r, c)] - p[(c, r)]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn proposals_are_valid() {
        let mut rng = run_rng(1, 0);
        for d in 2..12 {
            assert_proposal(&random_proposal(d, &mut rng));
            assert_proposal(&complete_proposal(d));
            assert_proposal(&ring_proposal(d.max(3)));
        }
        assert_proposal(&single_flip_proposal(4));
    }

    #[test]
    fn random_proposals_are_irreducible() {
        let mut rng = run_rng(2, 0);
        for d in 2..12 {
            let p = random_proposal(d, &mut rng);
            let mut seen = vec![false; d];
            let mut stack = vec![0];
            seen[0] = true;
            while let Some(s) = stack.pop() {
                for t in 0..d {
                    if p[(t, s)] > 0.0 && !seen[t] {
                        seen[t] = true;
                        stack.push(t);
                    }
                }
            }
            assert!(seen.iter().all(|&x| x), "d = {d}");
        }
    }

    #[test]
    fn family_names_round_trip() {
        for f in [Family::TwoLevel, Family::BarrierChain, Family::RandomEnergies, Family::IsingRing] {
            assert_eq!(f.name().parse::<Family>().unwrap(), f);
        }
        assert!(matches!("spin_glass".parse::<Family>(), Err(Error::UnknownFamily(_))));
    }

    #[test]
    fn two_level_gap_is_closed_form() {
        // λ₁ of the lazy two-state chain: 1 − (1−α)(1 + e^{−β})
        for alpha in [0.5, 0.7, 0.9] {
            let chain = two_level(alpha).unwrap();
            for beta in [0.0f64, 1.0, 4.0] {
                let want = (1.0 - alpha) * (1.0 + (-beta).exp());
                assert!((chain.spectrum(beta).unwrap().delta() - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn barrier_chain_at_infinite_temperature_is_a_lazy_ring() {
        for d in [6, 10, 16] {
            let chain = barrier_chain(d, 0.0, 1.0, 1.0, 0.5).unwrap();
            let want = 0.5 * (1.0 - (2.0 * PI / d as f64).cos());
            assert!((chain.spectrum(0.0).unwrap().delta() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn barrier_raises_shrink_the_gap() {
        let beta = 8.0;
        let gaps: Vec<f64> = [0.0, 0.5, 1.0]
            .iter()
            .map(|&b| barrier_chain(16, b, 1.0, 1.5, 0.5).unwrap().spectrum(beta).unwrap().delta())
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
        let m = barrier_chain(16, 0.7, 1.0, 1.5, 0.5).unwrap();
        assert_eq!(m.model().e_max(), 2.5);
        assert_eq!(m.model().gamma(), 1.0);
    }

    #[test]
    fn ising_ring_infinite_temperature_gap() {
        let chain = ising_ring(3, 1.0, 0.1, 0.5).unwrap();
        let spectrum = chain.spectrum(0.0).unwrap();
        assert!((spectrum.delta() - 0.5 * 2.0 / 3.0).abs() < 1e-12);
        let k = chain.kernel(0.0).unwrap();
        let brute = SymmetricEigen::new(k.matrix().clone());
        let mut ev: Vec<f64> = brute.eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in ev.iter().zip(spectrum.lambdas()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ising_energies_small_case() {
        let e = ising_energies(2, 1.0, 0.0);
        // two bonds on a 2-ring: aligned −2, anti-aligned +2
        assert_eq!(e, vec![-2.0, 2.0, 2.0, -2.0]);
    }
}
