//! Finite energy landscapes and their Boltzmann equilibrium data.
//!
//! States are explicit indices `0..d`. Energies are stored after a constant
//! shift that makes the minimum non-negative, so `E[σ] ≥ 0` holds for every
//! stored energy and `e_max` is measured on the shifted values.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyModel {
    energies: Vec<f64>,
    shift: f64,
    ground_set: Vec<usize>,
    gamma: f64,
    e_max: f64,
}

impl EnergyModel {
    /// Builds a model from energies given in state order.
    pub fn new(energies: Vec<f64>) -> Result<Self> {
        if energies.len() < 2 {
            return Err(Error::TooSmall(energies.len()));
        }
        if let Some(bad) = energies.iter().find(|e| !e.is_finite()) {
            return Err(Error::param("energies", format!("non-finite energy {bad}")));
        }
        let min = energies.iter().copied().fold(f64::INFINITY, f64::min);
        let shift = if min < 0.0 { -min } else { 0.0 };
        let energies: Vec<f64> = energies.into_iter().map(|e| e + shift).collect();
        let ground = min + shift;

        let ground_set: Vec<usize> = (0..energies.len())
            .filter(|&s| energies[s] == ground)
            .collect();
        let gamma = energies
            .iter()
            .filter(|&&e| e != ground)
            .map(|&e| e - ground)
            .fold(f64::INFINITY, f64::min);
        if !gamma.is_finite() {
            return Err(Error::AllDegenerate);
        }
        let e_max = energies.iter().map(|e| e.abs()).fold(0.0, f64::max);

        Ok(Self {
            energies,
            shift,
            ground_set,
            gamma,
            e_max,
        })
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn energy(&self, state: usize) -> f64 {
        self.energies[state]
    }

    /// Constant added to every input energy at construction.
    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn ground_set(&self) -> &[usize] {
        &self.ground_set
    }

    pub fn ground_energy(&self) -> f64 {
        self.energies[self.ground_set[0]]
    }

    pub fn is_ground(&self, state: usize) -> bool {
        self.energies[state] == self.ground_energy()
    }

    /// Smallest excitation above the ground energy.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `max_σ |E[σ]|` over the stored (shifted) energies.
    pub fn e_max(&self) -> f64 {
        self.e_max
    }

    pub fn boltzmann(&self, beta: f64) -> BoltzmannDist {
        assert!(beta >= 0.0, "inverse temperature must be non-negative");
        let e0 = self.ground_energy();
        let weights: Vec<f64> = self
            .energies
            .iter()
            .map(|&e| (-beta * (e - e0)).exp())
            .collect();
        let sum: f64 = weights.iter().sum();
        BoltzmannDist {
            beta,
            probabilities: weights.iter().map(|w| w / sum).collect(),
            log_partition: sum.ln() - beta * e0,
        }
    }

    /// Probability mass outside the ground set.
    pub fn excited_mass(&self, dist: &[f64]) -> f64 {
        dist.iter()
            .enumerate()
            .filter(|&(s, _)| !self.is_ground(s))
            .map(|(_, p)| p)
            .sum()
    }

    /// Parses the plain-text model format: first line `d`, then `d` lines of
    /// `index energy`. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());

        let (line, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing state count".into(),
        })?;
        let d: usize = header.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("state count `{header}` is not a positive integer"),
        })?;

        let mut energies: Vec<Option<f64>> = vec![None; d];
        for (line, body) in lines {
            let mut fields = body.split_whitespace();
            let (Some(idx), Some(energy), None) = (fields.next(), fields.next(), fields.next())
            else {
                return Err(Error::Parse {
                    line,
                    msg: "expected `index energy`".into(),
                });
            };
            let idx: usize = idx.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("bad state index `{idx}`"),
            })?;
            let energy: f64 = energy.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("bad energy `{energy}`"),
            })?;
            let slot = energies.get_mut(idx).ok_or(Error::Parse {
                line,
                msg: format!("state index {idx} out of range 0..{d}"),
            })?;
            if slot.replace(energy).is_some() {
                return Err(Error::Parse {
                    line,
                    msg: format!("state index {idx} listed twice"),
                });
            }
        }
        let energies = energies
            .into_iter()
            .enumerate()
            .map(|(i, e)| {
                e.ok_or(Error::Parse {
                    line: 0,
                    msg: format!("state {i} has no energy"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(energies)
    }

    /// Writes the model in the format read by [`EnergyModel::parse`]. The
    /// stored (shifted) energies are written.
    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.dim());
        for (i, e) in self.energies.iter().enumerate() {
            writeln!(out, "{i} {}", crate::fmt_f64(*e)).unwrap();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoltzmannDist {
    beta: f64,
    probabilities: Vec<f64>,
    log_partition: f64,
}

impl BoltzmannDist {
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// `Z = Σ exp(-β E[σ])`. Can underflow for large `β·E`; prefer
    /// [`BoltzmannDist::log_partition`].
    pub fn partition(&self) -> f64 {
        self.log_partition.exp()
    }

    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    /// Amplitudes `√π^σ` of the quantum Gibbs state.
    pub fn gibbs_amplitudes(&self) -> Vec<f64> {
        self.probabilities.iter().map(|p| p.sqrt()).collect()
    }
}
