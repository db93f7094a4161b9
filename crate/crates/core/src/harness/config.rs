//! Flat `key = value` experiment configuration.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::anneal::DEFAULT_TAU;
use crate::error::{Error, Result};
use crate::qsa::{Backend, Mode, DEFAULT_C_PEA, DEFAULT_C_Q};
use crate::qwalk::Completion;

use super::families::Family;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendChoice {
    Analytic,
    Dense,
}

impl BackendChoice {
    pub fn name(self) -> &'static str {
        match self {
            BackendChoice::Analytic => "analytic",
            BackendChoice::Dense => "dense",
        }
    }

    /// Dense runs use the canonical completion.
    pub fn backend(self) -> Backend {
        match self {
            BackendChoice::Analytic => Backend::Analytic,
            BackendChoice::Dense => Backend::Dense(Completion::Canonical),
        }
    }
}

impl FromStr for BackendChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "analytic" => Ok(BackendChoice::Analytic),
            "dense" => Ok(BackendChoice::Dense),
            _ => Err(format!("`{s}` is not one of analytic, dense")),
        }
    }
}

pub fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::MeasureEach => "measure-each",
        Mode::Deferred => "deferred",
    }
}

pub fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    match s {
        "measure-each" => Ok(Mode::MeasureEach),
        "deferred" => Ok(Mode::Deferred),
        _ => Err(format!("`{s}` is not one of measure-each, deferred")),
    }
}

/// Everything an experiment depends on. Together with the code version it
/// fixes every output byte.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub family: Family,
    /// State count for `barrier_chain` and `random_energies`.
    pub d: usize,
    /// Spin count for `ising_ring`.
    pub spins: u32,
    /// Barrier heights swept by `barrier_chain`.
    pub barrier: Vec<f64>,
    pub well: f64,
    pub cap: f64,
    /// Laziness values swept by `two_level`.
    pub laziness_grid: Vec<f64>,
    /// Laziness of every other family.
    pub laziness: f64,
    /// Couplings swept by `ising_ring`.
    pub coupling: Vec<f64>,
    pub field: f64,
    /// Number of `random_energies` instances.
    pub instances: usize,
    pub levels: u32,
    /// Points of the `β` grid used to locate the minimum gap.
    pub gap_grid: usize,
    pub epsilon: f64,
    pub tau: f64,
    pub c_q: f64,
    pub c_pea: f64,
    pub runs: usize,
    pub seed: u64,
    pub backend: BackendChoice,
    pub mode: Mode,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            family: Family::BarrierChain,
            d: 16,
            spins: 4,
            barrier: (0..=20).map(|i| f64::from(i) / 20.0).collect(),
            well: 1.0,
            cap: 1.5,
            laziness_grid: vec![0.5, 0.75, 0.875, 0.9375, 0.96875],
            laziness: 0.5,
            coupling: vec![0.25, 0.5, 1.0],
            field: 0.1,
            instances: 10,
            levels: 4,
            gap_grid: 128,
            epsilon: 0.1,
            tau: DEFAULT_TAU,
            c_q: DEFAULT_C_Q,
            c_pea: DEFAULT_C_PEA,
            runs: 100,
            seed: 1,
            backend: BackendChoice::Analytic,
            mode: Mode::MeasureEach,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    let list = value
        .split(',')
        .map(|v| parse_value(key, v.trim()))
        .collect::<Result<Vec<f64>>>()?;
    if list.is_empty() {
        return Err(Error::config(key, "empty list"));
    }
    Ok(list)
}

fn join(list: &[f64]) -> String {
    list.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::config(format!("line {}", n + 1), "expected `key = value`"));
            };
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Assigns one field from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "family" => self.family = value.parse().map_err(|e: Error| Error::config(key, e.to_string()))?,
            "d" => self.d = parse_value(key, value)?,
            "spins" => self.spins = parse_value(key, value)?,
            "barrier" => self.barrier = parse_list(key, value)?,
            "well" => self.well = parse_value(key, value)?,
            "cap" => self.cap = parse_value(key, value)?,
            "laziness_grid" => self.laziness_grid = parse_list(key, value)?,
            "laziness" => self.laziness = parse_value(key, value)?,
            "coupling" => self.coupling = parse_list(key, value)?,
            "field" => self.field = parse_value(key, value)?,
            "instances" => self.instances = parse_value(key, value)?,
            "levels" => self.levels = parse_value(key, value)?,
            "gap_grid" => self.gap_grid = parse_value(key, value)?,
            "epsilon" => self.epsilon = parse_value(key, value)?,
            "tau" => self.tau = parse_value(key, value)?,
            "c_q" => self.c_q = parse_value(key, value)?,
            "c_pea" => self.c_pea = parse_value(key, value)?,
            "runs" => self.runs = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "backend" => self.backend = value.parse().map_err(|e: String| Error::config(key, e))?,
            "mode" => self.mode = parse_mode(value).map_err(|e| Error::config(key, e))?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Range checks that do not need a model.
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, field: &str, msg: &str| {
            if ok { Ok(()) } else { Err(Error::config(field, msg)) }
        };
        check(self.d >= 2, "d", "must be at least 2")?;
        check((2..=12).contains(&self.spins), "spins", "must be in 2..=12")?;
        check(self.epsilon > 0.0 && self.epsilon < 1.0, "epsilon", "must be in (0, 1)")?;
        check(self.tau > 0.0, "tau", "must be positive")?;
        check(self.c_q > 0.0, "c_q", "must be positive")?;
        check(self.c_pea > 0.0, "c_pea", "must be positive")?;
        check(self.gap_grid >= 1, "gap_grid", "must be positive")?;
        check((0.0..1.0).contains(&self.laziness), "laziness", "must be in [0, 1)")?;
        check(
            self.laziness_grid.iter().all(|a| (0.0..1.0).contains(a)),
            "laziness_grid",
            "every value must be in [0, 1)",
        )?;
        check(self.well > 0.0, "well", "must be positive")?;
        check(
            self.barrier.iter().all(|&b| b >= 0.0 && b <= self.cap),
            "barrier",
            "every value must be in [0, cap]",
        )?;
        check(self.levels >= 2, "levels", "must be at least 2")?;
        check(self.instances >= 1, "instances", "must be at least 1")?;
        Ok(())
    }

    /// Every field in canonical `key = value` form, prefixed by `prefix`.
    pub fn header(&self, prefix: &str) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| writeln!(out, "{prefix}{k} = {v}").unwrap();
        line("family", self.family.to_string());
        line("d", self.d.to_string());
        line("spins", self.spins.to_string());
        line("barrier", join(&self.barrier));
        line("well", self.well.to_string());
        line("cap", self.cap.to_string());
        line("laziness_grid", join(&self.laziness_grid));
        line("laziness", self.laziness.to_string());
        line("coupling", join(&self.coupling));
        line("field", self.field.to_string());
        line("instances", self.instances.to_string());
        line("levels", self.levels.to_string());
        line("gap_grid", self.gap_grid.to_string());
        line("epsilon", self.epsilon.to_string());
        line("tau", self.tau.to_string());
        line("c_q", self.c_q.to_string());
        line("c_pea", self.c_pea.to_string());
        line("runs", self.runs.to_string());
        line("seed", self.seed.to_string());
        line("backend", self.backend.name().to_string());
        line("mode", mode_name(self.mode).to_string());
        out
    }
}
