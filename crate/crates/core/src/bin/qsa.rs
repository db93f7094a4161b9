use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use quantum_anneal::energy::EnergyModel;
use quantum_anneal::harness::config::ExperimentConfig;
use quantum_anneal::harness::experiment::{qsa_experiment, sa_experiment, scaling_output, Output};
use quantum_anneal::harness::families::{complete_proposal, ring_proposal};
use quantum_anneal::harness::validate::{run_suite, SuiteSize};
use quantum_anneal::markov::MetropolisChain;
use quantum_anneal::{fmt_f64, Error};

#[derive(Debug, Parser)]
#[command(name = "qsa", version, about = "Classical and quantum simulated annealing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Base seed; run `i` of a batch uses ChaCha8 stream `i`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    #[arg(long, global = true)]
    tau: Option<f64>,
    #[arg(long = "c-q", global = true)]
    c_q: Option<f64>,
    #[arg(long = "c-pea", global = true)]
    c_pea: Option<f64>,
    /// analytic or dense.
    #[arg(long, global = true)]
    backend: Option<String>,
    /// measure-each or deferred.
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Directory for CSV files and the report.
    #[arg(long, global = true, default_value = "qsa-out")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Kernel eigenvalues, walk phases and gaps for a model file.
    Spectrum {
        model: PathBuf,
        /// Comma-separated inverse temperatures.
        #[arg(long, value_delimiter = ',', default_value = "0.6931471805599453")]
        beta: Vec<f64>,
        #[arg(long, default_value_t = 0.5)]
        laziness: f64,
        #[arg(long, value_enum, default_value_t = Proposal::Complete)]
        proposal: Proposal,
    },
    /// Exact traces and sampled classical runs.
    Sa { config: PathBuf },
    /// Sampled quantum runs with exact all-zeros figures.
    Qsa { config: PathBuf },
    /// Classical versus quantum cost sweep with slope fits.
    Scaling { config: PathBuf },
    /// Runs the invariant suite.
    Validate {
        /// Smaller corpora.
        #[arg(long)]
        quick: bool,
        /// Config for the scaling check; defaults to the barrier sweep.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Proposal {
    Ring,
    Complete,
}

enum Failure {
    Config(String),
    Invariant(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. }
            | Error::Parse { .. }
            | Error::UnknownFamily(_)
            | Error::InvalidParameter { .. }
            | Error::InvalidProposal(_)
            | Error::TooSmall(_)
            | Error::AllDegenerate => Failure::Config(e.to_string()),
            _ => Failure::Invariant(e.to_string()),
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn load_config(cli: &Cli, path: Option<&Path>) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::parse(&read(p)?)?,
        None => ExperimentConfig::default(),
    };
    let overrides = [
        ("seed", cli.seed.map(|v| v.to_string())),
        ("epsilon", cli.epsilon.map(|v| v.to_string())),
        ("tau", cli.tau.map(|v| v.to_string())),
        ("c_q", cli.c_q.map(|v| v.to_string())),
        ("c_pea", cli.c_pea.map(|v| v.to_string())),
        ("backend", cli.backend.clone()),
        ("mode", cli.mode.clone()),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(out: &Output, dir: &Path) -> Result<(), Failure> {
    out.write_to(dir).map_err(|e| Failure::Invariant(e.to_string()))?;
    print!("{}", out.report);
    Ok(())
}

fn spectrum(model: &Path, betas: &[f64], laziness: f64, proposal: Proposal) -> Result<Output, Failure> {
    let model = EnergyModel::parse(&read(model)?)?;
    let d = model.dim();
    let p = match proposal {
        Proposal::Ring => ring_proposal(d),
        Proposal::Complete => complete_proposal(d),
    };
    let chain = MetropolisChain::new(model, p, laziness)?;
    let mut csv = String::from("beta,j,lambda,phi,walk_phase,delta\n");
    let mut report = String::new();
    for &beta in betas {
        let s = chain.spectrum(beta)?;
        writeln!(report, "beta = {beta}  delta = {:.10}", s.delta()).unwrap();
        writeln!(report, "{:>4} {:>16} {:>16} {:>16}", "j", "lambda", "phi", "2 phi").unwrap();
        for (j, (&l, &phi)) in s.lambdas().iter().zip(s.phis()).enumerate() {
            writeln!(report, "{j:>4} {l:>16.10} {phi:>16.10} {:>16.10}", 2.0 * phi).unwrap();
            writeln!(
                csv,
                "{},{j},{},{},{},{}",
                fmt_f64(beta),
                fmt_f64(l),
                fmt_f64(phi),
                fmt_f64(2.0 * phi),
                fmt_f64(s.delta())
            )
            .unwrap();
        }
        report.push('\n');
    }
    Ok(Output {
        files: vec![("spectrum.csv".to_string(), csv)],
        report,
        invariants_hold: true,
    })
}

fn run(cli: &Cli) -> Result<bool, Failure> {
    let out = match &cli.command {
        Command::Spectrum {
            model,
            beta,
            laziness,
            proposal,
        } => spectrum(model, beta, *laziness, *proposal)?,
        Command::Sa { config } => sa_experiment(&load_config(cli, Some(config))?)?,
        Command::Qsa { config } => qsa_experiment(&load_config(cli, Some(config))?)?,
        Command::Scaling { config } => scaling_output(&load_config(cli, Some(config))?)?,
        Command::Validate { quick, config } => {
            let mut scaling = load_config(cli, config.as_deref())?;
            if *quick && config.is_none() {
                scaling.barrier = (0..=8).map(|i| f64::from(i) / 10.0).collect();
            }
            let size = if *quick { SuiteSize::quick() } else { SuiteSize::full() };
            let checks = run_suite(size, scaling.seed, &scaling);
            let mut report = String::new();
            for c in &checks {
                writeln!(report, "{c}").unwrap();
            }
            let passed = checks.iter().all(|c| c.passed);
            emit(
                &Output {
                    files: Vec::new(),
                    report,
                    invariants_hold: passed,
                },
                &cli.out,
            )?;
            return Ok(passed);
        }
    };
    emit(&out, &cli.out)?;
    Ok(out.invariants_hold)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("invariant check failed");
            ExitCode::from(1)
        }
        Err(Failure::Invariant(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
    }
}
