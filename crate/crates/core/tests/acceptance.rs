//! Acceptance criteria, one line each. Runtime limits are part of the pass
//! condition.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use quantum_anneal::harness::config::ExperimentConfig;
use quantum_anneal::harness::validate::{
    backend_equivalence, completion_invariance, error_bound, headline_scaling, lyapunov_suite,
    pea_amplitude_law, spectral_correspondence, zeno_law, Check, SuiteSize,
};

const SEED: u64 = 20_260_101;

fn minutes(m: u64) -> Duration {
    Duration::from_secs(60 * m)
}

/// Runs the binary with `args` in `dir` and returns every output file's bytes.
fn cli_outputs(dir: &Path, args: &[&str]) -> Vec<(String, Vec<u8>)> {
    let out = dir.join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_qsa"))
        .current_dir(dir)
        .args(args)
        .arg("--out")
        .arg(&out)
        .output()
        .expect("binary runs");
    assert!(status.status.success(), "{args:?}: {}", String::from_utf8_lossy(&status.stderr));
    let mut files: Vec<_> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .filter(|(name, _)| name.ends_with(".csv"))
        .collect();
    files.sort();
    std::fs::remove_dir_all(&out).unwrap();
    files
}

fn determinism() -> Check {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("two.txt"), "2\n0 0\n1 1\n").unwrap();
    std::fs::write(p.join("two_level.cfg"), "family = two_level\nruns = 50\n").unwrap();
    std::fs::write(
        p.join("random.cfg"),
        "family = random_energies\nd = 6\ninstances = 4\nruns = 40\ngap_grid = 32\n",
    )
    .unwrap();
    std::fs::write(
        p.join("barrier.cfg"),
        "family = barrier_chain\nd = 8\nbarrier = 0, 0.2, 0.4\ngap_grid = 32\nruns = 5\n",
    )
    .unwrap();
    let invocations: [&[&str]; 8] = [
        &["spectrum", "two.txt", "--beta", "0,0.5,2"],
        &["sa", "two_level.cfg", "--seed", "7"],
        &["qsa", "two_level.cfg", "--seed", "7"],
        &["qsa", "random.cfg", "--seed", "11", "--mode", "deferred"],
        &["qsa", "two_level.cfg", "--seed", "11", "--backend", "dense", "--mode", "deferred"],
        &["sa", "random.cfg", "--seed", "3"],
        &["scaling", "barrier.cfg", "--seed", "5"],
        &["qsa", "barrier.cfg", "--seed", "5"],
    ];
    let mut files = 0;
    let mut mismatched = Vec::new();
    for args in invocations {
        let a = cli_outputs(p, args);
        let b = cli_outputs(p, args);
        files += a.len();
        if a != b || a.is_empty() {
            mismatched.push(args.join(" "));
        }
    }
    Check {
        id: 9,
        name: "determinism",
        passed: mismatched.is_empty(),
        detail: format!("{} invocations run twice, {files} CSV files compared, mismatches {mismatched:?}", invocations.len()),
        elapsed: start.elapsed(),
    }
}

fn main() -> ExitCode {
    let size = SuiteSize::full();
    let scaling = ExperimentConfig {
        seed: SEED,
        ..ExperimentConfig::default()
    };
    let criteria: Vec<(Box<dyn FnOnce() -> Check>, Duration)> = vec![
        (Box::new(move || spectral_correspondence(size.kernels, SEED)), minutes(2)),
        (Box::new(move || completion_invariance(size.completion_pairs, SEED)), minutes(2)),
        (Box::new(move || pea_amplitude_law(size.pea_triples, SEED)), Duration::from_secs(10)),
        (Box::new(move || backend_equivalence(size.backend_instances, SEED)), minutes(5)),
        (Box::new(move || lyapunov_suite(size.lyapunov_instances, SEED)), minutes(2)),
        (Box::new(move || zeno_law(size.zeno_instances, SEED)), minutes(5)),
        (Box::new(move || error_bound(size.bound_instances, SEED)), minutes(10)),
        (Box::new(move || headline_scaling(&scaling)), minutes(30)),
        (Box::new(determinism), minutes(2)),
    ];

    let mut failed = 0;
    for (run, limit) in criteria {
        let check = run();
        let in_time = check.elapsed <= limit;
        let passed = check.passed && in_time;
        failed += usize::from(!passed);
        println!(
            "criterion {} {}: {} | {} | {:.1}s of {}s allowed",
            check.id,
            if passed { "PASS" } else { "FAIL" },
            check.name,
            check.detail,
            check.elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    println!("acceptance: {} of 9 criteria passed", 9 - failed);
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
