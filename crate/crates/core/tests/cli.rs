use std::path::Path;
use std::process::{Command, Output};

fn qsa(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qsa"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn spectrum_of_the_two_state_model() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("two_level.txt"), "2\n0 0\n1 1\n").unwrap();
    let out = qsa(dir.path(), &["spectrum", "two_level.txt", "--out", "o"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report = stdout(&out);
    assert!(report.contains("delta = 0.7500000000"), "{report}");
    assert!(report.contains("0.2500000000"), "{report}");

    let csv = std::fs::read_to_string(dir.path().join("o/spectrum.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 2);
    assert!((rows[1][2] - 0.25).abs() < 1e-12);
    assert!((rows[1][3] - 0.25f64.acos()).abs() < 1e-12);
    assert!((rows[1][5] - 0.75).abs() < 1e-12);
}

#[test]
fn malformed_config_exits_2_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("epsilon = zero\n", "epsilon"),
        ("family = two_level\nruns = many\n", "runs"),
        ("family = spin_glass\n", "family"),
        ("temperature = 3\n", "temperature"),
        ("family two_level\n", "line 1"),
    ];
    for (text, field) in cases {
        std::fs::write(dir.path().join("bad.cfg"), text).unwrap();
        let out = qsa(dir.path(), &["qsa", "bad.cfg", "--out", "o"]);
        assert_eq!(out.status.code(), Some(2), "{text}");
        assert!(stderr(&out).contains(field), "{text}: {}", stderr(&out));
    }
}

#[test]
fn bad_flags_and_missing_files_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("ok.cfg"), "family = two_level\nruns = 2\n").unwrap();
    for args in [
        &["qsa", "ok.cfg", "--backend", "gpu"][..],
        &["sa", "ok.cfg", "--mode", "sometimes"],
        &["sa", "ok.cfg", "--epsilon", "2"],
        &["sa", "missing.cfg"],
        &["spectrum", "missing.txt"],
        &["frobnicate"],
    ] {
        let out = qsa(dir.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn invariant_failure_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    // A two-point barrier sweep cannot span two decades of gap.
    std::fs::write(
        dir.path().join("narrow.cfg"),
        "family = barrier_chain\nd = 6\nbarrier = 0, 0.1\ngap_grid = 16\n",
    )
    .unwrap();
    let out = qsa(dir.path(), &["validate", "--quick", "--config", "narrow.cfg", "--out", "o"]);
    assert_eq!(out.status.code(), Some(1), "{}", stdout(&out));
    assert!(stdout(&out).contains("[FAIL] 8."), "{}", stdout(&out));
}

#[test]
fn subcommands_write_their_csv_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("t.cfg"), "family = two_level\nlaziness_grid = 0.5, 0.75\nruns = 4\n").unwrap();
    for (cmd, files) in [
        ("sa", &["sa_runs.csv", "sa_trace_0.csv", "sa_trace_1.csv", "report.txt"][..]),
        ("qsa", &["qsa_runs.csv", "report.txt"]),
        ("scaling", &["scaling.csv", "report.txt"]),
    ] {
        let out = qsa(dir.path(), &[cmd, "t.cfg", "--seed", "3", "--out", cmd]);
        assert_eq!(out.status.code(), Some(0), "{cmd}: {}", stderr(&out));
        for f in files {
            let path = dir.path().join(cmd).join(f);
            assert!(path.exists(), "{cmd} did not write {f}");
        }
        let first = std::fs::read_to_string(dir.path().join(cmd).join(files[0])).unwrap();
        assert!(first.starts_with("# family = two_level"), "{first}");
    }
}
