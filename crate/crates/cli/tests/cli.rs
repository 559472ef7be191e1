use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn zrlab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zrlab")).args(args).current_dir(dir).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_QV: &str = "[qv]\nn = 8\nsites = 256\nt_end = 0.01\ntrajectories = 100\nn_grid = [8, 16]\n";

#[test]
fn oracle_defaults_pass_and_write_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = zrlab(&["oracle", "--out", "out", "--quiet"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("out/report.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["passed"], true);
    let identities = v["reports"].as_array().unwrap().iter().find(|r| r["name"] == "generator_identities").unwrap();
    let gap = identities["gates"].as_array().unwrap().iter().find(|g| g["name"] == "identity_gap").unwrap();
    assert!(gap["value"].as_f64().unwrap() < 1e-9);
    assert!(dir.path().join("out/config-echo.txt").exists());
    assert!(dir.path().join("out/stationarity_grid.csv").exists());
}

#[test]
fn unknown_key_exits_two_naming_key_and_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "[qv]\nn = 8\nrhoo = 0.5\n").unwrap();
    let o = zrlab(&["qv", "--config", "c.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("rhoo") && e.contains("line 3"), "{e}");
    assert!(!dir.path().join("zrlab-out").exists());
}

#[test]
fn unknown_section_and_invalid_values_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.toml"), "[qvv]\nn = 8\n").unwrap();
    let o = zrlab(&["qv", "--config", "a.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("qvv"));
    fs::write(dir.path().join("b.toml"), "[bg2]\ntrajectories = 5\n").unwrap();
    let o = zrlab(&["bg2", "--config", "b.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("[bg2]") && stderr(&o).contains("trajectories"), "{}", stderr(&o));
    let o = zrlab(&["frobnicate"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn help_lists_subcommands_and_keys_with_units() {
    let dir = tempfile::tempdir().unwrap();
    let o = zrlab(&["--help"], dir.path());
    let text = String::from_utf8_lossy(&o.stdout);
    for sub in ["oracle", "sample", "simulate", "qv", "bg2", "ec", "static-var", "qtasep", "all"] {
        assert!(text.contains(sub), "missing {sub}");
    }
    for (key, unit) in zrlab::experiments::CONFIG_KEYS {
        assert!(text.contains(key) && text.contains(unit), "missing {key}");
    }
}

#[test]
fn reports_are_reproducible_across_runs_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), SMALL_QV).unwrap();
    let run = |out: &str, workers: &str| {
        let o = zrlab(&["qv", "--config", "c.toml", "--seed", "7", "--workers", workers, "--out", out, "--quiet"], dir.path());
        assert!(matches!(o.status.code(), Some(0 | 1)), "{}", stderr(&o));
        fs::read(dir.path().join(out).join("report.json")).unwrap()
    };
    let a = run("a", "1");
    assert_eq!(a, run("b", "1"));
    assert_eq!(a, run("c", "3"));
    assert_ne!(a, {
        let o = zrlab(&["qv", "--config", "c.toml", "--seed", "8", "--out", "d", "--quiet"], dir.path());
        assert!(o.status.code().is_some());
        fs::read(dir.path().join("d/report.json")).unwrap()
    });
}

#[test]
fn config_echo_reads_back_as_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), SMALL_QV).unwrap();
    let o = zrlab(&["qv", "--config", "c.toml", "--out", "a", "--quiet"], dir.path());
    assert!(o.status.code().is_some());
    let echo = fs::read_to_string(dir.path().join("a/config-echo.txt")).unwrap();
    assert!(echo.contains("t_end = 0.01 # horizon T (macroscopic time"));
    fs::copy(dir.path().join("a/config-echo.txt"), dir.path().join("echo.toml")).unwrap();
    let o = zrlab(&["qv", "--config", "echo.toml", "--out", "b", "--quiet"], dir.path());
    assert!(o.status.code().is_some());
    assert_eq!(fs::read(dir.path().join("a/report.json")).unwrap(), fs::read(dir.path().join("b/report.json")).unwrap());
}

#[test]
fn simulate_dumps_series() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "[simulate]\nn = 8\nt_end = 0.01\ncheckpoints = 4\nell_grid = [2]\n").unwrap();
    let o = zrlab(&["simulate", "--config", "c.toml", "--out", "s", "--quiet"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let field = fs::read_to_string(dir.path().join("s/series_field.csv")).unwrap();
    assert!(field.starts_with("t,value\n0,"));
    assert_eq!(field.lines().count(), 6);
    assert!(!field.contains('\r'));
    for name in ["drift", "qv", "modified", "q_l2"] {
        assert!(dir.path().join(format!("s/series_{name}.csv")).exists(), "{name}");
    }
    let leftovers: Vec<_> = fs::read_dir(dir.path().join("s"))
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with('.'))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn sample_writes_marginal() {
    let dir = tempfile::tempdir().unwrap();
    let o = zrlab(&["sample", "--out", "m", "--quiet"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(fs::read_to_string(dir.path().join("m/marginal.csv")).unwrap().lines().count() > 2);
    assert!(dir.path().join("m/measure_fugacity.csv").exists());
}
