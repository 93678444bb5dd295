use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gfrk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gfrk"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const MMS: &str = "model = cahn_hilliard\nnx = 16\ndt = 0.1\nt_end = 0.2\nforcing = mms\n";

#[test]
fn tableau_check_reports_both_builtins() {
    let out = gfrk(&["tableau", "check", "gauss4"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("algebraically stable: true"));
    assert!(text.contains("order 4 conditions: true"));
    let out = gfrk(&["tableau", "check", "dirk4"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("diagonal positive: true"), "{text}");
}

#[test]
fn tableau_check_of_unknown_name_is_a_config_error() {
    assert_eq!(gfrk(&["tableau", "check", "no-such-tableau"]).status.code(), Some(2));
}

#[test]
fn print_config_echo_is_a_fixed_point() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.conf", MMS);
    let first = gfrk(&["print-config", &a]);
    assert!(first.status.success());
    let b = write(dir.path(), "b.conf", &String::from_utf8_lossy(&first.stdout));
    let second = gfrk(&["print-config", &b]);
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn bad_config_exits_with_two_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "bad.conf", &MMS.replace("dt = 0.1", "dt = -0.1"));
    let out = gfrk(&["run", &p]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("dt") && err.contains("positive"), "{err}");
}

#[test]
fn run_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("s.csv");
    let p = write(
        dir.path(),
        "ok.conf",
        &format!("{MMS}series_path = {}\n", series.display()),
    );
    assert_eq!(gfrk(&["run", &p]).status.code(), Some(0));
    assert!(fs::read_to_string(series).unwrap().starts_with("t,energy"));
}

#[test]
fn solver_failure_exits_with_three() {
    // A one-iteration Krylov budget cannot reach an unattainable tolerance.
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "fail.conf",
        "model = cahn_hilliard\nnx = 16\ndt = 0.5\nt_end = 1\nlambda = 1\nepsilon = 0.2\n\
         initial = random(0.5, 3)\nkrylov_rel_tol = 1e-16\nkrylov_max_iters = 1\n",
    );
    let out = gfrk(&["run", &p]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn refine_threshold_failure_exits_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "mms.conf", MMS);
    let dts = "--dts=0.1,0.05,0.025";
    let out = gfrk(&["refine", &p, dts, "--expect-order", "9"]);
    assert_eq!(out.status.code(), Some(4));
    let out = gfrk(&["refine", &p, dts, "--expect-order", "4", "--tol", "0.5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn coarsen_takes_a_comma_separated_window() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "mbe.conf",
        "model = mbe\nnx = 16\ndt = 0.05\nt_end = 1\nepsilon_sq = 0.1\ninitial = sine_combo\n",
    );
    let out = gfrk(&["coarsen", &p, "--window", "0.2,1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("energy slope"));
    assert_eq!(gfrk(&["coarsen", &p, "--window", "0.2"]).status.code(), Some(2));
}
