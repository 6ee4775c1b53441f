use std::path::Path;
use std::process::{Command, Output};

use starmm::harness::RISK_CSV_HEADER;
use starmm::io;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_starmm"))
        .args(args)
        .output()
        .expect("spawn starmm")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn constants_line() {
    let o = run(&["constants"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        stdout(&o).trim(),
        "cM=0.098306 CM=0.125 CprimeM=0.25 kappaM=0.03125"
    );
}

#[test]
fn rate_scale_for_q3() {
    let o = run(&["rate", "--set", "monotone", "--q", "3", "--n", "64"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some("predicted_scale=16"));
    assert!(text.contains("entropy_source=analytic"));
}

#[test]
fn missing_config_is_exit_2() {
    let o = run(&["simulate", "definitely-missing.cfg"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("ERROR E_CONFIG"), "{}", stderr(&o));
}

#[test]
fn usage_errors_are_exit_2() {
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(run(&["verify", "--suite", "bogus"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn bad_config_key_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("x.cfg");
    std::fs::write(&cfg, "n = 16\nwat = 3\n").unwrap();
    let o = run(&["simulate", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("E_CONFIG"));
}

#[test]
fn tree_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tree.txt");
    let o = run(&[
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
        "tree",
        "--set",
        "segment",
        "--n",
        "2",
        "--jmax",
        "4",
        "--resolution",
        "0.01",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let tree = io::read_tree(&out).unwrap();
    assert_eq!(io::format_tree(&tree), text);
    let meta = std::fs::read_to_string(dir.path().join("tree.txt.meta")).unwrap();
    assert!(meta.contains("verify"));
    assert!(stderr(&o).contains("offspring-cardinality"));
}

#[test]
fn estimate_writes_point_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let y = dir.path().join("y.csv");
    std::fs::write(&y, "1,0,1,1\n").unwrap();
    let out = dir.path().join("theta.csv");
    let o = run(&[
        "--seed",
        "1",
        "--out",
        out.to_str().unwrap(),
        "estimate",
        "--set",
        "monotone",
        "--n",
        "4",
        "--y",
        y.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let theta = io::read_vector(&out).unwrap();
    assert_eq!(theta.len(), 4);
    assert!(theta.iter().all(|t| t.abs() <= 1.0));
    assert!(theta.windows(2).all(|w| w[0] <= w[1] + 1e-12), "{theta:?}");
    let mut trace = out.clone().into_os_string();
    trace.push(".trace");
    assert!(std::fs::read_to_string(Path::new(&trace))
        .unwrap()
        .starts_with("# step"));
}

#[test]
fn simulate_prints_risk_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.cfg");
    std::fs::write(
        &cfg,
        "set = segment\nsegment_resolution = 0.05\nn = 2,4\ntruth = random\nreplicates = 3\nbudget = 100\n",
    )
    .unwrap();
    let o = run(&["--seed", "9", "simulate", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some(RISK_CSV_HEADER));
    assert_eq!(text.lines().count(), 3);
}
