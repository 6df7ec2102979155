//! End-to-end checks of the command-line interface.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qrobust"))
}

fn tempdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("qrobust-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

#[test]
fn generate_solve_round_trip() {
    let dir = tempdir("gen");
    let file = dir.join("sel.qlp");
    let out = run(bin()
        .args(["generate", "--family", "sel", "--model", "qippu"])
        .args(["--n", "4", "--T", "1", "--N", "2", "--seed", "0"])
        .arg("--out")
        .arg(&file));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&file).unwrap();
    assert!(text.starts_with("\\ name: sel-n4-p2-T1-N2-s0-qippu"));

    let out = run(bin().args(["solve", "--oracle", "--in"]).arg(&file));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let log = stdout(&out);
    assert!(log.contains("status: OPTIMAL"), "{log}");
    assert!(log.contains("first-stage:"), "{log}");
    assert!(log.contains("oracle: agrees"), "{log}");
}

#[test]
fn generate_rejects_bad_selection_shape() {
    let dir = tempdir("shape");
    let out = run(bin()
        .args(["generate", "--family", "sel", "--model", "qippu"])
        .args(["--n", "5", "--p", "2", "--T", "1", "--N", "2"])
        .arg("--out")
        .arg(dir.join("bad.qlp")));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn identical_flags_write_identical_files() {
    let dir = tempdir("det");
    let a = dir.join("a.qlp");
    let b = dir.join("b.qlp");
    for file in [&a, &b] {
        let out = run(bin()
            .args(["generate", "--family", "kna", "--model", "qippu"])
            .args(["--n", "3", "--T", "2", "--seed", "7"])
            .arg("--out")
            .arg(file));
        assert!(out.status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn env_seed_is_the_default_and_flags_override() {
    let dir = tempdir("env");
    let via_env = dir.join("env.qlp");
    let via_flag = dir.join("flag.qlp");
    let out = run(bin()
        .env("QROBUST_SEED", "5")
        .args(["generate", "--family", "sel", "--model", "qip"])
        .args(["--n", "2", "--T", "1", "--N", "2"])
        .arg("--out")
        .arg(&via_env));
    assert!(out.status.success());
    let out = run(bin()
        .env("QROBUST_SEED", "99")
        .args(["generate", "--family", "sel", "--model", "qip"])
        .args(["--n", "2", "--T", "1", "--N", "2", "--seed", "5"])
        .arg("--out")
        .arg(&via_flag));
    assert!(out.status.success());
    assert_eq!(std::fs::read(&via_env).unwrap(), std::fs::read(&via_flag).unwrap());
}

#[test]
fn params_file_supplies_defaults() {
    let dir = tempdir("params");
    let params = dir.join("params.txt");
    std::fs::write(&params, "family = sel\nmodel = qippu\nn = 4\nT = 1\nN = 2\nseed = 3\n")
        .unwrap();
    let out_path = dir.join("from-file.qlp");
    let out = run(bin()
        .arg("generate")
        .arg("--params")
        .arg(&params)
        .arg("--out")
        .arg(&out_path));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let direct = dir.join("direct.qlp");
    let out = run(bin()
        .args(["generate", "--family", "sel", "--model", "qippu"])
        .args(["--n", "4", "--T", "1", "--N", "2", "--seed", "3"])
        .arg("--out")
        .arg(&direct));
    assert!(out.status.success());
    assert_eq!(std::fs::read(&out_path).unwrap(), std::fs::read(&direct).unwrap());
}

#[test]
fn flatten_reports_leaves_and_variables() {
    let dir = tempdir("flatten");
    let qip = dir.join("sel.qlp");
    let mip = dir.join("sel-dep.qlp");
    run(bin()
        .args(["generate", "--family", "sel", "--model", "qippu"])
        .args(["--n", "10", "--T", "2", "--N", "4", "--seed", "0"])
        .arg("--out")
        .arg(&qip));
    let out = run(bin().args(["flatten", "--in"]).arg(&qip).arg("--out").arg(&mip));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let log = stdout(&out);
    assert!(log.contains("leaves: 16"), "{log}");
    assert!(log.contains("variables: 211"), "{log}");

    // The flattened file solves to the same value as the quantified one.
    let a = stdout(&run(bin().args(["solve", "--in"]).arg(&qip)));
    let b = stdout(&run(bin().args(["solve", "--in"]).arg(&mip)));
    let value = |log: &str| {
        log.lines().find(|l| l.starts_with("value:")).map(|l| l.to_string())
    };
    assert_eq!(value(&a), value(&b));
}

#[test]
fn flatten_cap_exceeds_with_exit_three() {
    let dir = tempdir("cap");
    let qip = dir.join("sel.qlp");
    run(bin()
        .args(["generate", "--family", "sel", "--model", "qippu"])
        .args(["--n", "2", "--T", "2", "--N", "4", "--seed", "0"])
        .arg("--out")
        .arg(&qip));
    let out = run(bin()
        .args(["flatten", "--cap", "10", "--in"])
        .arg(&qip)
        .arg("--out")
        .arg(dir.join("never.qlp")));
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn solve_rejects_malformed_files_with_exit_two() {
    let dir = tempdir("badfile");
    let file = dir.join("broken.qlp");
    std::fs::write(&file, "MINIMIZE obj: x0 SUBJECT TO").unwrap();
    let out = run(bin().args(["solve", "--in"]).arg(&file));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn infeasible_instances_exit_zero() {
    let dir = tempdir("infeasible");
    let file = dir.join("infeasible.qlp");
    std::fs::write(
        &file,
        "MINIMIZE obj: x0\nSUBJECT TO\n c0: x0 <= 0\n c1: x0 >= 1\nBOUNDS\n 0 <= x0 <= 1\nGENERALS\n x0\nORDER\n E x0\nEND\n",
    )
    .unwrap();
    let out = run(bin().args(["solve", "--in"]).arg(&file));
    assert!(out.status.success());
    assert!(stdout(&out).contains("INFEASIBLE"));
}

#[test]
fn bench_and_profile_pipeline() {
    let dir = tempdir("bench");
    let grid = dir.join("grid.txt");
    std::fs::write(
        &grid,
        "time_limit_ms = 30000\n\
         selection items=4 periods=1 scenarios=2 seeds=0..4 models=qippu,qip,dep\n",
    )
    .unwrap();
    let records = dir.join("records.csv");
    let out = run(bin().args(["bench", "--grid"]).arg(&grid).arg("--out").arg(&records));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&records).unwrap();
    assert_eq!(text.lines().count(), 1 + 15); // header + 5 seeds × 3 models

    let profile_csv = dir.join("profile.csv");
    let profile_svg = dir.join("profile.svg");
    let out = run(bin()
        .args(["profile", "--in"])
        .arg(&records)
        .arg("--out-csv")
        .arg(&profile_csv)
        .arg("--out-svg")
        .arg(&profile_svg));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let svg = std::fs::read_to_string(&profile_svg).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 3);
    let csv = std::fs::read_to_string(&profile_csv).unwrap();
    assert!(csv.starts_with("tau,"));
}

#[test]
fn profile_rejects_mismatched_instance_sets() {
    let dir = tempdir("mismatch");
    let records = dir.join("records.csv");
    std::fs::write(
        &records,
        "instance_id,family,n,p,T,N,B,U,model,solver,status,value,time_ms,nodes\n\
         a,selection,,,,,,,qippu,A,optimal,1,1000,5\n\
         b,selection,,,,,,,qippu,A,optimal,1,1000,5\n\
         a,selection,,,,,,,qip,B,optimal,1,1000,5\n",
    )
    .unwrap();
    let out = run(bin().args(["profile", "--in"]).arg(&records));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_flags_exit_two() {
    let out = run(bin().args(["solve", "--does-not-exist", "x"]));
    assert_eq!(out.status.code(), Some(2));
}
