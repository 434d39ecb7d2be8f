//! Runs the binary end to end.

use std::process::{Command, Output};

use stokes_qopr::experiments::CSV_HEADER;
use stokes_qopr::Mesh;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stokes-qopr")).args(args).env("STOKES_QOPR_THREADS", "2").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn smooth_run_prints_one_row_per_level() {
    let o = run(&["run", "smooth", "--nmax", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 1 + 4);
    assert!(lines[4].starts_with("smooth,crisscross,3,256,"));
    let eoc: f64 = lines[4].split(',').nth(12).unwrap().parse().unwrap();
    assert!((eoc - 1.0).abs() < 0.1, "{eoc}");
}

#[test]
fn penalty_list_gives_one_block_per_penalty() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("res");
    let o = run(&[
        "run",
        "locking",
        "--etas",
        "2,32,512",
        "--family",
        "diagonal",
        "--nmin",
        "1",
        "--nmax",
        "2",
        "--out",
        out.to_str().unwrap(),
        "--svg",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 1 + 3 * 2);
    let etas: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(6).unwrap()).collect();
    assert_eq!(etas, ["2", "2", "32", "32", "512", "512"]);
    assert_eq!(std::fs::read_to_string(out.join("locking.csv")).unwrap(), text);
    for eta in ["2", "32", "512"] {
        let stem = format!("locking_diagonal_new_eta{eta}");
        for curve in ["h1_u", "l2_p"] {
            let data = std::fs::read_to_string(out.join(format!("{stem}_{curve}.dat"))).unwrap();
            assert_eq!(data.lines().count(), 3);
        }
        assert!(out.join(format!("{stem}.svg")).exists());
    }
}

#[test]
fn mesh_dump_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mesh.txt");
    let o = run(&["run", "smooth", "--nmax", "1", "--dump-mesh", path.to_str().unwrap()]);
    assert!(o.status.success());
    let mesh = Mesh::load(&path).unwrap();
    assert_eq!(mesh.n_cells(), 16);
}

#[test]
fn bad_input_fails_with_diagnostic() {
    for args in [
        &["run", "nonsense"][..],
        &["run", "smooth", "--eta", "1"],
        &["run", "smooth", "--nmax", "9"],
        &["run", "smooth", "--solver", "magic"],
        &["run", "locking", "--disc", "standard"],
    ] {
        let o = run(args);
        assert!(!o.status.success(), "{args:?}");
        assert!(!o.stderr.is_empty());
        assert!(o.stdout.is_empty());
    }
    let o = Command::new(env!("CARGO_BIN_EXE_stokes-qopr"))
        .args(["run", "smooth", "--nmax", "0"])
        .env("STOKES_QOPR_THREADS", "zero")
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("STOKES_QOPR_THREADS"));
}
