use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_sphlab");

fn sphlab(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("SPHLAB_THREADS")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_run_verify_report() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.sphk");
    let csv = dir.path().join("t.csv");
    let a = dir.path().join("a.sphk");
    let b = dir.path().join("b.sphk");

    let o = sphlab(&["gen", "--kind", "blobs", "--n", "1200", "--seed", "3", "--k", "32", "--out", s(&w)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let o = sphlab(&["run", s(&w), "--variant", "original", "--threads", "1,2", "--repeats", "2", "--csv", s(&csv), "--out", s(&a)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = sphlab(&["run", s(&w), "--variant", "optimised", "--threads", "4", "--csv", s(&csv), "--out", s(&b)]);
    assert_eq!(code(&o), 0);

    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 6);
    assert!(lines[0].starts_with("variant,threads,n_particles,k,repeat,iterations,t_total_s"));
    assert_eq!(lines.iter().filter(|l| l.starts_with("variant")).count(), 1);
    let checksums: Vec<&str> = lines[1..].iter().map(|l| l.rsplit(',').next().unwrap()).collect();
    assert!(checksums.windows(2).all(|w| w[0] == w[1]));

    let o = sphlab(&["verify", s(&a), s(&b)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let out_csv = dir.path().join("r.csv");
    let o = sphlab(&["report", s(&csv), "--baseline-variant", "original", "--out-csv", s(&out_csv)]);
    assert_eq!(code(&o), 0);
    let md = String::from_utf8(o.stdout).unwrap();
    assert!(md.contains("| optimised | 4 |"));
    assert!(std::fs::read_to_string(&out_csv).unwrap().lines().count() == 4);

    let o = sphlab(&["report", s(&csv), "--baseline-variant", "soa"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn verify_detects_different_results() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.sphk");
    let (a, b) = (dir.path().join("a.sphk"), dir.path().join("b.sphk"));
    sphlab(&["gen", "--n", "800", "--k", "16", "--out", s(&w)]);
    assert_eq!(code(&sphlab(&["run", s(&w), "--out", s(&a)])), 0);
    assert_eq!(code(&sphlab(&["run", s(&w), "--k", "24", "--out", s(&b)])), 0);
    assert_eq!(code(&sphlab(&["verify", s(&a), s(&b)])), 2);
    assert_eq!(code(&sphlab(&["verify", s(&a), s(&b), "--rtol", "10"])), 0);
}

#[test]
fn usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.sphk");
    assert_eq!(code(&sphlab(&["gen", "--n", "0", "--out", s(&w)])), 1);
    assert_eq!(code(&sphlab(&["gen", "--kind", "lattice", "--n", "10", "--out", s(&w)])), 1);
    assert_eq!(code(&sphlab(&["frobnicate"])), 1);
    assert_eq!(code(&sphlab(&["--help"])), 0);
    sphlab(&["gen", "--n", "500", "--k", "16", "--out", s(&w)]);
    assert_eq!(code(&sphlab(&["run", s(&w), "--threads", "0"])), 1);
    assert_eq!(code(&sphlab(&["run", s(&w), "--variant", "turbo"])), 1);
    assert_eq!(code(&sphlab(&["run", s(&w), "--k", "5000"])), 2);
}

#[test]
fn threads_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.sphk");
    sphlab(&["gen", "--n", "500", "--k", "16", "--out", s(&w)]);
    let o = Command::new(BIN)
        .args(["run", s(&w)])
        .env("SPHLAB_THREADS", "1,3")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.lines().any(|l| l.starts_with("optimised 3 0 ")));
}

#[test]
fn io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.sphk");
    assert_eq!(code(&sphlab(&["run", s(&missing)])), 3);
    let w = dir.path().join("w.sphk");
    sphlab(&["gen", "--n", "500", "--out", s(&w)]);
    let mut bytes = std::fs::read(&w).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x10;
    std::fs::write(&w, bytes).unwrap();
    let o = sphlab(&["run", s(&w)]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("particles"));
}
