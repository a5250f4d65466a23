use std::path::Path;
use std::process::{Command, Output};

use base64::Engine;
use serde_json::Value;

fn badseq(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_badseq"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env_remove("BADSEQ_CONFIG")
        .output()
        .expect("binary runs")
}

fn report(dir: &Path, name: &str) -> Value {
    let s = std::fs::read_to_string(dir.join(format!("{name}.json"))).unwrap();
    serde_json::from_str(&s).unwrap()
}

fn small_family(dir: &Path) -> std::path::PathBuf {
    let out = badseq(dir, &["build-family", "--m", "1", "--l", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("family.json")
}

#[test]
fn residues_of_squares_mod_65() {
    let dir = tempfile::tempdir().unwrap();
    let out = badseq(dir.path(), &["residues", "--d", "2", "--t", "65"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(dir.path(), "residues");
    assert_eq!(r["report"]["size"], 12);
    assert_eq!(r["report"]["crt_agrees"], true);
    assert_eq!(r["pass"], true);
    assert_eq!(r["config_hash"].as_str().unwrap().len(), 64);
    let csv = std::fs::read_to_string(dir.path().join("residues.csv")).unwrap();
    assert_eq!(csv.lines().count(), 13);
}

#[test]
fn residues_of_primes_mod_6() {
    let dir = tempfile::tempdir().unwrap();
    let out = badseq(dir.path(), &["residues", "--primes", "--t", "6"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(dir.path(), "residues")["report"]["elements"], serde_json::json!([1, 5]));
}

#[test]
fn usage_and_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = badseq(dir.path(), &["residues", "--t", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("t = 1"));
    assert_eq!(badseq(dir.path(), &["residues", "--bogus"]).status.code(), Some(2));
    assert_eq!(badseq(dir.path(), &["nonsense"]).status.code(), Some(2));
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "seed = 1\ngamma = 1/3\n").unwrap();
    let out = badseq(dir.path(), &["--config", cfg.to_str().unwrap(), "equidist"]);
    assert_eq!(out.status.code(), Some(2));
    let out = badseq(dir.path(), &["--config", cfg.to_str().unwrap(), "--set", "nope=1", "equidist"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));
}

#[test]
fn config_file_from_env_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# residues of primes\nsequence = primes\nt = 15\n").unwrap();
    let run = |extra: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_badseq"))
            .arg("residues")
            .args(extra)
            .arg("--out")
            .arg(dir.path())
            .env("BADSEQ_CONFIG", &cfg)
            .output()
            .unwrap()
    };
    assert_eq!(run(&[]).status.code(), Some(0));
    assert_eq!(report(dir.path(), "residues")["report"]["size"], 8);
    assert_eq!(run(&["--t", "10"]).status.code(), Some(0));
    assert_eq!(report(dir.path(), "residues")["report"]["elements"], serde_json::json!([1, 3, 7, 9]));
}

#[test]
fn identical_config_gives_identical_reports() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        let out = badseq(d, &["equidist", "--q", "15", "--horizon", "20000", "--set", "sequence=primes"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let out = badseq(d, &["rearrange", "--t", "3", "--p", "101", "--workers", "1"]);
        assert_eq!(out.status.code(), Some(0));
    }
    for f in ["equidist.json", "equidist.csv", "rearrange.json"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn spacing_emits_the_trend_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = badseq(dir.path(), &["spacing", "--chain", "65,1105"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("spacing.csv")).unwrap();
    assert!(csv.starts_with("q,theta,F_q,exp_neg_theta\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * 8);
    let r = report(dir.path(), "spacing");
    assert_eq!(r["report"]["rows"][0]["size"], 12);
}

#[test]
fn build_verify_and_demo_a_small_family() {
    let dir = tempfile::tempdir().unwrap();
    let fam = small_family(dir.path());
    let r = report(dir.path(), "build-family");
    assert_eq!(r["pass"], true);
    assert_eq!(r["provenance"]["steps"][0]["q"], 105);

    let out = badseq(dir.path(), &["verify-family", "--family", fam.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));

    let out = badseq(dir.path(), &["demo-maximal", "--family", fam.to_str().unwrap(), "--sample-size", "500"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(dir.path(), "demo-maximal");
    assert_eq!(r["report"]["violations"], 0);
    let csv = std::fs::read_to_string(dir.path().join("demo-maximal.csv")).unwrap();
    assert!(csv.starts_with("x,q,n,a_n"));
}

#[test]
fn corrupted_family_fails_with_a_witness() {
    let dir = tempfile::tempdir().unwrap();
    let fam = small_family(dir.path());
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(&fam).unwrap()).unwrap();
    // empty the exceptional set: (4) must then fail at some x
    let b64 = base64::engine::general_purpose::STANDARD;
    let words = b64.decode(v["exceptional"]["words"].as_str().unwrap()).unwrap();
    v["exceptional"]["words"] = Value::String(b64.encode(vec![0u8; words.len()]));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, v.to_string()).unwrap();
    let out = badseq(dir.path(), &["verify-family", "--family", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("witness"), "{stdout}");

    std::fs::write(&bad, "{not json").unwrap();
    let out = badseq(dir.path(), &["verify-family", "--family", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_family_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = badseq(dir.path(), &["demo-maximal", "--family", "/nonexistent/family.json"]);
    assert_eq!(out.status.code(), Some(2));
}
