use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fraisse(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fraisse"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("FRAISSE_LP_ENGINE")
        .output()
        .expect("spawn fraisse")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

fn run_dir(out: &Path) -> PathBuf {
    let dirs = files(out);
    assert_eq!(dirs.len(), 1, "one run directory per invocation");
    dirs[0].clone()
}

fn find(dir: &Path, prefix: &str) -> PathBuf {
    files(dir)
        .into_iter()
        .find(|p| p.file_name().unwrap().to_str().unwrap().starts_with(prefix))
        .unwrap_or_else(|| panic!("no {prefix}* in {}", dir.display()))
}

#[test]
fn gurarij_build_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["build-gurarij", "--depth", "5", "--seed", "7"];
    let (oa, ob) = (fraisse(a.path(), &args), fraisse(b.path(), &args));
    assert_eq!(oa.status.code(), Some(0), "{}", stdout(&oa));
    assert_eq!(ob.status.code(), Some(0));
    assert!(stdout(&oa).contains("chain hash 654eaf59fe8739c807795fdde5e15f880c7af31d4e2c18e17360a40f83fc5cde"));
    let (da, db) = (run_dir(a.path()), run_dir(b.path()));
    assert_eq!(da.file_name(), db.file_name());
    let names = |d: &Path| files(d).iter().map(|p| p.file_name().unwrap().to_owned()).collect::<Vec<_>>();
    assert_eq!(names(&da), names(&db));
    let chain = find(&da, "chain-");
    assert_eq!(fs::read(&chain).unwrap(), fs::read(find(&db, "chain-")).unwrap());
    let json: serde_json::Value = serde_json::from_slice(&fs::read(chain).unwrap()).unwrap();
    for key in ["hash", "dims", "connectives", "seed", "net_resolution", "ledger"] {
        assert!(json.get(key).is_some(), "chain file lacks {key}");
    }
}

#[test]
fn certificates_verify_against_their_chain() {
    let out = tempfile::tempdir().unwrap();
    let o = fraisse(out.path(), &["certify-extension", "--depth", "3", "--dim-cap", "6", "--seed", "3", "--battery", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let dir = run_dir(out.path());
    let cert = find(&dir, "certificate-extension-");
    let chain = find(&dir, "chain-");
    let v = Command::new(env!("CARGO_BIN_EXE_fraisse"))
        .args(["--out", out.path().to_str().unwrap(), "verify"])
        .arg(&cert)
        .arg("--chain")
        .arg(&chain)
        .output()
        .unwrap();
    assert_eq!(v.status.code(), Some(0), "{}", stdout(&v));
    assert!(stdout(&v).contains("verified: pass"));

    // A certificate whose stored value disagrees with its witness is negative.
    let mut json: serde_json::Value = serde_json::from_slice(&fs::read(&cert).unwrap()).unwrap();
    json["measured"] = serde_json::Value::String("5.0e-1".into());
    let forged = out.path().join("forged.json");
    fs::write(&forged, serde_json::to_vec(&json).unwrap()).unwrap();
    let v = Command::new(env!("CARGO_BIN_EXE_fraisse")).arg("verify").arg(&forged).output().unwrap();
    assert_eq!(v.status.code(), Some(1), "{}", stdout(&v));
}

#[test]
fn negative_certificate_exits_with_one() {
    let out = tempfile::tempdir().unwrap();
    let o = fraisse(out.path(), &["check-biface", "--averaging", "--eps", "0.1"]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    let o = fraisse(out.path(), &["check-face", "--n", "3", "--k", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn configuration_errors_exit_with_two() {
    let out = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_fraisse"))
        .args(["--out", out.path().to_str().unwrap(), "check-face"])
        .env("FRAISSE_LP_ENGINE", "quantum")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(fraisse(out.path(), &["check-face", "--n", "2", "--k", "2"]).status.code(), Some(2));
    assert_eq!(fraisse(out.path(), &["minimality", "--d", "2", "--eps", "0.5", "--m", "4"]).status.code(), Some(2));
    assert_eq!(fraisse(out.path(), &["verify", "/nonexistent/cert.json"]).status.code(), Some(2));
}

#[test]
fn uniform_minimality_has_zero_defect_on_both_engines() {
    for engine in ["float", "exact"] {
        let out = tempfile::tempdir().unwrap();
        let o = Command::new(env!("CARGO_BIN_EXE_fraisse"))
            .args(["--out", out.path().to_str().unwrap(), "minimality", "--d", "2", "--eps", "1", "--m", "6", "--uniform"])
            .env("FRAISSE_LP_ENGINE", engine)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0));
        assert!(stdout(&o).contains("trial 0: defect 0.000000e0"), "{engine}: {}", stdout(&o));
    }
}

#[test]
fn density_matrices_are_interleaved() {
    let out = tempfile::tempdir().unwrap();
    let o = fraisse(out.path(), &["matrix-minimality", "--samples", "50"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let states: serde_json::Value = serde_json::from_slice(&fs::read(find(&run_dir(out.path()), "states-")).unwrap()).unwrap();
    let t = &states[1]["density"]["entries"];
    assert_eq!(t["n"], 2);
    assert_eq!(t["data"].as_array().unwrap().len(), 8);
}
