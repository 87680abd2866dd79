use std::path::Path;
use std::process::{Command, Output};

fn chebauth(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chebauth"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "off")
        .env_remove("CBA_PASSWORD")
        .output()
        .expect("spawn chebauth")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(chebauth(&[], d).status.code(), Some(2));
    assert_eq!(chebauth(&["frobnicate"], d).status.code(), Some(2));
    assert_eq!(chebauth(&["attack", "--scenario", "nope"], d).status.code(), Some(2));
    assert_eq!(chebauth(&["eval", "--trials", "0"], d).status.code(), Some(2));
    assert_eq!(chebauth(&["eval", "--noise", "9"], d).status.code(), Some(2));
    assert_eq!(chebauth(&["genbio", "--out", "x", "--noise", "6"], d).status.code(), Some(2));
    // missing biometric file
    assert_eq!(chebauth(&["auth", "--bio", "missing.hex", "--password", "pw"], d).status.code(), Some(2));

    std::fs::write(d.join("cfg"), "window_ms = soon\n").unwrap();
    assert_eq!(chebauth(&["--config", "cfg", "eval", "--trials", "1"], d).status.code(), Some(2));
}

#[test]
fn enroll_requires_trusted_channel_flag() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = chebauth(&["genbio", "--out", "b.hex", "--seed", "1"], d);
    assert_eq!(o.status.code(), Some(0));
    let o = chebauth(&["enroll", "--bio", "b.hex", "--password", "pw", "--addr", "127.0.0.1:9"], d);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unreachable_server_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    chebauth(&["genbio", "--out", "b.hex", "--seed", "1"], d);
    // grab a free port, then close it
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let addr = format!("127.0.0.1:{port}");
    let o = chebauth(
        &["enroll", "--trusted-channel", "--bio", "b.hex", "--password", "pw", "--addr", &addr],
        d,
    );
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn genbio_noise_is_per_block() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(chebauth(&["genbio", "--out", "a.hex", "--seed", "5"], d).status.success());
    assert!(chebauth(&["genbio", "--out", "b.hex", "--from", "a.hex", "--noise", "2", "--seed", "6"], d)
        .status
        .success());
    let a = hex::decode(std::fs::read_to_string(d.join("a.hex")).unwrap().trim()).unwrap();
    let b = hex::decode(std::fs::read_to_string(d.join("b.hex")).unwrap().trim()).unwrap();
    let dist: u32 = a.iter().zip(&b).map(|(x, y)| (x ^ y).count_ones()).sum();
    assert_eq!(dist, 2 * 128);
}

#[test]
fn eval_is_deterministic_and_reports_result_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let a = chebauth(&["eval", "--trials", "40", "--seed", "3"], d);
    let b = chebauth(&["eval", "--trials", "40", "--seed", "3"], d);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).lines().last().unwrap().starts_with("RESULT far=0.0000 frr=0.0000"));
}

#[test]
fn attack_scenarios_exit_0_when_property_holds() {
    let dir = tempfile::tempdir().unwrap();
    let o = chebauth(&["attack", "--scenario", "template-scan"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("PASS template-scan"));
}

#[test]
fn faithful_mode_in_window_replay_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let o = chebauth(&["--faithful-paper", "attack", "--scenario", "replay-in-window"], dir.path());
    let out = stdout(&o);
    assert!(out.contains("mode: faithful-paper"), "{out}");
    assert!(out.contains("server issued a challenge to"), "{out}");
}
