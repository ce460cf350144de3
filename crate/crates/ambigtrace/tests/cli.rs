//! Drives the installed binary end to end: key files, the wire service,
//! the simulator, and the verification table, all through `std::process`.

use std::io::{BufRead, BufReader, Write as _};
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use ambigtrace::group::Group;
use ambigtrace::protocol::decode_key_file;

const BIN: &str = env!("CARGO_BIN_EXE_ambigtrace");

/// Kills the server process when the test ends, pass or fail.
struct ChildGuard(Child);

impl Drop for ChildGuard {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

/// Spawn `serve` on an ephemeral port and return (guard, bound address).
fn spawn_serve(extra: &[&str]) -> (ChildGuard, String) {
    let mut child = Command::new(BIN)
        .args(["serve", "--group", "large", "--addr", "127.0.0.1:0", "--seed", "7"])
        .args(extra)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .expect("spawn serve");
    let stdout = child.stdout.take().expect("piped stdout");
    let mut line = String::new();
    BufReader::new(stdout)
        .read_line(&mut line)
        .expect("read listen line");
    let addr = line
        .trim()
        .strip_prefix("listening on ")
        .expect("listen line format")
        .to_string();
    (ChildGuard(child), addr)
}

fn run(args: &[&str], envs: &[(&str, &str)]) -> std::process::Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("AMBIGTRACE_ADDR");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("run binary")
}

fn stdout_of(out: &std::process::Output) -> String {
    assert!(
        out.status.success(),
        "command failed: {}\n{}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).expect("utf8 stdout")
}

#[test]
fn keygen_emits_a_valid_key_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("k.key");
    let out = run(
        &["keygen", "--group", "large", "--out", path.to_str().unwrap()],
        &[],
    );
    assert!(out.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    decode_key_file(&Group::large(), &text).expect("file round-trips through the decoder");

    // without --out the file goes to stdout instead
    let out = run(&["keygen", "--group", "toy"], &[]);
    decode_key_file(&Group::toy(), &stdout_of(&out)).expect("stdout key parses");
}

#[test]
fn full_service_flow_over_the_env_configured_address() {
    let (_guard, addr) = spawn_serve(&["--day-seconds", "1"]);
    let dir = tempfile::tempdir().unwrap();
    let alice = dir.path().join("alice.key");
    let bob = dir.path().join("bob.key");
    for key in [&alice, &bob] {
        let out = run(&["keygen", "--group", "large", "--out", key.to_str().unwrap()], &[]);
        assert!(out.status.success());
    }

    // every client command resolves the address from AMBIGTRACE_ADDR
    let env = [("AMBIGTRACE_ADDR", addr.as_str())];
    let out = run(
        &["client", "register", "--user", "1", "--key", alice.to_str().unwrap()],
        &env,
    );
    assert_eq!(stdout_of(&out), "registered user 1\n");
    let out = run(
        &["client", "register", "--user", "2", "--key", bob.to_str().unwrap()],
        &env,
    );
    assert!(out.status.success());

    // a second registration under the same id must fail loudly
    let out = run(
        &["client", "register", "--user", "1", "--key", bob.to_str().unwrap()],
        &env,
    );
    assert!(!out.status.success());

    // alice broadcasts; bob (infected) reports what he heard
    let out = run(
        &["client", "broadcast", "--key", alice.to_str().unwrap(), "--count", "3"],
        &[],
    );
    let tokens = dir.path().join("heard.txt");
    std::fs::write(&tokens, stdout_of(&out)).unwrap();
    let out = run(
        &["client", "report", "--tokens", tokens.to_str().unwrap()],
        &env,
    );
    assert_eq!(stdout_of(&out), "report submitted (3 tokens)\n");

    // poll until the 1-second day roller closes day 0
    let deadline = Instant::now() + Duration::from_secs(10);
    let alice_line = loop {
        let out = run(
            &[
                "client", "check", "--user", "1",
                "--key", alice.to_str().unwrap(), "--day", "0",
            ],
            &env,
        );
        if out.status.success() {
            break stdout_of(&out);
        }
        assert!(Instant::now() < deadline, "day 0 never closed");
        std::thread::sleep(Duration::from_millis(150));
    };
    assert_eq!(alice_line, "at_risk=true match_count=3\n");

    let out = run(
        &[
            "client", "check", "--user", "2",
            "--key", bob.to_str().unwrap(), "--day", "0",
        ],
        &env,
    );
    assert_eq!(stdout_of(&out), "at_risk=false match_count=0\n");
}

#[test]
fn sim_run_is_seed_stable_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.json");
    let mut f = std::fs::File::create(&cfg).unwrap();
    f.write_all(
        br#"{
            "num_users": 12, "num_days": 3, "epochs_per_day": 8,
            "contacts_per_user_per_day": 2.0, "infection_probability": 0.25,
            "adversaries": [{"strategy": "fresh_key_per_token", "count": 1, "token_budget": 4}],
            "group": "toy", "seed": 9
        }"#,
    )
    .unwrap();
    drop(f);

    let base = &["sim", "run", "--config", cfg.to_str().unwrap()];
    let a = stdout_of(&run(base, &[]));
    let b = stdout_of(&run(base, &[]));
    assert_eq!(a, b);
    assert!(a.starts_with("day,reports,pool_size,"));
    assert!(a.trim_end().lines().last().unwrap().starts_with("total,"));

    // --seed overrides the config and must change the trajectory
    let mut seeded = base.to_vec();
    seeded.extend(["--seed", "10"]);
    let c = stdout_of(&run(&seeded, &[]));
    assert_ne!(a, c);

    // per-strategy linkage accuracy goes to stderr, not into the CSV
    let out = run(base, &[]);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("# adversary fresh_key_per_token:"));
}

#[test]
fn stats_table_prints_a_row_per_check_and_exits_zero() {
    let out = run(&["stats", "all", "--group", "toy"], &[]);
    let text = stdout_of(&out);
    assert!(text.starts_with("THEOREM"));
    // 11 rows per sweep, three sweeps, plus header and summary
    assert_eq!(text.lines().count(), 1 + 33 + 1);
    assert_eq!(text.lines().filter(|l| l.ends_with("PASS")).count(), 33);
    assert!(text.trim_end().ends_with("all checks passed (33 rows)"));

    let out = run(&["stats", "t2", "--group", "toy"], &[]);
    assert_eq!(stdout_of(&out).lines().filter(|l| l.ends_with("PASS")).count(), 11);

    // sampled mode on the large group, small but passing sample budget
    let out = run(
        &["stats", "all", "--group", "large", "--samples", "2560"],
        &[],
    );
    let text = stdout_of(&out);
    assert_eq!(text.lines().filter(|l| l.ends_with("PASS")).count(), 4);
}
