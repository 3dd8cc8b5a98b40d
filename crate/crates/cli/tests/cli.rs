use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn covtrace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covtrace"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Four motionless users stacked on one point.
const STILL_FOUR: &str = r#"
seed = 3
[simulation]
n_users = 4
sigma_r = 0.0
positive_frac = 0.5
duration = 40.0
speed_classes = [{ fraction = 1.0, mean_speed = 0.0 }]
"#;

/// Users 0 and 2 on operator 0, users 1 and 3 on operator 1; user 3 is positive.
/// User 0 meets user 3 at t=0 and t=1 and user 1 at t=1; user 1 meets user 3 at t=1.
const HAND: &str = "user_id,t,x,y,mo_id,status
0,0,5,5,0,0
1,0,30,30,1,0
2,0,50,50,0,0
3,0,6,5,1,1
0,1,5,5,0,0
1,1,5,6,1,0
2,1,50,50,0,0
3,1,6,6,1,1
0,2,5,5,0,0
1,2,30,30,1,0
2,2,9,40,0,0
3,2,10,40,1,1
";

const SMALL: &str = "[session]\nloc_queries = 8\n";

#[test]
fn still_users_contact_every_pair_every_instant() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "still.toml", STILL_FOUR);
    let out = dir.path().join("sim");
    let res = covtrace(&["simulate", "--config", arg(&cfg), "--out", arg(&out)]);
    ok(&res);
    let mut expected = String::from("t,user_i,user_j\n");
    for t in 0..2 {
        for (i, j) in [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)] {
            expected.push_str(&format!("{t},{i},{j}\n"));
        }
    }
    assert_eq!(read(&out, "ground_truth.csv"), expected);
    assert!(String::from_utf8_lossy(&res.stdout).contains("users 4, instants 2, contacts 12"));
    let traj = read(&out, "trajectories.csv");
    assert_eq!(traj.lines().count(), 1 + 4 * 2);
    assert!(traj.lines().skip(1).all(|l| l.split(',').nth(2) == Some("0") && l.split(',').nth(3) == Some("0")));
}

#[test]
fn zero_duration_writes_headers_only() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "zero.toml", &STILL_FOUR.replace("duration = 40.0", "duration = 0.0"));
    let out = dir.path().join("sim");
    ok(&covtrace(&["simulate", "--config", arg(&cfg), "--out", arg(&out)]));
    assert_eq!(read(&out, "trajectories.csv"), "user_id,t,x,y,mo_id,status\n");
    assert_eq!(read(&out, "ground_truth.csv"), "t,user_i,user_j\n");
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn simulate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.toml", "[simulation]\nn_users = 300\nsigma_r = 40.0\n");
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for out in [&a, &b] {
        ok(&covtrace(&["simulate", "--config", arg(&cfg), "--seed", "11", "--out", arg(out)]));
    }
    ok(&covtrace(&["simulate", "--config", arg(&cfg), "--seed", "12", "--out", arg(&c)]));
    assert_eq!(files(&a), files(&b));
    assert_ne!(read(&a, "trajectories.csv"), read(&c, "trajectories.csv"));
    assert!(read(&a, "manifest.toml").contains("input_hash"));
}

#[test]
fn malformed_config_exits_2_with_field() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("o");
    for (text, field) in [
        ("[simulation]\nn_userz = 3\n", "[simulation].n_userz"),
        ("[session]\nchi = \"high\"\n", "[session].chi"),
        ("[simulation]\npositive_frac = 2.0\n", "positive_frac"),
    ] {
        let cfg = write(&dir, "bad.toml", text);
        let res = covtrace(&["simulate", "--config", arg(&cfg), "--out", arg(&out)]);
        assert_eq!(res.status.code(), Some(2), "{text}");
        assert!(String::from_utf8_lossy(&res.stderr).contains(field), "{text}");
    }
    let res = covtrace(&["simulate", "--config", "/nonexistent/covtrace.toml", "--out", arg(&out)]);
    assert_eq!(res.status.code(), Some(2));
}

fn hand_run(dir: &TempDir, name: &str, extra: &[&str]) -> (PathBuf, Output) {
    let traj = write(dir, "hand.csv", HAND);
    let cfg = write(dir, "small.toml", SMALL);
    let out = dir.path().join(name);
    let mut args = vec!["protocol", "--config", arg(&cfg), "--trajectories", arg(&traj), "--out", arg(&out)];
    args.extend_from_slice(extra);
    let args: Vec<String> = args.into_iter().map(String::from).collect();
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    (out.clone(), covtrace(&args))
}

#[test]
fn protocol_scores_match_hand_count() {
    let dir = TempDir::new().unwrap();
    let (out, res) = hand_run(&dir, "run", &["--chi", "1"]);
    ok(&res);
    assert_eq!(
        read(&out, "scores.csv"),
        "user_id,mo_id,revealed_score,expected_score\n0,0,2,2\n1,1,1,1\n2,0,0,0\n3,1,0,0\n"
    );
    let ids = read(&out, "identified.csv");
    let users: Vec<&str> = ids.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(users, ["0", "1"]);
    assert!(ids.contains("Subscriber 0000001||+15550000001"));
    let reconcile = read(&out, "reconcile.csv");
    assert!(reconcile.contains("tracing,34500,34500,0.000000"), "{reconcile}");
    let summary = read(&out, "summary.toml");
    assert!(summary.contains("correct = true"));
    assert!(summary.contains("plaintext_status_to_mo = 0"));
    for name in ["ledger.csv", "charges.csv", "loc_scores.csv", "tracing.csv", "manifest.toml"] {
        assert!(out.join(name).exists(), "{name}");
    }
}

#[test]
fn protocol_threshold_above_every_score_identifies_nobody() {
    let dir = TempDir::new().unwrap();
    let (out, res) = hand_run(&dir, "run", &["--chi", "50"]);
    ok(&res);
    assert_eq!(
        read(&out, "identified.csv"),
        "user_id,mo_id,row,score,window_lo,window_hi,identity\n"
    );
}

#[test]
fn windowed_run_reports_privacy() {
    let dir = TempDir::new().unwrap();
    let (out, res) = hand_run(&dir, "run", &["--chi", "1", "--eta", "200"]);
    ok(&res);
    let summary = read(&out, "summary.toml");
    assert!(summary.contains("eta = 200"), "{summary}");
    assert!(summary.contains("privacy = 0.995"), "{summary}");
}

#[test]
fn protocol_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let (a, ra) = hand_run(&dir, "a", &["--chi", "1"]);
    let (b, rb) = hand_run(&dir, "b", &["--chi", "1"]);
    ok(&ra);
    ok(&rb);
    assert_eq!(files(&a), files(&b));
}

#[test]
fn protocol_rejects_analytical_profile_and_bad_input() {
    let dir = TempDir::new().unwrap();
    let (_, res) = hand_run(&dir, "run", &["--profile", "paper-accounting"]);
    assert_eq!(res.status.code(), Some(2));
    let bad = write(&dir, "bad.csv", "user_id,t,x,y,mo_id,status\n0,0,1,1,0,7\n");
    let out = dir.path().join("o");
    let res = covtrace(&["protocol", "--trajectories", arg(&bad), "--out", arg(&out)]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn report_merges_measured_runs() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "r.toml",
        "[simulation]\nn_users = 200\nsigma_r = 30.0\nduration = 60.0\n[session]\nloc_queries = 4\nchi = 1\n",
    );
    let run = dir.path().join("run");
    ok(&covtrace(&["protocol", "--config", arg(&cfg), "--l", "10", "--k", "2", "--out", arg(&run)]));
    let rep = dir.path().join("rep");
    let res = covtrace(&[
        "report", "--config", arg(&cfg), "--l", "10", "--k", "2", "--runs", arg(&run), "--out", arg(&rep),
    ]);
    ok(&res);
    let fig2 = read(&rep, "fig2.csv");
    let rows: Vec<Vec<&str>> = fig2.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2, "{fig2}");
    for r in &rows {
        assert_eq!((r[0], r[1]), ("10", "2"));
        // the tracing charge is the model by construction
        assert_eq!(r[3], r[4], "{fig2}");
    }
    assert!(read(&rep, "fig3.csv").starts_with("eta,chi,privacy,modeled_bits\n"));

    let bare = dir.path().join("bare");
    let res = covtrace(&["report", "--config", arg(&cfg), "--l", "35", "--k", "2", "--out", arg(&bare)]);
    ok(&res);
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("(l=35, k=2)"), "{stderr}");
    assert!(read(&bare, "fig2.csv").lines().skip(1).all(|l| l.ends_with(',')));
}

#[test]
fn paper_accounting_report() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("paper");
    ok(&covtrace(&["report", "--profile", "paper-accounting", "--l", "285", "--k", "2", "--out", arg(&out)]));
    let phases = read(&out, "phases.csv");
    assert!(phases.contains("score_ga_to_mos,6144000000,768.000000"), "{phases}");
    assert!(phases.contains("user_triggered_per_user,12288,"), "{phases}");

    let fig3 = read(&out, "fig3.csv");
    let bits = |eta: &str| -> f64 {
        fig3.lines()
            .find(|l| l.starts_with(&format!("{eta},10,")))
            .and_then(|l| l.split(',').nth(3))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!(fig3.contains("200,10,0.995000,"), "{fig3}");
    assert!(bits("750000") / bits("200") >= 1000.0, "{fig3}");
}
