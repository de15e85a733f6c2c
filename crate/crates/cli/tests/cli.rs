use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};

fn wzs(args: &[&str]) -> Output {
    wzs_with(args, None, &[])
}

fn wzs_with(args: &[&str], stdin: Option<&str>, env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_wzs"));
    cmd.args(args).env_remove("WZS_CACHE_DIR").stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::piped());
    for (k, v) in env {
        cmd.env(k, v);
    }
    let mut child = cmd.spawn().expect("spawn wzs");
    let mut pipe = child.stdin.take().unwrap();
    pipe.write_all(stdin.unwrap_or_default().as_bytes()).unwrap();
    drop(pipe);
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("wzs-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

const G311: [&str; 6] = ["--p", "3", "--alpha", "1", "--beta", "1"];

fn with_group<'a>(rest: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![rest[0]];
    v.extend(G311);
    v.extend(&rest[1..]);
    v
}

#[test]
fn decide_extremal_sequence_from_stdin() {
    let out =
        wzs_with(&with_group(&["decide", "--n", "3", "--mode", "exact", "--seq", "-"]), Some("3 1 1\n0,0\n0,0\n1,0\n0,1\n"), &[]);
    assert_eq!(stdout(&out), "false\n");
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn decide_accepts_headerless_stdin_and_inline() {
    let piped = wzs_with(&with_group(&["decide", "--n", "3", "--seq", "-"]), Some("0,0\n0,0\n1,0\n0,1\n"), &[]);
    assert_eq!(stdout(&piped), "false\n");
    let inline = wzs(&with_group(&["decide", "--n", "3", "--seq", "0,0;0,0;1,0;0,1;1,1"]));
    assert_eq!(stdout(&inline), "true\n");
    let brute = wzs(&with_group(&["decide", "--n", "3", "--seq", "0,0;0,0;1,0;0,1;1,1", "--brute-force"]));
    assert_eq!(stdout(&brute), "true\n");
}

#[test]
fn constants_smallest_group() {
    let out = wzs(&with_group(&["constants"]));
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "s_A=5 (exhaustive)\neta_A=3 (exhaustive)\ncorollary_ok=true\n");
}

#[test]
fn constants_json_and_csv() {
    let json: serde_json::Value = serde_json::from_str(&stdout(&wzs(&with_group(&["constants", "--format", "json"])))).unwrap();
    assert_eq!(json["s_A"]["value"], 5);
    assert_eq!(json["eta_A"]["value"], 3);
    assert_eq!(json["corollary_check"], true);
    let csv = stdout(&wzs(&with_group(&["constants", "--format", "csv"])));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("p,alpha,beta,s_A"));
    assert!(lines[1].starts_with("3,1,1,5,exhaustive,3,exhaustive,true"));
}

#[test]
fn find_on_empty_sequence() {
    let out = wzs(&with_group(&["find", "--n", "0", "--seq", ""]));
    assert_eq!(out.status.code(), Some(0));
    let cert: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(cert["indices"], serde_json::json!([]));
    assert_eq!(cert["weights"], serde_json::json!([]));
}

#[test]
fn find_reports_none() {
    let seq = ["--seq", "0,0;0,0;1,0;0,1"];
    let text = wzs(&with_group(&["find", "--n", "3", seq[0], seq[1], "--format", "text"]));
    assert_eq!(stdout(&text), "none\n");
    assert_eq!(text.status.code(), Some(0));
    let json = wzs(&with_group(&["find", "--n", "3", seq[0], seq[1]]));
    assert_eq!(stdout(&json), "null\n");
}

#[test]
fn certificate_round_trips_through_verify() {
    let dir = scratch("cert");
    let seq = "1,0;0,1;1,1;2,0;0,2";
    let found = wzs(&with_group(&["find", "--n", "3", "--seq", seq]));
    assert_eq!(found.status.code(), Some(0));
    let path = dir.join("cert.json");
    std::fs::write(&path, stdout(&found)).unwrap();
    let ok = wzs(&with_group(&["verify", "--seq", seq, "--certificate", path.to_str().unwrap()]));
    assert_eq!(stdout(&ok), "valid\n");
    assert_eq!(ok.status.code(), Some(0));

    let mut cert: serde_json::Value = serde_json::from_str(&stdout(&found)).unwrap();
    cert["weights"][0] = serde_json::json!(0);
    std::fs::write(&path, cert.to_string()).unwrap();
    let bad = wzs(&with_group(&["verify", "--seq", seq, "--certificate", path.to_str().unwrap()]));
    assert_eq!(bad.status.code(), Some(1));
    assert!(stdout(&bad).starts_with("invalid: "));
}

#[test]
fn trace_round_trips_through_verify() {
    let dir = scratch("trace");
    let seq = "1,0;0,1;1,1;2,0;0,2";
    let traced = wzs(&with_group(&["structured-find", "--seq", seq]));
    assert_eq!(traced.status.code(), Some(0));
    let path = dir.join("trace.json");
    std::fs::write(&path, stdout(&traced)).unwrap();
    let ok = wzs(&with_group(&["verify", "--seq", seq, "--trace", path.to_str().unwrap()]));
    assert_eq!(stdout(&ok), "valid\n");

    let other = "1,0;0,1;1,0;2,0;0,2";
    let bad = wzs(&with_group(&["verify", "--seq", other, "--trace", path.to_str().unwrap()]));
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn structured_find_needs_enough_terms() {
    let out = wzs(&with_group(&["structured-find", "--seq", "1,0;0,1"]));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error[usage]: "));
}

#[test]
fn sequence_file_with_header() {
    let dir = scratch("file");
    let path = dir.join("seq.txt");
    std::fs::write(&path, "3 1 1\n0,0\n0,0\n1,0\n0,1\n").unwrap();
    let out = wzs(&["decide", "--n", "3", "--seq", path.to_str().unwrap()]);
    assert_eq!(stdout(&out), "false\n");
    let clash = wzs(&["decide", "--p", "5", "--alpha", "1", "--beta", "1", "--n", "3", "--seq", path.to_str().unwrap()]);
    assert_eq!(clash.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_two_with_prefix() {
    let cases: Vec<Vec<&str>> = vec![
        vec![],
        vec!["decide", "--n", "1"],
        vec!["decide", "--p", "3", "--n", "1", "--seq", "1,0"],
        vec!["decide", "--p", "4", "--alpha", "1", "--beta", "1", "--n", "1", "--seq", "1,0"],
        with_group(&["decide", "--n", "4", "--seq", "1,0"]),
        with_group(&["decide", "--n", "1", "--seq", "1,x"]),
        with_group(&["decide", "--n", "1", "--mode", "sometimes", "--seq", "1,0"]),
        with_group(&["find", "--n", "1", "--seq", "1,0", "--format", "csv"]),
        vec!["verify-paper", "--params", "3,1"],
    ];
    for args in cases {
        let out = wzs(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let err = stderr(&out);
        assert!(err.starts_with("error[usage]: "), "{args:?}: {err}");
        assert_eq!(err.lines().count(), 1, "{args:?}: {err}");
    }
}

#[test]
fn budget_exhaustion_exits_three() {
    let out = wzs(&with_group(&["decide", "--n", "3", "--seq", "1,0;0,1;1,1;2,0", "--brute-force", "--budget", "1"]));
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).starts_with("error[budget]: "));
    let formula_only = wzs(&with_group(&["extremal", "--budget", "0"]));
    assert_eq!(formula_only.status.code(), Some(3));
    assert!(stderr(&formula_only).starts_with("error[budget]: "));
}

#[test]
fn extremal_classification_output() {
    let eta = wzs(&with_group(&["extremal", "--kind", "eta"]));
    assert_eq!(eta.status.code(), Some(0));
    assert_eq!(stdout(&eta), "kind=eta length=2 searched=15 survivors=6 all_conform=true\n");
    let s = wzs(&with_group(&["extremal", "--kind", "s"]));
    assert_eq!(s.status.code(), Some(1));
    assert!(stdout(&s).contains("all_conform=false"));
    let larger = wzs(&["extremal", "--p", "3", "--alpha", "2", "--beta", "1", "--format", "json"]);
    assert_eq!(larger.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_str(&stdout(&larger)).unwrap();
    assert_eq!(json["all_conform"], true);
    assert_eq!(json["length"], 11);
}

#[test]
fn verify_paper_is_thread_independent() {
    let base = ["verify-paper", "--params", "3,1,1;3,2,1;5,1,1", "--structured-samples", "200", "--format", "json"];
    let mut runs = Vec::new();
    for threads in ["1", "8", "1", "8"] {
        let mut args = base.to_vec();
        args.extend(["--threads", threads]);
        runs.push(wzs(&args));
    }
    for r in &runs[1..] {
        assert_eq!(r.stdout, runs[0].stdout);
        assert_eq!(r.status.code(), runs[0].status.code());
    }
    let report: serde_json::Value = serde_json::from_str(&stdout(&runs[0])).unwrap();
    assert_eq!(report["reports"].as_array().unwrap().len(), 3);
    assert_eq!(report["reports"][1]["ok"], true);
    assert_eq!(report["reports"][2]["ok"], true);
}

#[test]
fn verify_paper_exit_code_follows_checks() {
    let passing = wzs(&["verify-paper", "--params", "3,2,1", "--structured-samples", "50"]);
    assert_eq!(passing.status.code(), Some(0));
    assert!(stdout(&passing).ends_with("all checks passed\n"));
    let failing = wzs(&["verify-paper", "--params", "3,1,1", "--structured-samples", "50"]);
    assert_eq!(failing.status.code(), Some(1));
    assert!(stdout(&failing).ends_with("some checks FAILED\n"));
}

#[test]
fn cache_dir_from_environment() {
    let dir = scratch("cache");
    let args = ["verify-paper", "--params", "3,2,1", "--structured-samples", "50", "--format", "json"];
    let env = [("WZS_CACHE_DIR", dir.to_str().unwrap())];
    let first = wzs_with(&args, None, &env);
    let entry = dir.join("p3_a2_b1.json");
    assert!(entry.is_file());
    let second = wzs_with(&args, None, &env);
    assert_eq!(first.stdout, second.stdout);
    assert!(stderr(&second).is_empty());

    std::fs::write(&entry, "{ not json").unwrap();
    let third = wzs_with(&args, None, &env);
    assert_eq!(first.stdout, third.stdout);
    assert!(stderr(&third).starts_with("warning[cache]: "));
}
