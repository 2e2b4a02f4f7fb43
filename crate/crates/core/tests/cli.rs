use std::process::Command;

fn bmlab(args: &[&str], cache: &std::path::Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_bmlab"))
        .args(args)
        .env("BMLAB_CACHE", cache)
        .output()
        .unwrap()
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    let ok = bmlab(&["regions", "--form", "sphere-5"], dir.path());
    assert_eq!(ok.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(report["measured"]["s2"], 25.0 / 49.0);

    let failed = bmlab(&["arith", "--form", "sphere-5", "--modulus", "2", "--congruence-bound", "0.5"], dir.path());
    assert_eq!(failed.status.code(), Some(1));

    let usage = bmlab(&["run", "nope"], dir.path());
    assert_eq!(usage.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&usage.stderr).unwrap();
    assert_eq!(err["error"], "invalid-argument");

    let budget = bmlab(&["arith", "--modulus", "24", "--budget", "100"], dir.path());
    assert_eq!(budget.status.code(), Some(3));
    let err: serde_json::Value = serde_json::from_slice(&budget.stderr).unwrap();
    assert_eq!(err["error"], "budget");
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    std::fs::write(&path, r#"{"experiment": "lattice", "form": "sphere-3", "lambdas": [1, 2]}"#).unwrap();
    let out = bmlab(&["run", "--config", path.to_str().unwrap(), "--lambda", "3,5"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["config"]["form"], "sphere-3");
    assert_eq!(report["config"]["lambdas"], serde_json::json!([3, 5]));
    assert!(report["measured"].get("r[3]").is_some());
}

#[test]
fn cache_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let list = bmlab(&["cache", "list"], &cache);
    assert_eq!(String::from_utf8_lossy(&list.stdout).lines().count(), 1);
    assert_eq!(bmlab(&["lattice", "--form", "sphere-4", "--lambda", "2"], &cache).status.code(), Some(0));
    let list = bmlab(&["cache", "list"], &cache);
    assert_eq!(String::from_utf8_lossy(&list.stdout).lines().count(), 2);
    let verify = bmlab(&["cache", "verify"], &cache);
    assert_eq!(verify.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&verify.stdout).contains("verified 1"));
    assert_eq!(bmlab(&["cache", "purge"], &cache).status.code(), Some(0));
    let list = bmlab(&["cache", "list"], &cache);
    assert_eq!(String::from_utf8_lossy(&list.stdout).lines().count(), 1);
}

#[test]
fn same_seed_gives_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["sparse", "certify", "--lambda", "25", "--trials", "10", "--seed", "3"];
    let run = |threads: &str| {
        let mut a = args.to_vec();
        a.extend(["--threads", threads]);
        let out = bmlab(&a, dir.path());
        assert_eq!(out.status.code(), Some(0));
        let mut v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        v["elapsed_seconds"] = serde_json::json!(0.0);
        v
    };
    let a = run("1");
    assert_eq!(a, run("1"));
    assert_eq!(a, run("3"));
}
