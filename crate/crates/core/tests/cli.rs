use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_alloc-bandit"))
        .args(args)
        .output()
        .expect("spawn binary")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trace.csv");
    let o = bin(&[
        "run", "--nus", "0.4,0.6", "--horizon", "1000", "--seed", "7", "--lower-bounds", "0.2,0.3", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,M_1,M_2,X_1,X_2,r_t,cumregret");
    assert_eq!(lines.count(), 1000);
    assert!(String::from_utf8_lossy(&o.stdout).contains("final cumulative regret"));
}

#[test]
fn modified_run_exports_init_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trace.csv");
    let o = bin(&["run", "--nus", "0.4,0.6", "--horizon", "300", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("trace.csv.meta.json")).unwrap()).unwrap();
    let records = meta["init_records"].as_array().unwrap();
    assert_eq!(records.len(), 2);
    for r in records {
        let nu = [0.4, 0.6][r["job"].as_u64().unwrap() as usize];
        assert!(r["lower_bound"].as_f64().unwrap() < nu);
    }
}

#[test]
fn config_file_matches_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("instance.json");
    std::fs::write(&cfg, r#"{"nus": [0.4, 0.6], "horizon": 500, "seed": 3}"#).unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert!(bin(&["run", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]).status.success());
    assert!(bin(&["run", "--nus", "0.4,0.6", "--horizon", "500", "--seed", "3", "--out", b.to_str().unwrap()])
        .status
        .success());
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn minimax_prints_sup_and_ratio() {
    let o = bin(&["minimax", "--horizon", "1000", "--k", "2", "--reps", "50", "--seed", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = String::from_utf8_lossy(&o.stdout);
    assert!(s.contains("sup mean regret") && s.contains("ratio"), "{s}");
}

#[test]
fn nus_and_config_are_exclusive() {
    let o = bin(&["run", "--nus", "0.4", "--config", "x.json", "--horizon", "10"]);
    assert!(!o.status.success());
    assert!(!stderr(&o).is_empty());
}

#[test]
fn numeric_parse_errors_name_the_flag() {
    let o = bin(&["run", "--nus", "0.4,abc", "--horizon", "10"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--nus"), "{}", stderr(&o));

    let o = bin(&["minimax", "--horizon", "ten"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--horizon"), "{}", stderr(&o));
}

#[test]
fn failure_leaves_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trace.csv");
    let o = bin(&["run", "--nus", "0.4,-1", "--horizon", "10", "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error:"));
    assert!(!out.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn bad_thread_count_is_reported() {
    let o = Command::new(env!("CARGO_BIN_EXE_alloc-bandit"))
        .args(["minimax", "--horizon", "100", "--reps", "2"])
        .env("ALLOC_BANDIT_THREADS", "many")
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).contains("ALLOC_BANDIT_THREADS"));
}

#[test]
fn shipped_configs_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/br.toml");
    let out = dir.path().join("br.csv");
    let o = bin(&["experiment", "--config", cfg, "--reps", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(out).unwrap();
    assert!(text.starts_with("grid_value,arm,mean_regret,stderr,reps\n"));
}
