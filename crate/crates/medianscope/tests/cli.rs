use std::process::Command;

fn medianscope(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_medianscope")).args(args).output().unwrap()
}

fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn folner_writes_csv_and_honours_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        &dir,
        "f.json",
        r#"{"name": "f", "provider": {"kind": "tree", "valence": 3},
            "params": {"alpha": {"type": "ray", "period": "ab"}, "r_max": 3}}"#,
    );
    let out = dir.path().join("f.csv");
    let o = medianscope(&["folner", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "11"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out).unwrap();
    assert!(csv.starts_with("r,count_ball,count_sphere,ratio\n0,1,1,1\n"));
    assert!(csv.trim_end().ends_with("# name=f,seed=11"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(&dir, "bad.json", r#"{"name": "b", "provider": {"kind": "klein"}}"#);
    assert_eq!(medianscope(&["build", "--config", &bad]).status.code(), Some(2));
    let missing = dir.path().join("nope.json");
    assert_eq!(medianscope(&["build", "--config", missing.to_str().unwrap()]).status.code(), Some(2));
    let finite = write(
        &dir,
        "e.json",
        r#"{"name": "e", "provider": {"kind": "explicit", "text": "vertex a\nvertex b\nedge a b\n"},
            "params": {"action": "construct"}}"#,
    );
    let o = medianscope(&["boundary", "--config", &finite]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));

    let a = write(&dir, "a.csv", "r,ratio\n0,1\n1,0.5\n");
    let b = write(&dir, "b.csv", "r,ratio\n0,1\n1,0.75\n");
    let cmp = write(&dir, "c.json", &format!(r#"{{"name": "c", "params": {{"csv": "{a}", "baseline": "{b}"}}}}"#));
    assert_eq!(medianscope(&["compare", "--config", &cmp]).status.code(), Some(3));
    let same = write(&dir, "s.json", &format!(r#"{{"name": "s", "params": {{"csv": "{a}", "baseline": "{a}"}}}}"#));
    assert_eq!(medianscope(&["compare", "--config", &same]).status.code(), Some(0));
}
