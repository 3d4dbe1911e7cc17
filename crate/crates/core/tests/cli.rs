use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL_COMPARE: &str = r#"
[sweep]
epsilon = [0.1, 1.0]
delta = [0.05]
n_seeds = 3

[sampler]
n_paths = 300
"#;

fn cdpm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdpm")).args(args).output().unwrap()
}

fn read_all(dir: &Path) -> Vec<(String, String)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read_to_string(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn csv_bytes_do_not_depend_on_threads() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("small.toml");
    fs::write(&cfg, SMALL_COMPARE).unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out = tmp.path().join(format!("t{threads}"));
        let o = cdpm(&[
            "compare",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "17",
            "--threads",
            threads,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(matches!(o.status.code(), Some(0) | Some(1)), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(read_all(&out));
    }
    let names: Vec<&str> = outputs[0].iter().map(|f| f.0.as_str()).collect();
    assert_eq!(names, ["compare_cells.csv", "compare_checks.csv", "compare_runs.csv", "compare_table.csv"]);
    assert_eq!(outputs[0], outputs[1]);
    let text = &outputs[0][2].1;
    assert!(text.starts_with("# cdpm "));
    assert!(text.contains("# command: compare\n# config_sha256: "));
}

#[test]
fn passing_run_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let o = cdpm(&["transform-check", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.lines().any(|l| l.starts_with("PASS tau_identity")));
    assert!(stdout.trim_end().ends_with("5 of 5 checks passed"));
    assert!(tmp.path().join("transform_check_grid.csv").exists());
}

#[test]
fn usage_and_config_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    assert_eq!(cdpm(&["w2", "--a", "x.csv", "--out", out]).status.code(), Some(2));
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[sweep]\nepsilons = [0.1]\n").unwrap();
    let o = cdpm(&["compare", "--config", bad.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("epsilons"));
    assert_eq!(cdpm(&["bounds", "--threads", "0", "--out", out]).status.code(), Some(2));
}

#[test]
fn w2_on_files() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a.csv"), tmp.path().join("b.csv"));
    fs::write(&a, "# comment\nx0,x1\n0,0\n1,0\n").unwrap();
    fs::write(&b, "x0,x1\n1,1\n0,1\n").unwrap();
    let o = cdpm(&["w2", "--a", a.to_str().unwrap(), "--b", b.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(tmp.path().join("w2_value.csv")).unwrap();
    let row = csv.lines().last().unwrap();
    assert!(row.split(',').any(|f| f == "1"), "{csv}");
}
