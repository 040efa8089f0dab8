use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn otfair(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_otfair"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut rdr = csv::Reader::from_reader(csv.as_bytes());
    let idx = rdr.headers().unwrap().iter().position(|h| h == name).unwrap();
    rdr.records().map(|r| r.unwrap()[idx].to_string()).collect()
}

const FOUR_ROWS: &str = "id,group,score\na1,A,0\na2,A,2\nb1,B,2\nb2,B,4\n";
const FAR_APART: &str = "group,score\nA,0\nA,1\nB,10\nB,11\n";

#[test]
fn theta_zero_is_identity() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "in.csv", "group,score\nA,0.1\nA,0.30000000000000004\nB,7\nB,-2.5\nB,1e-3\n");
    let out = dir.path().join("out.csv");
    let report = dir.path().join("r.json");
    let o = otfair(&["transform", "-i", s(&input), "-o", s(&out), "--report", s(&report), "--theta", "0"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let raw: Vec<f64> = column(&text, "score").iter().map(|v| v.parse().unwrap()).collect();
    let fair: Vec<f64> = column(&text, "fair_score").iter().map(|v| v.parse().unwrap()).collect();
    assert_eq!(raw, fair);
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["utility_loss_mean_abs"], 0.0);
    assert_eq!(r["utility_loss_w2"], 0.0);
    assert_eq!(r["individual_fairness_error"], 0.0);
}

#[test]
fn four_row_fixture() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "in.csv", FOUR_ROWS);
    for (theta, expected) in [("1", ["1", "3", "1", "3"]), ("0.5", ["0.5", "2.5", "1.5", "3.5"])] {
        let o = otfair(&["transform", "-i", s(&input), "--theta", theta, "--grid-size", "2", "--id-column", "id"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let text = String::from_utf8(o.stdout).unwrap();
        assert_eq!(column(&text, "fair_score"), expected);
        assert!(text.starts_with("id,group,score,fair_score\na1,A,0,"));
    }
}

#[test]
fn missing_value_cites_row() {
    let dir = TempDir::new().unwrap();
    let mut text = String::from("group,score\n");
    for i in 1..=10 {
        let g = if i == 7 { "" } else if i % 2 == 0 { "A" } else { "B" };
        text.push_str(&format!("{g},{i}\n"));
    }
    let input = write(dir.path(), "in.csv", &text);
    let o = otfair(&["transform", "-i", s(&input)]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("row 7"), "{err}");
}

#[test]
fn validation_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "in.csv", FOUR_ROWS);
    let bad_key = write(dir.path(), "bad.toml", "grdi_size = 3\n");
    let cases: Vec<Vec<&str>> = vec![
        vec!["transform", "-i", s(&input), "--theta", "1.5"],
        vec!["transform", "-i", s(&input), "--score-columns", "nope"],
        vec!["transform", "-i", s(&input), "-c", s(&bad_key)],
        vec!["transform", "-i", s(&input), "--theta-override", "Z=0.5"],
        vec!["transform"],
        vec!["sweep", "-i", s(&input)],
    ];
    for args in cases {
        let o = otfair(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn bytes_outside_new_column_preserved() {
    let dir = TempDir::new().unwrap();
    let text = "name,group,score,note\r\n\"Smith, J\",A,0.5,\"say \"\"hi\"\"\"\r\nLee,B,1.50,\r\n  x ,A,2,ünï\r\nQ,B,3.0,\"multi\nline\"\r\n";
    let input = write(dir.path(), "in.csv", text);
    let o = otfair(&["transform", "-i", s(&input), "--theta", "0.5", "--min-group-size", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = String::from_utf8(o.stdout).unwrap();
    let in_lines: Vec<&str> = text.split("\r\n").collect();
    let out_lines: Vec<&str> = out.split("\r\n").collect();
    assert_eq!(in_lines.len(), out_lines.len());
    for (a, b) in in_lines.iter().zip(&out_lines) {
        if a.is_empty() {
            assert!(b.is_empty());
            continue;
        }
        assert!(b.starts_with(a), "{a:?} -> {b:?}");
        assert!(!b[a.len()..][1..].contains(','));
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let synth = otfair(&["synth", "--seed", "3"]);
    assert!(synth.status.success());
    let input = dir.path().join("pop.csv");
    fs::write(&input, &synth.stdout).unwrap();
    let mut outputs = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("out{run}.csv"));
        let report = dir.path().join(format!("r{run}.json"));
        let o = otfair(&[
            "transform", "-i", s(&input), "-o", s(&out), "--report", s(&report), "--theta", "0.3", "--threshold", "0.5",
        ]);
        assert!(o.status.success());
        outputs.push((fs::read(&out).unwrap(), fs::read(&report).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn sweep_decays_linearly() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "in.csv", FAR_APART);
    let o = otfair(&["sweep", "-i", s(&input), "--thetas", "0,0.5,1", "--grid-size", "2", "--threshold", "5.5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let w2: Vec<f64> = column(&text, "group_fairness_w2").iter().map(|v| v.parse().unwrap()).collect();
    assert_eq!(w2[0], 10.0);
    assert_eq!(w2[1], 5.0);
    assert!(w2[2] <= 1e-9);
    assert_eq!(column(&text, "selection_ratio"), ["0", "0", "1"]);
    assert_eq!(column(&text, "individual_fairness_error")[0], "0");
}

#[test]
fn audit_and_barycenter() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "in.csv", FOUR_ROWS);
    let o = otfair(&["audit", "-i", s(&input), "--grid-size", "2", "--top-k", "2"]);
    assert!(o.status.success());
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["group_fairness_w2"], 0.0);
    assert_eq!(r["selection"]["ratio"], 1.0);
    assert_eq!(r["grid_size"], 2);
    assert_eq!(r["warnings"].as_array().unwrap().len(), 2);

    let o = otfair(&["barycenter", "-i", s(&input), "--grid-size", "2"]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "rank,quantile\n0.25,1\n0.75,3\n");
}

#[test]
fn verify_contract() {
    let dir = TempDir::new().unwrap();
    let tiny = write(dir.path(), "tiny.csv", "group,score\nA,0\nA,2\nB,2\nB,4\n");
    let o = otfair(&["verify", "-i", s(&tiny)]);
    let out = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{out}{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.lines().all(|l| l.starts_with("PASS")), "{out}");
    assert!(out.contains("barycenter-vs-coordinate-search"));

    let o = otfair(&["verify", "-i", s(&tiny), "--corrupt-barycenter"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL barycenter-vs-coordinate-search"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("barycenter-vs-coordinate-search"));

    let mut big = String::from("group,score\n");
    for i in 0..50 {
        big.push_str(&format!("{},{i}\n", if i % 2 == 0 { "A" } else { "B" }));
    }
    let big = write(dir.path(), "big.csv", &big);
    assert_eq!(otfair(&["verify", "-i", s(&big)]).status.code(), Some(2));
}

#[test]
fn vector_scores_end_to_end() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "run.toml",
        r#"
score_columns = ["x", "y"]
seed = 9
min_group_size = 10

[synth]
attributes = ["group"]
[[synth.groups]]
key = ["A"]
size = 40
dims = [{ kind = "gaussian", mean = 0.3, sd = 0.1 }, { kind = "uniform", lo = 0.0, hi = 1.0 }]
[[synth.groups]]
key = ["B"]
size = 30
dims = [{ kind = "gaussian", mean = 0.7, sd = 0.1 }, { kind = "beta", a = 2.0, b = 2.0 }]
"#,
    );
    let pop = dir.path().join("pop.csv");
    assert!(otfair(&["synth", "-c", s(&cfg), "-o", s(&pop)]).status.success());
    let text = fs::read_to_string(&pop).unwrap();
    assert!(text.starts_with("id,group,x,y\nA-0,A,"));
    assert_eq!(text.lines().count(), 71);

    let o = otfair(&["transform", "-c", s(&cfg), "-i", s(&pop), "--theta", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.starts_with("id,group,x,y,fair_score_1,fair_score_2\n"));
    assert_eq!(column(&out, "fair_score_2").len(), 70);

    let o = otfair(&["barycenter", "-c", s(&cfg), "-i", s(&pop)]);
    assert!(o.status.success());
    let bary = String::from_utf8(o.stdout).unwrap();
    let total: f64 = column(&bary, "mass").iter().map(|v| v.parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);

    let o = otfair(&["transform", "-c", s(&cfg), "-i", s(&pop), "--max-iter", "2"]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn synth_default_scenario() {
    let a = otfair(&["synth"]);
    let b = otfair(&["synth", "--seed", "42"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert_eq!(text.lines().count(), 2001);
    assert!(text.starts_with("id,group,score\nA-0,A,"));
}
