use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_arranger-sim"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.toml"))
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_writes_a_checkable_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.txt");
    let csv = dir.path().join("logger.csv");
    let o = bin()
        .arg("run")
        .arg(scenario("full-n7-equivocate"))
        .args(["--seed", "5", "--transcript"])
        .arg(&t)
        .arg("--logger-csv")
        .arg(&csv)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("failing: none"));
    assert!(std::fs::read_to_string(&t).unwrap().starts_with("arranger-transcript 1\n"));
    assert!(csv.exists());

    let o = bin().arg("check").arg(&t).output().unwrap();
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("PASS ")).count(), 10);

    let o = bin().arg("check").arg(&t).args(["--property", "termination"]).output().unwrap();
    assert_eq!(stdout(&o).trim(), "PASS termination");
}

#[test]
fn check_reports_planted_violation_with_witness() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.txt");
    let o = bin()
        .arg("run")
        .arg(scenario("sabotage-conflict-post"))
        .arg("--transcript")
        .arg(&t)
        .output()
        .unwrap();
    assert!(o.status.success(), "outcome matches the scenario's expectation");
    let o = bin().arg("check").arg(&t).args(["--property", "unique-batch"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.starts_with("FAIL unique-batch"));
    assert!(out.lines().count() > 1, "witness events listed");
}

#[test]
fn same_seed_same_transcript_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<PathBuf> = (0..2).map(|i| dir.path().join(format!("{i}.txt"))).collect();
    for p in &paths {
        let o = bin()
            .arg("run")
            .arg(scenario("semi-n5-silent"))
            .args(["--seed", "9", "--transcript"])
            .arg(p)
            .output()
            .unwrap();
        assert!(o.status.success());
    }
    assert_eq!(std::fs::read(&paths[0]).unwrap(), std::fs::read(&paths[1]).unwrap());
}

#[test]
fn sweep_writes_csv_report() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["full-n4-honest", "sabotage-amnesia", "semi-seq-withhold"] {
        std::fs::copy(scenario(name), dir.path().join(format!("{name}.toml"))).unwrap();
    }
    let report = dir.path().join("sweep.csv");
    let o = bin()
        .arg("sweep")
        .arg(dir.path())
        .args(["--seeds", "2", "--report"])
        .arg(&report)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&report).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("scenario,seed,ok,expected,failing,end,ticks,accepted,latency_max,"));
    assert_eq!(lines.len(), 7);
    assert!(lines[1..].iter().all(|l| l.split(',').nth(2) == Some("true")));
}

#[test]
fn unexpected_outcome_sets_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("wrong.toml");
    let text = std::fs::read_to_string(scenario("sabotage-amnesia")).unwrap();
    std::fs::write(&path, text.replace("fail = [\"availability\"]", "fail = []")).unwrap();
    let o = bin().arg("run").arg(&path).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("expected: none"));
}

#[test]
fn bad_inputs_are_errors() {
    let o = bin().args(["run", "/nonexistent.toml"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.txt");
    std::fs::write(&t, "not a transcript\n").unwrap();
    let o = bin().arg("check").arg(&t).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = bin().args(["bench", "--suite", "nope"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bench_writes_report_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.csv");
    let plot = dir.path().join("plot.csv");
    let o = bin()
        .args(["bench", "--suite", "sign", "--duration-ms", "5", "--repetitions", "2", "--out"])
        .arg(&out)
        .arg("--plot")
        .arg(&plot)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("experiment,parameter,mean,std,unit\nsign,1,"));
    assert!(std::fs::read_to_string(&plot).unwrap().contains("signatures,sign,1,"));
}
