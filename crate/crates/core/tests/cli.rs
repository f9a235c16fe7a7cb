use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cosmix(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cosmix"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn synth(dir: &Path) {
    let o = cosmix(
        dir,
        &["synth", "--k", "3", "--docs-per-topic", "40", "--terms", "90", "--out", "c.jsonl", "--truth", "t.json"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn help_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&cosmix(dir.path(), &["--help"])), 0);
    assert_eq!(code(&cosmix(dir.path(), &["dynamic", "--help"])), 0);
    assert_eq!(code(&cosmix(dir.path(), &[])), 1);
    assert_eq!(code(&cosmix(dir.path(), &["fit", "--k", "3", "--k-range", "2-4"])), 1);
    let o = cosmix(dir.path(), &["fit", "--input", "c.jsonl", "--alpha", "1.5"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("[config]"));
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = cosmix(dir.path(), &["fit", "--input", "missing.jsonl", "--k", "2"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("[ingest]"));
    synth(dir.path());
    // the synthetic corpus has a single epoch
    let o = cosmix(dir.path(), &["dynamic", "--input", "c.jsonl", "--out", "d"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("[dynamic]"));
}

#[test]
fn collapse_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = String::new();
    for i in 0..20 {
        let text = if i % 2 == 0 { "alpha beta gamma" } else { "delta epsilon zeta" };
        s.push_str(&format!("{{\"doc_id\":{i},\"text\":\"{text}\",\"epoch\":null}}\n"));
    }
    fs::write(dir.path().join("two.jsonl"), s).unwrap();
    let o = cosmix(
        dir.path(),
        &["fit", "--input", "two.jsonl", "--k", "3", "--threshold", "0", "--lambda", "5", "--out", "z"],
    );
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("[fit]"));
}

#[test]
fn fit_writes_artifacts_and_report_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    fs::write(d.join("run.toml"), "inputs = [\"c.jsonl\"]\nk = 3\nentropy_threshold = 0.0\nlambda_k_range = [2, 5]\nseed = 3\n").unwrap();
    let o = cosmix(d, &["fit", "--config", "run.toml", "--out", "f"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "model.json",
        "posteriors.csv",
        "report.json",
        "balloons.csv",
        "run.json",
        "matrix.txt",
        "lambda.csv",
        "loglik_trace.csv",
    ] {
        assert!(d.join("f").join(f).exists(), "{f} missing");
    }
    let run: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("f/run.json")).unwrap()).unwrap();
    assert_eq!(run["config"]["seed"], 3);
    assert_eq!(run["summary"]["k"], 3);
    assert!(run["config"].get("output").is_none());
    let balloons = fs::read_to_string(d.join("f/balloons.csv")).unwrap();
    assert!(balloons.starts_with("cluster,x,y,size,cohesion\n"));
    assert_eq!(balloons.lines().count(), 4);

    let o = cosmix(d, &["report", "--model", "f/model.json", "--matrix", "f/matrix.txt", "--seed", "3", "--out", "r"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(d.join("r/report.json")).unwrap(), fs::read(d.join("f/report.json")).unwrap());
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    fs::write(d.join("run.toml"), "inputs = [\"c.jsonl\"]\nk = 3\nentropy_threshold = 0.0\nlambda = 4.0\nlambda_mode = \"fixed\"\n").unwrap();
    let o = cosmix(d, &["fit", "--config", "run.toml", "--k", "2", "--lambda", "6", "--out", "f"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let run: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("f/run.json")).unwrap()).unwrap();
    assert_eq!(run["summary"]["k"], 2);
    assert_eq!(run["summary"]["lambda"], 6.0);
}

#[test]
fn sweep_writes_criteria_table() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    let o = cosmix(
        d,
        &["sweep", "--input", "c.jsonl", "--k-range", "2-5", "--threshold", "0", "--lambda-k-range", "2-5", "--out", "s"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(d.join("s/criteria.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("k,nu,partial_loglik,lambda,aic,bic"));
    assert_eq!(lines.count(), 4);
    assert_eq!(code(&cosmix(d, &["sweep", "--input", "c.jsonl", "--k", "3"])), 1);
}

#[test]
fn prep_select_calibrate_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    let o = cosmix(d, &["prep", "--input", "c.jsonl", "--top-n", "40", "--out", "p"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(d.join("p/entropy_histogram.csv")).unwrap().starts_with("bin,count\n"));
    let o = cosmix(d, &["select", "--matrix", "p/raw_matrix.txt", "--top-n", "30", "--out", "sel.txt"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = cosmix(d, &["calibrate", "--matrix", "sel.txt", "--k-range", "2-4", "--out", "lambda.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(d.join("lambda.csv")).unwrap();
    assert!(csv.starts_with("k,lambda,skipped\n"));
    assert!(csv.lines().last().unwrap().starts_with("mean,"));
    // selection needs raw counts
    assert_eq!(code(&cosmix(d, &["select", "--matrix", "sel.txt", "--top-n", "5", "--out", "x.txt"])), 2);
}

#[test]
fn ingest_bibtex() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("refs.bib"),
        "@article{a, title={Mixture models}, year={1995}, abstract={We study mixture models of text.}}\n\
         @article{b, title={A Conversation with Someone}, year={1996}, abstract={An interview.}}\n",
    )
    .unwrap();
    let o = cosmix(d, &["ingest", "refs.bib", "--out", "c.jsonl"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let corpus = fs::read_to_string(d.join("c.jsonl")).unwrap();
    assert_eq!(corpus.lines().count(), 1);
    assert!(corpus.contains("mixture"));
}
