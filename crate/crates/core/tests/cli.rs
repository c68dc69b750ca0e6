use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use trusted::io::read_report;

fn trusted(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trusted"))
        .current_dir(dir)
        .args(args)
        .env_remove("TRUSTED_THREADS")
        .output()
        .expect("spawn trusted")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = trusted(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn small_synth(dir: &Path, sub: &str, extra: &[&str]) {
    let mut args = vec!["synth", "--per-class", "30", "--out-dir", sub];
    args.extend_from_slice(extra);
    ok(dir, &args);
}

#[test]
fn fit_score_eval_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_synth(d, "s", &[]);
    let train_bytes = std::fs::read(d.join("s/train.emb1")).unwrap();

    let fit = ok(d, &["fit", "--train", "s/train.emb1", "--n-proj", "100", "--out", "det.det1"]);
    assert!(fit.contains("class 0\t"), "{fit}");
    assert!(d.join("det.det1").exists());

    ok(d, &["score", "--detector", "det.det1", "--input", "s/train.emb1", "--out", "train.txt"]);
    let text = std::fs::read_to_string(d.join("train.txt")).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 90);
    for (i, row) in rows.iter().enumerate() {
        let fields: Vec<&str> = row.split('\t').collect();
        assert_eq!(fields[0], i.to_string());
        assert!(fields[2].parse::<f64>().unwrap().is_finite());
    }

    ok(d, &["score", "--detector", "det.det1", "--input", "s/test_in.emb1", "--out", "in.txt"]);
    ok(d, &["score", "--detector", "det.det1", "--input", "s/test_out.emb1", "--out", "out.txt"]);
    let printed = ok(d, &["eval", "--in-scores", "in.txt", "--out-scores", "out.txt", "--report", "r.toml"]);
    assert!(printed.starts_with("AUROC"), "{printed}");
    assert_eq!(printed.lines().count(), 5);
    let report = read_report(d.join("r.toml")).unwrap();
    assert_eq!((report.n_in, report.n_out), (90, 90));
    assert_eq!(report.tpr_target, 0.95);

    assert_eq!(std::fs::read(d.join("s/train.emb1")).unwrap(), train_bytes);
}

#[test]
fn score_is_repeatable() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_synth(d, "s", &[]);
    ok(d, &["fit", "--train", "s/train.emb1", "--n-proj", "50", "--out", "det.det1"]);
    ok(d, &["score", "--detector", "det.det1", "--input", "s/test_out.emb1", "--out", "a.txt"]);
    ok(d, &["score", "--detector", "det.det1", "--input", "s/test_out.emb1", "--out", "b.txt"]);
    assert_eq!(std::fs::read(d.join("a.txt")).unwrap(), std::fs::read(d.join("b.txt")).unwrap());
}

#[test]
fn aggregation_ignored_for_logit_scores() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_synth(d, "s", &[]);
    let out = trusted(d, &["fit", "--train", "s/train.emb1", "--score", "msp", "--agg", "cat", "--out", "m.det1"]);
    assert!(out.status.success());
    assert!(stderr(&out).contains("warning"), "{}", stderr(&out));
}

#[test]
fn missing_train_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = trusted(tmp.path(), &["fit", "--out", "x.det1"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("--train"));
    assert!(!tmp.path().join("x.det1").exists());
}

#[test]
fn invalid_flags_write_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_synth(d, "s", &[]);
    let out = trusted(d, &["fit", "--train", "s/train.emb1", "--n-proj", "0", "--out", "x.det1"]);
    assert!(!out.status.success());
    assert_eq!(stderr(&out).lines().count(), 1, "{}", stderr(&out));
    assert!(!d.join("x.det1").exists());

    let out = trusted(d, &["synth", "--sigma", "0", "--out-dir", "bad"]);
    assert!(!out.status.success());
    assert!(!d.join("bad").exists());

    let out = trusted(d, &["fit", "--train", "s/train.emb1", "--out", "s/train.emb1"]);
    assert!(!out.status.success());
}

#[test]
fn dimension_mismatch_names_both_files() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_synth(d, "s16", &[]);
    small_synth(d, "s8", &["--dim", "8"]);
    ok(d, &["fit", "--train", "s16/train.emb1", "--n-proj", "20", "--out", "det.det1"]);
    let out = trusted(d, &["score", "--detector", "det.det1", "--input", "s8/test_in.emb1", "--out", "x.txt"]);
    assert!(!out.status.success());
    let msg = stderr(&out);
    assert!(msg.contains("det.det1") && msg.contains("s8/test_in.emb1"), "{msg}");
    assert!(msg.contains("16") && msg.contains('8'), "{msg}");
    assert!(!d.join("x.txt").exists());
}

fn write_scores(path: &Path, scores: &[f64]) {
    let mut text = String::from("# index\tpredicted\tscore\n");
    for (i, s) in scores.iter().enumerate() {
        text.push_str(&format!("{i}\t0\t{s:.8e}\n"));
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn eval_edge_cases() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write_scores(&d.join("hi.txt"), &[0.9, 0.8, 0.7, 0.6]);
    write_scores(&d.join("lo.txt"), &[0.1, 0.2, 0.3]);

    let printed = ok(d, &["eval", "--in-scores", "hi.txt", "--out-scores", "lo.txt", "--report", "a.toml"]);
    assert!(printed.contains("AUROC     100.00"), "{printed}");
    assert!(printed.contains("FPR@95    0.00"), "{printed}");

    let printed = ok(d, &["eval", "--in-scores", "hi.txt", "--out-scores", "hi.txt", "--report", "b.toml"]);
    assert!(printed.contains("AUROC     50.00"), "{printed}");

    ok(d, &["eval", "--in-scores", "hi.txt", "--out-scores", "lo.txt", "--report", "c.toml", "--tpr", "0.8"]);
    let report = read_report(d.join("c.toml")).unwrap();
    assert_eq!(report.tpr_target, 0.8);
    assert_eq!(report.threshold_at_tpr, 0.3);

    std::fs::write(d.join("empty.txt"), "# index\tpredicted\tscore\n").unwrap();
    let out = trusted(d, &["eval", "--in-scores", "empty.txt", "--out-scores", "lo.txt", "--report", "e.toml"]);
    assert!(!out.status.success());
    assert!(!d.join("e.toml").exists());
}

#[test]
fn synth_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--seed", "7", "--out-dir", "a"]);
    ok(d, &["synth", "--seed", "7", "--out-dir", "b"]);
    for name in ["train.emb1", "test_in.emb1", "test_out.emb1"] {
        assert_eq!(std::fs::read(d.join("a").join(name)).unwrap(), std::fs::read(d.join("b").join(name)).unwrap());
    }
}

#[test]
fn quick_run_prints_the_table_in_budget() {
    let tmp = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let table = ok(tmp.path(), &["run", "--quick"]);
    assert!(start.elapsed() < Duration::from_secs(30));
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 12, "{table}");
    assert!(rows[2].starts_with("irw+pm"));
    assert!(rows[11].starts_with("energy"));
}
