use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sfr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sfr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, count: &str) {
    let o = sfr(&[
        "synth",
        "--out-dir",
        p(dir),
        "--count",
        count,
        "--seed",
        "9",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn full_pipeline_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "4");
    let frames = d.join("frames.sfrd");
    let ann = d.join("annotations.csv");
    let o = sfr(&[
        "encode",
        "--frames",
        p(&frames),
        "--annotations",
        p(&ann),
        "--out-dir",
        p(&d.join("enc")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = sfr(&[
        "roundtrip",
        "--frames",
        p(&frames),
        "--annotations",
        p(&ann),
        "--report",
        p(&d.join("rt.csv")),
        "--pred-out",
        p(&d.join("pred.csv")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = sfr(&[
        "eval",
        "--pred",
        p(&d.join("pred.csv")),
        "--gt",
        p(&ann),
        "--geometry",
        p(&d.join("geometry.csv")),
        "--out",
        p(&d.join("m.csv")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let metrics = fs::read_to_string(d.join("m.csv")).unwrap();
    assert!(metrics.starts_with("[per_joint]\njoint_id,mean_mm\n"));
    assert!(metrics.contains("[curve]\nthreshold_mm,fraction\n"));
}

#[test]
fn fit_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "1");
    let o = sfr(&[
        "fit",
        "--frames",
        p(&d.join("frames.sfrd")),
        "--annotations",
        p(&d.join("annotations.csv")),
        "--max-iters",
        "50",
        "--out-dir",
        p(&d.join("fit")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let trace = fs::read_to_string(d.join("fit/trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,L_uv,L_d,L_H,L_D,total\n"));
    assert_eq!(trace.lines().count(), 1 + 51);
    assert!(d.join("fit/decoded.csv").exists());
    assert!(d.join("fit/sfr/manifest.csv").exists());
}

#[test]
fn malformed_annotation_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "1");
    let ann = d.join("annotations.csv");
    let mut text = fs::read_to_string(&ann).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let header = lines[0].to_string();
    let first = lines[1].to_string();
    let bad = first.replacen(first.split(',').nth(2).unwrap(), "oops", 1);
    text = format!("{header}\n{first}\n{bad}\n");
    fs::write(&ann, text).unwrap();
    let o = sfr(&[
        "encode",
        "--frames",
        p(&d.join("frames.sfrd")),
        "--annotations",
        p(&ann),
        "--out-dir",
        p(&d.join("e")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains(":3:"), "{}", stderr(&o));
}

#[test]
fn empty_frames_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "1");
    let frames = d.join("empty.sfrd");
    fs::write(&frames, "SFRD1 64 0\n").unwrap();
    let o = sfr(&[
        "encode",
        "--frames",
        p(&frames),
        "--annotations",
        p(&d.join("annotations.csv")),
        "--out-dir",
        p(&d.join("e")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no frames"), "{}", stderr(&o));
}

#[test]
fn unknown_mode_is_a_usage_error() {
    let o = sfr(&[
        "fit",
        "--frames",
        "a",
        "--annotations",
        "b",
        "--out-dir",
        "c",
        "--mode",
        "supervised",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown fit mode"));
}

#[test]
fn gradcheck_zero_instances_fails() {
    let o = sfr(&["gradcheck", "--instances", "0"]);
    assert_eq!(o.status.code(), Some(1));
    let o = sfr(&["gradcheck", "--instances", "2", "--seed", "4"]);
    assert!(o.status.success());
    assert_eq!(
        o.stdout,
        sfr(&["gradcheck", "--instances", "2", "--seed", "4"]).stdout
    );
}

#[test]
fn eval_frame_count_mismatch_names_both_counts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "3");
    let ann = d.join("annotations.csv");
    let text = fs::read_to_string(&ann).unwrap();
    let kept: Vec<&str> = text.lines().filter(|l| !l.starts_with("2,")).collect();
    let pred = d.join("pred.csv");
    fs::write(&pred, kept.join("\n") + "\n").unwrap();
    let o = sfr(&[
        "eval",
        "--pred",
        p(&pred),
        "--gt",
        p(&ann),
        "--geometry",
        p(&d.join("geometry.csv")),
        "--out",
        p(&d.join("m.csv")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains('3') && e.contains('2'), "{e}");
}
