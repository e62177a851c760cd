use std::path::Path;
use std::process::Command;

use tdtlab::corpus::{read_manifest, write_manifest, SegmentRecord};
use tdtlab_cli::{DecodedSegment, ExitCode};

fn tdtlab(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_tdtlab")).args(args).output().expect("binary runs")
}

fn code(args: &[&str]) -> i32 {
    tdtlab(args).status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&[]), ExitCode::Usage as i32);
    assert_eq!(code(&["frobnicate"]), ExitCode::Usage as i32);
    assert_eq!(code(&["decode", "a", "b", "c", "--decoder", "beam"]), ExitCode::Usage as i32);
    assert_eq!(code(&["--help"]), 0);
}

#[test]
fn missing_and_malformed_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.jsonl");
    assert_eq!(code(&["sentences", "/nonexistent/manifest.jsonl", s(&out)]), ExitCode::InputData as i32);
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"segment_id\": 3}\n").unwrap();
    assert_eq!(code(&["sentences", s(&bad), s(&out)]), ExitCode::InputData as i32);
}

#[test]
fn config_validation_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[synth]\nmin_words = 9\nmax_words = 2\n").unwrap();
    assert_eq!(code(&["gen-synth", s(&dir.path().join("d")), "--config", s(&cfg)]), ExitCode::Usage as i32);
    std::fs::write(&cfg, "[model]\nhidden = 3\n").unwrap();
    assert_eq!(code(&["gen-synth", s(&dir.path().join("d")), "--config", s(&cfg)]), ExitCode::Usage as i32);
    let manifest = dir.path().join("m.jsonl");
    write_manifest(&manifest, &[SegmentRecord::new("u", 0, "u-0000", 1.0, "A b.")]).unwrap();
    let out = dir.path().join("c.jsonl");
    assert_eq!(code(&["concat", s(&manifest), s(&out), "--max-dur=-1"]), ExitCode::Usage as i32);
}

#[test]
fn sentences_merges_split_record() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    let out = dir.path().join("merged").join("out.jsonl");
    write_manifest(
        &input,
        &[
            SegmentRecord::new("102-129232", 76, "102-129232-0076", 9.8, "What appears once, I have seen lightning,"),
            SegmentRecord::new("102-129232", 77, "102-129232-0077", 6.2, "which at once showed the hand of Jove."),
        ],
    )
    .unwrap();
    let o = tdtlab(&["sentences", s(&input), s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let recs = read_manifest(&out).unwrap();
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0].segment_id, "102-129232-0076_0077");
    assert!((recs[0].duration_sec - 16.0).abs() < 1e-12);
    assert!(out.parent().unwrap().join("sentences.config.json").exists());
}

#[test]
fn verify_losses_exits_0() {
    let o = tdtlab(&["verify", "losses"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.lines().count() >= 4);
    assert!(!text.contains("FAIL"));
}

#[test]
fn small_pipeline_runs_and_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    let p = |r: &str| dir.path().join(r);
    assert_eq!(code(&["gen-synth", s(&p("data")), "--utterances", "12", "--seed", "4"]), 0);
    assert_eq!(code(&["train", s(&p("data")), s(&p("run")), "--steps", "4"]), 0);
    for f in ["train.config.json", "loss_log.jsonl", "final.ckpt", "train_summary.json"] {
        assert!(p("run").join(f).exists(), "{f}");
    }
    let manifest = p("data").join("manifest.jsonl");
    let hyp = p("dec").join("tdt.jsonl");
    assert_eq!(code(&["decode", s(&p("run/final.ckpt")), s(&manifest), s(&hyp), "--decoder", "tdt"]), 0);
    let lines: Vec<DecodedSegment> = std::fs::read_to_string(&hyp)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), read_manifest(&manifest).unwrap().len());
    assert!(lines.iter().all(|l| l.frames_visited >= 1 && l.frames_visited <= l.num_frames));
    assert!(p("dec").join("tdt.effort.json").exists());
    assert!(p("dec").join("decode.config.json").exists());
    let report = p("score").join("wer.json");
    assert_eq!(code(&["score", s(&manifest), s(&hyp), s(&report), "--mode", "wer4"]), 0);
    assert!(p("score").join("score.config.json").exists());

    // the echoed config reproduces the run
    let again = p("run2");
    let echo = p("run").join("train.config.json");
    assert_eq!(code(&["train", s(&p("data")), s(&again), "--config", s(&echo)]), 0);
    assert_eq!(std::fs::read(p("run/final.ckpt")).unwrap(), std::fs::read(again.join("final.ckpt")).unwrap());
}

#[test]
fn score_rejects_missing_hypotheses() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.jsonl");
    write_manifest(&manifest, &[SegmentRecord::new("u", 0, "u-0000", 1.0, "A b.")]).unwrap();
    let hyp = dir.path().join("h.jsonl");
    std::fs::write(&hyp, "{\"segment_id\":\"other\",\"text\":\"a\"}\n").unwrap();
    let out = dir.path().join("r.json");
    assert_eq!(code(&["score", s(&manifest), s(&hyp), s(&out), "--mode", "wer4"]), ExitCode::InputData as i32);
}
