use std::path::Path;
use std::process::{Command, Output};

use atelier_core::engine::session::parse_jsonl;

fn atelier(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_atelier")).args(args).current_dir(dir).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const ORACLE: &str = "\
cell arm_l forward high 0.5
cell leg_r back low 0.5
rmax 1
budget 2
";

#[test]
fn run_then_replay_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("oracle.txt"), ORACLE).unwrap();
    let out = atelier(&["run", "--oracle", "oracle.txt", "--iters", "4", "--seed", "3", "--out", "a.jsonl"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout(&out).matches("rating").count(), 5);
    let events = parse_jsonl(&std::fs::read_to_string(dir.path().join("a.jsonl")).unwrap()).unwrap();
    assert_eq!(events.iter().filter(|e| e.kind == "feedback").count(), 4);

    let replay = atelier(&["replay", "--log", "a.jsonl"], dir.path());
    assert!(replay.status.success(), "{}", stdout(&replay));
    assert!(stdout(&replay).starts_with("identical"));

    // an existing log is never overwritten
    let again = atelier(&["run", "--oracle", "oracle.txt", "--out", "a.jsonl"], dir.path());
    assert_eq!(again.status.code(), Some(2));

    let lint = atelier(&["lint", "a.jsonl"], dir.path());
    assert!(lint.status.success(), "{}", stdout(&lint));
}

#[test]
fn replay_notices_an_edited_log() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("oracle.txt"), ORACLE).unwrap();
    assert!(atelier(&["run", "--oracle", "oracle.txt", "--iters", "2", "--out", "a.jsonl"], dir.path()).status.success());
    let path = dir.path().join("a.jsonl");
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let at = lines.iter().position(|l| l.contains("\"kind\":\"generated\"")).unwrap();
    let edited = lines[at].replacen("\"exhausted\":false", "\"exhausted\":true", 1);
    assert_ne!(edited, lines[at]);
    let mut changed: Vec<String> = lines.iter().map(|l| l.to_string()).collect();
    changed[at] = edited;
    std::fs::write(&path, changed.join("\n") + "\n").unwrap();
    let replay = atelier(&["replay", "--log", "a.jsonl"], dir.path());
    assert_eq!(replay.status.code(), Some(1));
    assert!(stdout(&replay).contains(&format!("diverges at seq {}", at + 1)), "{}", stdout(&replay));
}

#[test]
fn lint_reports_score_violations() {
    let dir = tempfile::tempdir().unwrap();
    let good = "LABANSTR 1\nmeter 4/4\ntok start=0/1 dur=1/1 col=arm_l dir=forward lvl=high rot=none flex=none path=none face=front pos=center_center\ntok start=1/1 dur=1/1 col=arm_l dir=left lvl=middle rot=none flex=none path=none face=front pos=center_center\n";
    let bad = "LABANSTR 1\nmeter 4/4\ntok start=0/1 dur=2/1 col=arm_l dir=forward lvl=high rot=none flex=none path=none face=front pos=center_center\ntok start=1/1 dur=1/1 col=arm_l dir=left lvl=middle rot=none flex=none path=none face=front pos=center_center\n";
    std::fs::write(dir.path().join("good.lab"), good).unwrap();
    std::fs::write(dir.path().join("bad.lab"), bad).unwrap();
    let ok = atelier(&["lint", "good.lab"], dir.path());
    assert!(ok.status.success(), "{}{}", stdout(&ok), String::from_utf8_lossy(&ok.stderr));
    let fail = atelier(&["lint", "bad.lab"], dir.path());
    assert_eq!(fail.status.code(), Some(1), "{}", String::from_utf8_lossy(&fail.stderr));
    assert!(stdout(&fail).contains("overlap"), "{}", stdout(&fail));
}

#[test]
fn init_vocab_and_train_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    assert!(atelier(&["init-vocab", "vocab.txt"], dir.path()).status.success());
    let vocab = std::fs::read_to_string(dir.path().join("vocab.txt")).unwrap();
    assert_eq!(atelier_core::embedding::Vocab::parse(&vocab).unwrap(), atelier_core::embedding::Vocab::standard());

    std::fs::write(dir.path().join("cfg.txt"), "phase1_steps = 3\n").unwrap();
    let out = atelier(&["train", "--config", "cfg.txt", "--seed", "2", "--vocab", "vocab.txt", "--out", "t.jsonl"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("Multimodal") && text.contains("Generator"), "{text}");
    let events = parse_jsonl(&std::fs::read_to_string(dir.path().join("t.jsonl")).unwrap()).unwrap();
    assert_eq!(events.iter().filter(|e| e.kind == "phase1_trace").count(), 2);
}
