use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn harmonic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_harmonic"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_one_transcript_per_trial() {
    let dir = tempfile::tempdir().unwrap();
    let o = harmonic(&["run", "--trials", "3", "--out", s(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let names: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(names.len(), 3);
    assert_eq!(stdout(&o).matches(": delivered in").count(), 3);
}

#[test]
fn replay_reproduces_the_recordings() {
    let dir = tempfile::tempdir().unwrap();
    let rec = fixtures().join("recordings");
    let o = harmonic(&[
        "run",
        "--agent",
        "llm",
        "--model",
        "fixture-b",
        "--condition",
        "ik",
        "--backend",
        "replay",
        "--recordings",
        s(&rec),
        "--out",
        s(dir.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut n = 0;
    for e in std::fs::read_dir(dir.path()).unwrap() {
        let p = e.unwrap().path();
        let original = std::fs::read(rec.join(p.file_name().unwrap())).unwrap();
        assert!(std::fs::read(&p).unwrap() == original, "{} differs", p.display());
        n += 1;
    }
    assert_eq!(n, 5);
}

#[test]
fn invalid_configurations_are_rejected_with_usage() {
    for args in [
        &["run", "--agent", "llm", "--backend", "synthetic", "--condition", "ke"][..],
        &["run", "--agent", "llm", "--model", "fixture-a", "--condition", "ke"],
        &[
            "run",
            "--agent",
            "llm",
            "--model",
            "fixture-a",
            "--condition",
            "ke",
            "--backend",
            "replay",
        ],
        &["run", "--model", "fixture-a"],
        &[
            "run",
            "--agent",
            "llm",
            "--model",
            "fixture-a",
            "--condition",
            "xx",
            "--backend",
            "synthetic",
        ],
    ] {
        let o = harmonic(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        let err = stderr(&o);
        assert!(err.starts_with("error:") && err.contains("--help"), "{args:?}: {err}");
    }
}

#[cfg(not(feature = "live"))]
#[test]
fn live_backend_needs_the_feature() {
    let o = harmonic(&[
        "run",
        "--agent",
        "llm",
        "--model",
        "m",
        "--condition",
        "ik",
        "--backend",
        "live",
        "--vendor",
        "openai",
        "--out",
        s(tempfile::tempdir().unwrap().path()),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--features live"), "{}", stderr(&o));
}

#[test]
fn eval_matches_the_golden_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = harmonic(&["eval", s(&fixtures().join("recordings")), "--out", s(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let golden = std::fs::read_to_string(fixtures().join("golden/report.txt")).unwrap();
    assert!(stdout(&o).starts_with(&golden));
    assert_eq!(std::fs::read_to_string(dir.path().join("report.txt")).unwrap(), golden);
    assert_eq!(
        std::fs::read_to_string(dir.path().join("report.json")).unwrap(),
        std::fs::read_to_string(fixtures().join("golden/report.json")).unwrap()
    );
}

#[test]
fn eval_names_the_corrupt_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(
        fixtures().join("labeled/k01-compliant.jsonl"),
        dir.path().join("good.jsonl"),
    )
    .unwrap();
    std::fs::write(dir.path().join("broken.jsonl"), "{not json\n").unwrap();
    let o = harmonic(&["eval", s(dir.path())]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("broken.jsonl"), "{}", stderr(&o));

    let empty = tempfile::tempdir().unwrap();
    assert!(!harmonic(&["eval", s(empty.path())]).status.success());
}

#[test]
fn inspect_filters_by_channel_and_tick() {
    let file = fixtures().join("labeled/k01-compliant.jsonl");
    let o = harmonic(&["inspect", s(&file), "--channel", "dialogue", "--tick", "0..10"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let events: Vec<&str> = out.lines().skip(1).collect();
    assert!(!events.is_empty());
    for line in &events {
        let (tick, rest) = line.trim_start().split_once(' ').unwrap();
        assert!(tick.parse::<u64>().unwrap() < 10, "{line}");
        assert!(rest.trim_start().starts_with("dialogue"), "{line}");
    }

    let o = harmonic(&["inspect", s(&file), "--tick", "100000..100001"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("no events"));

    assert_eq!(
        harmonic(&["inspect", s(&file), "--channel", "smell"]).status.code(),
        Some(2)
    );
}

#[test]
fn repl_answers_a_typed_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("session.jsonl");
    let mut child = Command::new(env!("CARGO_BIN_EXE_harmonic"))
        .args(["repl", "--pace-ms", "5", "--out", s(&out)])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"The engine is overheating.\n")
        .unwrap();
    let o = child.wait_with_output().unwrap();
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("pipe obstruction or a broken thermostat"), "{text}");
    let saved = std::fs::read_to_string(&out).unwrap();
    assert!(saved.contains("The engine is overheating."));
    assert!(saved.lines().last().unwrap().contains("\"trial-end\""), "{saved}");
}
