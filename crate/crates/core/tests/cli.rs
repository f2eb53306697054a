use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn evoconv(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evoconv"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_dir_sorted(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

fn toy(dir: &Path, seed: &str) -> Output {
    evoconv(
        &[
            "make-toy-corpus",
            "--speakers",
            "1",
            "--utterances",
            "2",
            "--seed",
            seed,
            "--out",
            "toy",
        ],
        dir,
    )
}

#[test]
fn help_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&evoconv(&["--help"], dir.path())), 0);
    assert_eq!(code(&evoconv(&["frobnicate"], dir.path())), 1);
    assert_eq!(code(&evoconv(&["convert"], dir.path())), 1);
}

#[test]
fn toy_corpus_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(code(&toy(a.path(), "5")), 0);
    assert_eq!(code(&toy(b.path(), "5")), 0);
    let (fa, fb) = (
        read_dir_sorted(&a.path().join("toy")),
        read_dir_sorted(&b.path().join("toy")),
    );
    assert_eq!(fa.len(), 5);
    assert_eq!(fa, fb);
    let manifest = String::from_utf8(
        fa.iter()
            .find(|(p, _)| p.ends_with("manifest.tsv"))
            .unwrap()
            .1
            .clone(),
    )
    .unwrap();
    assert!(manifest.contains("# config.seed = 5"), "{manifest}");
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.toml"),
        "seed = 1\n[spectrum]\nlearning_rate = 0.1\n",
    )
    .unwrap();
    let o = evoconv(&["--config", "c.toml", "make-toy-corpus"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("learning_rate"), "{}", stderr(&o));
}

#[test]
fn missing_manifest_is_an_io_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = evoconv(&["extract", "--manifest", "nope.tsv"], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn convert_without_models_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&toy(dir.path(), "0")), 0);
    let o = evoconv(
        &[
            "convert",
            "--in",
            "toy/wav/s0_neutral_00.wav",
            "--target",
            "angry",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("missing model"), "{}", stderr(&o));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn damaged_checkpoint_is_reported_as_corruption() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&toy(dir.path(), "0")), 0);
    std::fs::write(dir.path().join("bad.evcf"), b"EVCF\x01trunc").unwrap();
    let o = evoconv(
        &[
            "convert",
            "--in",
            "toy/wav/s0_neutral_00.wav",
            "--source-emotion",
            "neutral",
            "--target",
            "angry",
            "--spectrum",
            "bad.evcf",
            "--prosody",
            "bad.evcf",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn evaluating_a_file_against_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&toy(dir.path(), "0")), 0);
    let x = "toy/wav/s0_angry_01.wav";
    let o = evoconv(&["evaluate", "--a", x, "--b", x, "--out", "ev"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let row = text
        .lines()
        .find(|l| l.starts_with("converted\t"))
        .expect(&text);
    let cols: Vec<f64> = row
        .split('\t')
        .skip(3)
        .map(|c| c.parse().unwrap())
        .collect();
    assert_eq!(cols, vec![0.0, 0.0, 1.0, 0.0], "{row}");
    assert!(text.contains("input_hash"));
    assert_eq!(
        std::fs::read_to_string(dir.path().join("ev/report.tsv")).unwrap(),
        text
    );
}

#[test]
fn short_run_through_every_command() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(
        p.join("quick.toml"),
        "seed = 2\nout = \"run\"\n[spectrum]\nsteps = 3\nbatch = 8\n[prosody]\nsteps = 3\nbatch = 8\n",
    )
    .unwrap();
    assert_eq!(code(&toy(p, "0")), 0);
    let run = |args: &[&str]| {
        let mut all = vec!["--config", "quick.toml"];
        all.extend_from_slice(args);
        let o = evoconv(&all, p);
        assert_eq!(code(&o), 0, "{args:?}: {}", stderr(&o));
        o
    };
    run(&["extract", "--manifest", "toy/manifest.tsv"]);
    assert_eq!(
        std::fs::read_dir(p.join("run/features")).unwrap().count(),
        4
    );
    run(&["train-spectrum", "--manifest", "run/manifest.tsv"]);
    run(&["train-prosody", "--manifest", "run/manifest.tsv"]);
    let ckpt = evoconv::signal_io::load_archive(p.join("run/spectrum.evcf")).unwrap();
    assert_eq!(ckpt.meta("config.spectrum.steps"), Some("3"));
    assert_eq!(ckpt.meta("config.command"), Some("train-spectrum"));
    run(&[
        "convert",
        "--in",
        "run/features/s0_neutral_00.evcf",
        "--target",
        "angry",
        "--spectrum",
        "run/spectrum.evcf",
        "--prosody",
        "run/prosody.evcf",
    ]);
    let out = evoconv::signal_io::load_archive(p.join("run/s0_neutral_00.angry.evcf")).unwrap();
    assert_eq!(out.meta("emotion"), Some("angry"));
    assert!(p.join("run/s0_neutral_00.angry.wav").exists());
    let o = run(&[
        "evaluate",
        "--a",
        "run/s0_neutral_00.angry.evcf",
        "--b",
        "run/features/s0_angry_00.evcf",
        "--source",
        "run/features/s0_neutral_00.evcf",
    ]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(
        text.lines().any(|l| l.starts_with("zero-effort\t")),
        "{text}"
    );
    assert!(text.lines().any(|l| l.starts_with("converted\t")), "{text}");
}
