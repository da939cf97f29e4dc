//! The `lmface` binary end to end on the smoke preset.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lmface::aam::{procedural_corpus, ProceduralConfig};
use lmface::io::{save_image, write_landmarks};
use lmface_cli::manifest::{RunManifest, StageStatus, MANIFEST_FILE};

fn preset() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets/smoke.json")
}

fn lmface(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lmface"))
        .args(args)
        .env_remove("LM_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn run_smoke(dir: &Path, extra: &[&str]) -> Output {
    let preset = preset();
    let mut args = vec![
        "run",
        "--config",
        preset.to_str().unwrap(),
        "--output-dir",
        dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    lmface(&args)
}

fn manifest(dir: &Path) -> RunManifest {
    RunManifest::read(dir).expect("manifest present")
}

#[test]
fn smoke_run_is_complete_resumable_and_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));

    let out = run_smoke(&a, &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let m = manifest(&a);
    let names: Vec<&str> = m.stages.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(
        names,
        [
            "fit-aam",
            "sample",
            "train-vae:conv-d8",
            "linearity",
            "decode",
            "separate",
            "traverse",
            "replicate"
        ]
    );
    for s in &m.stages {
        assert_eq!(s.status, StageStatus::Complete, "{}", s.name);
        for o in &s.outputs {
            assert!(!o.provisional && o.sha256.is_some(), "{}", o.path);
            assert!(a.join(&o.path).is_file(), "{}", o.path);
        }
    }
    let first = std::fs::read(a.join(MANIFEST_FILE)).unwrap();

    let again = run_smoke(&a, &[]);
    assert_eq!(code(&again), 0);
    assert!(
        stderr(&again).contains("0 stage(s) ran, 8 up to date"),
        "{}",
        stderr(&again)
    );
    assert_eq!(std::fs::read(a.join(MANIFEST_FILE)).unwrap(), first);

    let other = run_smoke(&b, &["--quiet"]);
    assert_eq!(code(&other), 0);
    assert!(stderr(&other).is_empty());
    assert_eq!(std::fs::read(b.join(MANIFEST_FILE)).unwrap(), first);
    for s in &m.stages {
        for o in &s.outputs {
            assert_eq!(
                std::fs::read(a.join(&o.path)).unwrap(),
                std::fs::read(b.join(&o.path)).unwrap(),
                "{}",
                o.path
            );
        }
    }

    // The report subcommand re-exports the linearity CSV verbatim.
    let csv = lmface(&["report", "--output-dir", a.to_str().unwrap()]);
    assert_eq!(code(&csv), 0);
    assert_eq!(
        csv.stdout,
        std::fs::read(a.join("reports/linearity.csv")).unwrap()
    );
}

#[test]
fn changed_settings_rerun_only_downstream_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(code(&run_smoke(dir, &["--experiments", "linearity"])), 0);
    let out = run_smoke(dir, &["--experiments", "linearity", "--epochs", "25"]);
    assert_eq!(code(&out), 0);
    let err = stderr(&out);
    assert!(err.contains("[fit-aam] up to date"), "{err}");
    assert!(err.contains("[sample] up to date"), "{err}");
    assert!(err.contains("[train-vae:conv-d8] running"), "{err}");
    assert!(err.contains("[linearity] running"), "{err}");

    // A tampered artifact invalidates its stage.
    std::fs::write(dir.join("reports/linearity.csv"), "edited").unwrap();
    let out = run_smoke(dir, &["--experiments", "linearity", "--epochs", "25"]);
    let err = stderr(&out);
    assert!(err.contains("[train-vae:conv-d8] up to date"), "{err}");
    assert!(err.contains("[linearity] running"), "{err}");
    assert!(std::fs::read_to_string(dir.join("reports/linearity.csv"))
        .unwrap()
        .starts_with("model,variant,"));
}

#[test]
fn missing_corpus_directory_is_a_config_error_with_no_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let out = run_smoke(
        &out_dir,
        &["--corpus-dir", tmp.path().join("nowhere").to_str().unwrap()],
    );
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(!out_dir.exists());
}

#[test]
fn seed_is_mandatory() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lmface(&[
        "fit-aam",
        "--output-dir",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("seed"));
    let missing = lmface(&[
        "run",
        "--config",
        tmp.path().join("absent.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&missing), 2);
}

#[test]
fn unwritable_report_path_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    assert_eq!(code(&run_smoke(&dir, &["--experiments", "linearity"])), 0);
    let blocker = tmp.path().join("blocker");
    std::fs::write(&blocker, "a file, not a directory").unwrap();
    let out = lmface(&[
        "report",
        "--output-dir",
        dir.to_str().unwrap(),
        "--format",
        "json",
        "--output",
        blocker.join("table.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

fn write_corpus(dir: &Path, frame: usize) {
    std::fs::create_dir_all(dir).unwrap();
    let corpus = procedural_corpus(&ProceduralConfig {
        n: 30,
        width: frame,
        height: frame,
        seed: 4,
        ..Default::default()
    })
    .unwrap();
    for (i, (img, lm)) in corpus.images.iter().zip(&corpus.landmarks).enumerate() {
        save_image(&dir.join(format!("face{i:03}.png")), img).unwrap();
        write_landmarks(&dir.join(format!("face{i:03}.pts")), lm).unwrap();
    }
}

#[test]
fn directory_corpus_feeds_the_teacher() {
    let tmp = tempfile::tempdir().unwrap();
    let faces = tmp.path().join("faces");
    write_corpus(&faces, 32);
    let out_dir = tmp.path().join("out");
    let out = lmface(&[
        "fit-aam",
        "--seed",
        "3",
        "--corpus-dir",
        faces.to_str().unwrap(),
        "--output-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let m = manifest(&out_dir);
    let stage = m.stage("fit-aam").unwrap();
    assert_eq!(stage.inputs.len(), 60);
    assert!(stage.inputs.iter().all(|a| a.sha256.is_some()));
}

#[test]
fn failing_stage_exits_one_and_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let faces = tmp.path().join("faces");
    write_corpus(&faces, 16);
    let out_dir = tmp.path().join("out");
    let out = lmface(&[
        "fit-aam",
        "--seed",
        "3",
        "--corpus-dir",
        faces.to_str().unwrap(),
        "--output-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    let m = manifest(&out_dir);
    let stage = m.stage("fit-aam").unwrap();
    assert_eq!(stage.status, StageStatus::Failed);
    assert!(stage.error.as_deref().unwrap().contains("frame"));
    assert!(stage.outputs.iter().all(|a| a.provisional));
}
