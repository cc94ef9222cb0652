//! CLI behavior: exit codes, config precedence, and output invariants.

use std::path::Path;
use std::process::Command;

use scenesound_core::checkpoint;
use scenesound_core::data::parse_event_annotations;
use scenesound_core::model::init_params;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_scenesound"))
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("small.conf");
    std::fs::write(
        &path,
        "sample_rate = 16000\nn_mels = 32\nshared_channels = 8,8,8\nshared_pool_freq = 4,4,2\n\
         gru_hidden = 6\nevent_hidden = 6\nscene_channels = 4,4\nscene_pool_time = 10,5\n\
         epochs = 2\nclip_seconds = 1\nfolds = 4\n",
    )
    .unwrap();
    path
}

fn make_corpus(dir: &Path, config: &Path) -> std::path::PathBuf {
    let corpus = dir.join("corpus");
    let out = bin()
        .args(["synth", "--config"])
        .arg(config)
        .args(["--clips-per-scene", "4", "--seed", "1", "--out"])
        .arg(&corpus)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    corpus
}

#[test]
fn unknown_subcommand_exits_1_with_usage() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.to_lowercase().contains("usage"), "{stderr}");
}

#[test]
fn unknown_flag_exits_1() {
    let out = bin().args(["train", "--no-such-flag", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_exits_0() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("scenesound"));
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, "not a directory").unwrap();
    let out = bin()
        .args(["synth", "--clips-per-scene", "4", "--out"])
        .arg(blocker.join("sub"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_corpus_is_a_validation_error() {
    let out = bin().args(["train", "--corpus", "/nonexistent/place"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not exist"));
}

#[test]
fn invalid_config_value_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.conf");
    std::fs::write(&cfg, "epochs = soon\n").unwrap();
    let out = bin().args(["train", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epochs"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let corpus = make_corpus(dir.path(), &config);

    // Config says epochs = 2; the flag forces 0, so training must return
    // the initial parameters and an empty history.
    let out_dir = dir.path().join("run");
    let out = bin()
        .args(["train", "--config"])
        .arg(&config)
        .args(["--epochs", "0", "--seed", "3", "--corpus"])
        .arg(&corpus)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let history = std::fs::read_to_string(out_dir.join("history.csv")).unwrap();
    let lines: Vec<&str> = history.lines().collect();
    assert!(lines[0].starts_with("# config_hash="));
    assert_eq!(lines[1], "epoch,E1,E2,E");
    assert_eq!(lines.len(), 2, "no epochs -> no rows: {history}");
}

#[test]
fn predictions_reparse_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let corpus = make_corpus(dir.path(), &config);
    let run = dir.path().join("run");
    let status = bin()
        .args(["train", "--config"])
        .arg(&config)
        .args(["--seed", "2", "--corpus"])
        .arg(&corpus)
        .arg("--out")
        .arg(&run)
        .status()
        .unwrap();
    assert!(status.success());

    let pred = dir.path().join("pred");
    let out = bin()
        .args(["predict", "--config"])
        .arg(&config)
        .args(["--threshold", "0.3", "--corpus"])
        .arg(&corpus)
        .arg("--checkpoint")
        .arg(run.join("model.ckpt"))
        .arg("--out")
        .arg(&pred)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let mut n_files = 0;
    let mut n_events = 0;
    for entry in std::fs::read_dir(pred.join("predictions")).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# config_hash="), "{path:?} lacks hash header");
        let events = parse_event_annotations(&text).unwrap_or_else(|e| panic!("{path:?}: {e}"));
        n_events += events.len();
        n_files += 1;
    }
    assert_eq!(n_files, 16);
    assert!(n_events > 0, "a 0.3 threshold on an undertrained model should fire somewhere");

    let scenes = std::fs::read_to_string(pred.join("scenes.tsv")).unwrap();
    assert_eq!(scenes.lines().filter(|l| !l.starts_with('#')).count(), 16);
}

#[test]
fn alpha_zero_training_leaves_scene_head_at_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let corpus = make_corpus(dir.path(), &config);
    let run = dir.path().join("run");
    let status = bin()
        .args(["train", "--config"])
        .arg(&config)
        .args(["--alpha", "0", "--seed", "6", "--epochs", "3", "--corpus"])
        .arg(&corpus)
        .arg("--out")
        .arg(&run)
        .status()
        .unwrap();
    assert!(status.success());

    let trained = checkpoint::load::<f64>(run.join("model.ckpt")).unwrap();
    // 1-second clips at the 20 ms hop give 50 frames.
    let fresh = init_params::<f64>(&trained.arch, 6, 50).unwrap();
    assert_eq!(trained.scene_out, fresh.scene_out);
    assert_eq!(trained.scene_conv, fresh.scene_conv);
    assert_ne!(trained.event_out, fresh.event_out, "event head must have trained");
}

#[test]
fn evaluate_writes_metric_rows() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let corpus = make_corpus(dir.path(), &config);
    let run = dir.path().join("run");
    assert!(bin()
        .args(["train", "--config"])
        .arg(&config)
        .args(["--seed", "2", "--corpus"])
        .arg(&corpus)
        .arg("--out")
        .arg(&run)
        .status()
        .unwrap()
        .success());

    let eval = dir.path().join("eval");
    let out = bin()
        .args(["evaluate", "--config"])
        .arg(&config)
        .args(["--corpus"])
        .arg(&corpus)
        .arg("--checkpoint")
        .arg(run.join("model.ckpt"))
        .arg("--out")
        .arg(&eval)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(eval.join("metrics.csv")).unwrap();
    assert!(csv.contains("event_f,overall,"));
    assert!(csv.contains("event_er,overall,"));
    assert!(csv.contains("scene_f,overall,"));
    assert!(csv.contains("event_f,event:tone_a,"));
    assert!(csv.contains("scene_f,scene:office,"));
}

#[test]
fn thread_cap_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let corpus = make_corpus(dir.path(), &config);
    let mut histories = Vec::new();
    for (label, threads) in [("t1", "1"), ("t2", "2")] {
        let out_dir = dir.path().join(label);
        let status = bin()
            .env("SCENESOUND_THREADS", threads)
            .args(["train", "--config"])
            .arg(&config)
            .args(["--seed", "5", "--corpus"])
            .arg(&corpus)
            .arg("--out")
            .arg(&out_dir)
            .status()
            .unwrap();
        assert!(status.success());
        histories.push(std::fs::read(out_dir.join("history.csv")).unwrap());
    }
    assert_eq!(histories[0], histories[1], "results must not depend on the thread count");
}
