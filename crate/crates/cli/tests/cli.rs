use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn echogan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_echogan"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn assert_ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

/// Trains a very small model on fixtures; returns the checkpoint path.
fn tiny_checkpoint(root: &Path) -> std::path::PathBuf {
    let data = root.join("data");
    let run = root.join("run");
    let config = root.join("tiny.toml");
    fs::write(
        &config,
        "[model]\nimage_size = 128\ngenerator_base_channels = 2\ndiscriminator_base_channels = 2\n\n\
         [train]\nbatch_size = 2\ntotal_iterations = 2\ncheckpoint_interval = 0\n\n[split]\ntest_count = 1\n",
    )
    .unwrap();
    assert_ok(&echogan(&["fixture", "--count", "4", "--size", "128", "--out", s(&data)]));
    assert_ok(&echogan(&[
        "train", "--config", s(&config), "--experiment", "c", "--data", s(&data), "--out", s(&run),
    ]));
    assert!(data.join("split.toml").is_file());
    run.join("experiment-c.ckpt")
}

#[test]
fn directory_mode_writes_one_image_per_mask() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = tiny_checkpoint(dir.path());
    let masks = dir.path().join("masks");
    fs::create_dir_all(&masks).unwrap();
    for (i, id) in ["fixture0001", "fixture0002", "fixture0003"].iter().enumerate() {
        let src = dir.path().join("data").join(id).join(format!("{id}_4CH_ED_gt.png"));
        fs::copy(src, masks.join(format!("drawn{i}.png"))).unwrap();
    }
    let out = dir.path().join("out");
    assert_ok(&echogan(&["generate", "--mask", s(&masks), "--checkpoint", s(&ckpt), "--out", s(&out)]));
    let mut names: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["drawn0.png", "drawn1.png", "drawn2.png"]);
    let img = image::open(out.join("drawn1.png")).unwrap();
    assert_eq!((img.width(), img.height()), (256, 256));
    assert_eq!(img.color(), image::ColorType::L8);
}

#[test]
fn missing_inputs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = echogan(&[
        "generate",
        "--mask",
        s(&dir.path().join("mask.png")),
        "--checkpoint",
        s(&dir.path().join("nothing.ckpt")),
        "--out",
        s(&dir.path().join("x.png")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn corrupt_checkpoint_is_a_plain_failure() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("bad.ckpt");
    fs::write(&ckpt, b"not a checkpoint").unwrap();
    let out = echogan(&["generate", "--mask", s(&ckpt), "--checkpoint", s(&ckpt), "--out", s(&dir.path().join("x.png"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn serve_refuses_to_start_without_models() {
    let dir = tempfile::tempdir().unwrap();
    let out = echogan(&["serve", "--models-dir", s(dir.path()), "--port", "0"]);
    assert!(!out.status.success());
    fs::write(dir.path().join("broken.ckpt"), b"junk").unwrap();
    let out = echogan(&["serve", "--models-dir", s(dir.path()), "--port", "0"]);
    assert!(!out.status.success());
}

#[test]
fn summary_and_config_print() {
    let out = echogan(&["summary"]);
    assert_ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("enc7") && text.contains("score"));
    let out = echogan(&["config", "--preset", "desk"]);
    assert_ok(&out);
    assert!(String::from_utf8(out.stdout).unwrap().contains("image_size = 128"));
}

#[test]
fn split_command_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_ok(&echogan(&["fixture", "--count", "5", "--size", "32", "--out", s(&data)]));
    let manifest = dir.path().join("split.toml");
    assert_ok(&echogan(&["split", "--data", s(&data), "--out", s(&manifest), "--test-count", "2"]));
    let text = fs::read_to_string(&manifest).unwrap();
    assert!(text.contains("test_ids") && text.contains("fixture0001"));
}
