use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use offroad_core::net::load_checkpoint;
use offroad_core::provenance::file_sha256;
use offroad_core::sim::load_world;
use offroad_core::InputMode;

const TINY: &str = r#"
[world]
width_m = 16.0
height_m = 16.0

[collect]
episodes = 3
max_steps = 60

[model]
hidden = 16
action_embed = 4
conv_channels = [4, 8, 8, 8]

[train]
steps = 6
eval_interval = 3
eval_samples = 32

[planner]
candidates = 8
max_steps = 12

[eval]
episodes = 2
max_steps = 10
"#;

struct Sandbox {
    dir: tempfile::TempDir,
}

impl Sandbox {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_offroad"))
            .current_dir(self.dir.path())
            .env("OFFROAD_THREADS", "1")
            .arg("--config")
            .arg(self.path("tiny.toml"))
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> Output {
        let out = self.run(args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        out
    }

    /// gen-world, collect, label and train one model; returns the checkpoint.
    fn pipeline(&self, mode: &str) -> PathBuf {
        self.ok(&["gen-world", "--out", "train.world"]);
        self.ok(&["gen-world", "--test", "--out", "test.world"]);
        self.ok(&["collect", "--world", "train.world", "--out", "raw.data"]);
        self.ok(&["label", "--data", "raw.data", "--out", "labeled.data"]);
        let model = format!("{mode}.ckpt");
        self.ok(&["train", "--data", "labeled.data", "--mode", mode, "--out", &model]);
        self.path(&model)
    }
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn digest(p: &Path) -> String {
    file_sha256(p).unwrap()
}

#[test]
fn gen_world_is_reproducible() {
    let s = Sandbox::new();
    s.ok(&["gen-world", "--out", "a.world"]);
    s.ok(&["gen-world", "--out", "b.world"]);
    s.ok(&["--seed", "99", "gen-world", "--out", "c.world"]);
    let w = load_world(&s.path("a.world")).unwrap();
    assert_eq!(w.width_m(), 16.0);
    assert_eq!(digest(&s.path("a.world")), digest(&s.path("b.world")));
    assert_ne!(digest(&s.path("a.world")), digest(&s.path("c.world")));
    assert!(s.path("a.world.manifest").exists());
}

#[test]
fn help_exits_zero() {
    let s = Sandbox::new();
    assert!(s.run(&["--help"]).status.success());
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let s = Sandbox::new();
    std::fs::write(s.path("bad.toml"), "[train]\nlearnin_rate = 0.1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_offroad"))
        .args(["--config", s.path("bad.toml").to_str().unwrap(), "gen-world", "--out"])
        .arg(s.path("x.world"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("learnin_rate"), "{}", stderr(&out));
    assert!(!s.path("x.world").exists());
}

#[test]
fn out_of_range_value_is_a_usage_error() {
    let s = Sandbox::new();
    std::fs::write(s.path("bad.toml"), "[train]\nlearning_rate = -1.0\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_offroad"))
        .args(["--config", s.path("bad.toml").to_str().unwrap(), "gen-world", "--out"])
        .arg(s.path("x.world"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("learning_rate"), "{}", stderr(&out));
}

#[test]
fn missing_upstream_artifact_exits_two() {
    let s = Sandbox::new();
    let out = s.run(&["collect", "--world", "absent.world", "--out", "raw.data"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("absent.world"), "{}", stderr(&out));
}

#[test]
fn training_on_unlabeled_data_exits_two() {
    let s = Sandbox::new();
    s.ok(&["gen-world", "--out", "train.world"]);
    s.ok(&["collect", "--world", "train.world", "--out", "raw.data"]);
    let out = s.run(&["train", "--data", "raw.data", "--out", "m.ckpt"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("label"));
}

#[test]
fn ablation_is_recorded_in_checkpoint_and_manifest() {
    let s = Sandbox::new();
    let model = s.pipeline("ground_only");
    let ck = load_checkpoint(&model).unwrap();
    assert_eq!(ck.net.arch.mode, InputMode::GroundOnly);
    let manifest = std::fs::read_to_string(s.path("ground_only.ckpt.manifest")).unwrap();
    assert!(manifest.contains("ground_only"));
    assert!(manifest.contains(&digest(&s.path("labeled.data"))));
    assert!(s.path("ground_only.ckpt.curve.csv").exists());
}

#[test]
fn drive_writes_trace_and_plot() {
    let s = Sandbox::new();
    s.pipeline("fusion");
    s.ok(&["drive", "--world", "test.world", "--model", "fusion.ckpt", "--out", "trace.csv"]);
    let csv = std::fs::read_to_string(s.path("trace.csv")).unwrap();
    assert!(csv.lines().count() >= 2);
    let svg = std::fs::read_to_string(s.path("trace.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}

#[test]
fn modified_input_warns() {
    let s = Sandbox::new();
    s.ok(&["gen-world", "--out", "train.world"]);
    let out = s.ok(&["collect", "--world", "train.world", "--out", "raw.data"]);
    assert!(!stderr(&out).contains("warning"));
    s.ok(&["--seed", "5", "gen-world", "--out", "other.world"]);
    std::fs::copy(s.path("other.world"), s.path("train.world")).unwrap();
    let out = s.ok(&["collect", "--world", "train.world", "--out", "raw2.data"]);
    assert!(stderr(&out).contains("warning"), "{}", stderr(&out));
}

fn full_run(s: &Sandbox) -> Vec<(String, String)> {
    s.pipeline("fusion");
    s.ok(&["train", "--data", "labeled.data", "--mode", "ground_only", "--out", "ground.ckpt"]);
    s.ok(&[
        "eval", "--world", "test=test.world", "--model", "fusion.ckpt", "--model", "ground.ckpt", "--data", "labeled.data", "--out", "eval",
    ]);
    s.ok(&["report", "--in", "eval", "--world", "test=test.world", "--out", "plots"]);
    let mut files = Vec::new();
    for dir in [s.dir.path().to_path_buf(), s.path("eval"), s.path("plots")] {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_file() {
                files.push((p.strip_prefix(s.dir.path()).unwrap().display().to_string(), digest(&p)));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn full_pipeline_is_byte_identical() {
    let (a, b) = (Sandbox::new(), Sandbox::new());
    let (fa, fb) = (full_run(&a), full_run(&b));
    assert!(fa.iter().any(|(n, _)| n.ends_with("report.csv")));
    assert!(fa.iter().any(|(n, _)| n.starts_with("plots") && n.ends_with(".svg")));
    assert_eq!(fa, fb);
}
