use driftwatch::imgcore::AffineTransform;
use driftwatch::simulator::presets::static_stack;
use serde_json::Value;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_driftwatch"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let sc = static_stack(8, 6, AffineTransform::IDENTITY, 1.0, 5);
        fs::write(
            dir.path().join("scenario.json"),
            serde_json::to_string_pretty(&sc).unwrap(),
        )
        .unwrap();
        fs::write(dir.path().join("config.json"), "{\n  \"seed\": 9\n}\n").unwrap();
        Self { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn s(&self, rel: &str) -> String {
        self.path(rel).display().to_string()
    }

    fn simulate(&self) -> PathBuf {
        let o = run(&[
            "simulate",
            "--scenario",
            &self.s("scenario.json"),
            "--out",
            &self.s("sim"),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        self.path("sim")
    }

    fn run_files(&self, frames: &Path, masks: &Path, out: &str, extra: &[&str]) -> Output {
        let mut args = vec![
            "run".to_string(),
            "--config".into(),
            self.s("config.json"),
            "--frames".into(),
            frames.display().to_string(),
            "--masks".into(),
            masks.display().to_string(),
            "--out".into(),
            self.s(out),
        ];
        args.extend(extra.iter().map(|s| s.to_string()));
        bin().args(&args).output().unwrap()
    }
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn version_prints_the_crate_version() {
    let o = run(&["version"]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        String::from_utf8_lossy(&o.stdout).trim(),
        format!("driftwatch {}", driftwatch::VERSION)
    );
}

#[test]
fn simulate_then_run_on_files() {
    let ws = Workspace::new();
    let sim = ws.simulate();
    let frames: Vec<_> = fs::read_dir(sim.join("frames")).unwrap().collect();
    assert_eq!(frames.len(), 8);
    for f in ["masks.jsonl", "ground_truth.json", "manifest.json"] {
        assert!(sim.join(f).is_file(), "{f}");
    }

    let o = ws.run_files(
        &sim.join("frames"),
        &sim.join("masks.jsonl"),
        "out",
        &["--annotate"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = ws.path("out");
    let s = summary(&out);
    assert_eq!(s["frames"], 8);
    assert_eq!(s["alerts"], 0);
    assert_eq!(s["confirmed_tracks"], 6);
    assert_eq!(s["seed"], 9);
    assert_eq!(fs::read_to_string(out.join("alerts.jsonl")).unwrap(), "");
    let residuals = fs::read_to_string(out.join("residuals.csv")).unwrap();
    assert!(residuals.starts_with("frame,track_id,mask_label,v_abs,v_common,v_rel,"));
    // tracks confirm on their third hit (frame 2), which already has a previous mask
    assert_eq!(residuals.lines().count(), 1 + 6 * 6);
    assert_eq!(
        fs::read_dir(out.join("frames_annotated")).unwrap().count(),
        8
    );
    assert!(out.join("gmc.csv").is_file() && out.join("tracks.csv").is_file());
}

#[test]
fn scenario_input_matches_file_input() {
    let ws = Workspace::new();
    let sim = ws.simulate();
    let o = ws.run_files(&sim.join("frames"), &sim.join("masks.jsonl"), "files", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(&[
        "run",
        "--config",
        &ws.s("config.json"),
        "--scenario",
        &ws.s("scenario.json"),
        "--out",
        &ws.s("direct"),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["residuals.csv", "alerts.jsonl", "tracks.csv", "gmc.csv"] {
        assert_eq!(
            fs::read(ws.path("files").join(f)).unwrap(),
            fs::read(ws.path("direct").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn seed_flag_overrides_config() {
    let ws = Workspace::new();
    let o = run(&[
        "run",
        "--config",
        &ws.s("config.json"),
        "--scenario",
        &ws.s("scenario.json"),
        "--out",
        &ws.s("o"),
        "--seed",
        "123",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(summary(&ws.path("o"))["seed"], 123);
}

#[test]
fn empty_frames_dir_is_a_config_error_without_outputs() {
    let ws = Workspace::new();
    fs::create_dir(ws.path("empty")).unwrap();
    fs::write(ws.path("masks.jsonl"), "").unwrap();
    let o = ws.run_files(&ws.path("empty"), &ws.path("masks.jsonl"), "out", &[]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("no frames"));
    assert!(!ws.path("out").exists());
}

#[test]
fn configuration_problems_exit_with_config_code() {
    let ws = Workspace::new();
    let cases: Vec<(Vec<String>, &str)> = vec![
        (
            vec![
                "run".into(),
                "--config".into(),
                ws.s("missing.json"),
                "--scenario".into(),
                ws.s("scenario.json"),
                "--out".into(),
                ws.s("o"),
            ],
            "cannot read config",
        ),
        (
            vec![
                "run".into(),
                "--config".into(),
                ws.s("config.json"),
                "--out".into(),
                ws.s("o"),
            ],
            "no input",
        ),
        (
            vec![
                "run".into(),
                "--config".into(),
                ws.s("config.json"),
                "--scenario".into(),
                ws.s("scenario.json"),
            ],
            "no output directory",
        ),
        (
            vec![
                "run".into(),
                "--config".into(),
                ws.s("config.json"),
                "--frames".into(),
                ws.s("x"),
                "--out".into(),
                ws.s("o"),
            ],
            "--masks",
        ),
        (
            vec![
                "run".into(),
                "--config".into(),
                ws.s("config.json"),
                "--scenario".into(),
                ws.s("nope.json"),
                "--out".into(),
                ws.s("o"),
            ],
            "cannot read scenario",
        ),
        (vec!["frobnicate".into()], "unrecognized subcommand"),
    ];
    for (args, needle) in cases {
        let o = bin().args(&args).output().unwrap();
        assert_eq!(code(&o), 2, "{args:?}: {}", stderr(&o));
        assert!(stderr(&o).contains(needle), "{args:?}: {}", stderr(&o));
    }
    assert!(!ws.path("o").exists());

    fs::write(
        ws.path("bad.json"),
        "{\n  \"seed\": 1,\n  \"classifier\": {\"window_w\": 0}\n}\n",
    )
    .unwrap();
    let o = run(&[
        "run",
        "--config",
        &ws.s("bad.json"),
        "--scenario",
        &ws.s("scenario.json"),
        "--out",
        &ws.s("o"),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("bad.json:3:"), "{}", stderr(&o));

    fs::write(ws.path("typo.json"), "{\"sede\": 1}").unwrap();
    let o = run(&[
        "run",
        "--config",
        &ws.s("typo.json"),
        "--scenario",
        &ws.s("scenario.json"),
        "--out",
        &ws.s("o"),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("sede"), "{}", stderr(&o));
}

#[test]
fn malformed_mask_record_is_a_data_error() {
    let ws = Workspace::new();
    let sim = ws.simulate();
    let masks = fs::read_to_string(sim.join("masks.jsonl")).unwrap();
    let mut lines: Vec<&str> = masks.lines().collect();
    lines[3] = "{\"frame_index\": 3, \"instances\": [";
    fs::write(ws.path("broken.jsonl"), lines.join("\n") + "\n").unwrap();
    let o = ws.run_files(&sim.join("frames"), &ws.path("broken.jsonl"), "out", &[]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("broken.jsonl:4:"), "{}", stderr(&o));
}

#[test]
fn corrupt_frame_is_a_data_error() {
    let ws = Workspace::new();
    let sim = ws.simulate();
    fs::write(
        sim.join("frames").join("000005.pgm"),
        b"P5\n352 264\n255\nshort",
    )
    .unwrap();
    let o = ws.run_files(&sim.join("frames"), &sim.join("masks.jsonl"), "out", &[]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("frame 5"), "{}", stderr(&o));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let ws = Workspace::new();
    fs::write(ws.path("taken"), "a file, not a directory").unwrap();
    let o = run(&[
        "run",
        "--config",
        &ws.s("config.json"),
        "--scenario",
        &ws.s("scenario.json"),
        "--out",
        &ws.s("taken"),
    ]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}
