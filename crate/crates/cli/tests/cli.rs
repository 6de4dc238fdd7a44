//! Black-box tests of the `coremap` binary: exit codes, determinism, schema
//! rejection, and the full partition→place→train→simulate→report pipeline.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_coremap")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary should launch")
}

fn run_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(bin())
        .args(args)
        .env(key, value)
        .output()
        .expect("binary should launch")
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("coremap-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

const TOY_MODEL: &str = r#"{
  "layers": [
    {"id": "c1", "kind": "conv", "in_channels": 3,  "out_channels": 8,  "kernel": [3,3], "out": [16,16], "timesteps": 4},
    {"id": "c2", "kind": "conv", "in_channels": 8,  "out_channels": 8,  "kernel": [3,3], "out": [16,16], "timesteps": 4},
    {"id": "c3", "kind": "conv", "in_channels": 8,  "out_channels": 16, "kernel": [3,3], "out": [8,8],   "timesteps": 4, "skip_from": "c1"},
    {"id": "c4", "kind": "conv", "in_channels": 16, "out_channels": 16, "kernel": [3,3], "out": [8,8],   "timesteps": 4},
    {"id": "c5", "kind": "conv", "in_channels": 16, "out_channels": 32, "kernel": [3,3], "out": [4,4],   "timesteps": 4, "skip_from": "c3"},
    {"id": "c6", "kind": "conv", "in_channels": 32, "out_channels": 32, "kernel": [3,3], "out": [4,4],   "timesteps": 4},
    {"id": "c7", "kind": "conv", "in_channels": 32, "out_channels": 32, "kernel": [3,3], "out": [4,4],   "timesteps": 4},
    {"id": "fc", "kind": "fc",   "in_channels": 32, "out_channels": 10, "kernel": [1,1], "out": [1,1],   "timesteps": 4}
  ]
}"#;

fn write_toy_model(dir: &Path) -> PathBuf {
    let path = dir.join("toy.json");
    std::fs::write(&path, TOY_MODEL).unwrap();
    path
}

#[test]
fn end_to_end_pipeline_on_toy_model() {
    // partition an 8-layer toy model to 32 cores, place on 4x8, train,
    // simulate, and report; every command succeeds
    let dir = tmp_dir("e2e");
    let model = write_toy_model(&dir);
    let part = dir.join("part");
    let out = run(&[
        "partition",
        "--model",
        model.to_str().unwrap(),
        "--cores",
        "32",
        "--mode",
        "training",
        "--out",
        part.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let graph = part.join("taskgraph.json");

    for engine in ["zigzag", "snake", "random"] {
        let out = run(&[
            "place",
            "--graph",
            graph.to_str().unwrap(),
            "--mesh",
            "4x8",
            "--engine",
            engine,
            "--seed",
            "3",
            "--iters",
            "50",
            "--out",
            dir.join(engine).to_str().unwrap(),
        ]);
        assert!(
            out.status.success(),
            "{engine}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }

    let train_dir = dir.join("rl");
    let out = run(&[
        "train",
        "--graph",
        graph.to_str().unwrap(),
        "--mesh",
        "4x8",
        "--episodes",
        "5",
        "--batch",
        "16",
        "--seed",
        "1",
        "--out",
        train_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for artifact in [
        "placement.json",
        "checkpoint.json",
        "reward_curve.csv",
        "metrics.json",
    ] {
        assert!(train_dir.join(artifact).is_file(), "missing {artifact}");
    }

    let sim_dir = dir.join("sim");
    let out = run(&[
        "simulate",
        "--graph",
        graph.to_str().unwrap(),
        "--placement",
        train_dir.join("placement.json").to_str().unwrap(),
        "--pipeline",
        "fpdeep",
        "--batch",
        "8",
        "--out",
        sim_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for artifact in ["sim_result.json", "waveform.csv", "heatmap.csv"] {
        assert!(sim_dir.join(artifact).is_file(), "missing {artifact}");
    }

    let report = run(&["report", "--runs", dir.to_str().unwrap()]);
    assert!(report.status.success());
    let csv = String::from_utf8_lossy(&report.stdout);
    assert!(csv.lines().count() >= 6, "report too short:\n{csv}");
    assert!(csv.contains("zigzag") && csv.contains("rl"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn place_is_byte_identical_across_runs() {
    let dir = tmp_dir("det-place");
    let model = write_toy_model(&dir);
    let part = dir.join("part");
    assert!(run(&[
        "partition",
        "--model",
        model.to_str().unwrap(),
        "--cores",
        "10",
        "--out",
        part.to_str().unwrap()
    ])
    .status
    .success());
    let graph = part.join("taskgraph.json");
    for tag in ["a", "b"] {
        assert!(run(&[
            "place",
            "--graph",
            graph.to_str().unwrap(),
            "--mesh",
            "3x4",
            "--engine",
            "zigzag",
            "--out",
            dir.join(tag).to_str().unwrap()
        ])
        .status
        .success());
    }
    for artifact in ["placement.json", "metrics.json"] {
        let a = std::fs::read(dir.join("a").join(artifact)).unwrap();
        let b = std::fs::read(dir.join("b").join(artifact)).unwrap();
        assert_eq!(a, b, "{artifact} differs between identical runs");
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn report_shows_oracle_at_or_above_zero_reduction() {
    let dir = tmp_dir("report");
    let model = write_toy_model(&dir);
    let part = dir.join("part");
    assert!(run(&[
        "partition",
        "--model",
        model.to_str().unwrap(),
        "--cores",
        "8",
        "--out",
        part.to_str().unwrap()
    ])
    .status
    .success());
    let graph = part.join("taskgraph.json");
    let runs = dir.join("runs");
    std::fs::create_dir_all(&runs).unwrap();
    for engine in ["zigzag", "oracle"] {
        assert!(run(&[
            "place",
            "--graph",
            graph.to_str().unwrap(),
            "--mesh",
            "3x3",
            "--engine",
            engine,
            "--out",
            runs.join(engine).to_str().unwrap()
        ])
        .status
        .success());
    }
    let report_path = dir.join("report.csv");
    assert!(run(&[
        "report",
        "--runs",
        runs.to_str().unwrap(),
        "--out",
        report_path.to_str().unwrap()
    ])
    .status
    .success());
    let csv = std::fs::read_to_string(&report_path).unwrap();
    let oracle_row = csv
        .lines()
        .find(|l| l.starts_with("oracle,"))
        .expect("oracle row present");
    let reduction: f64 = oracle_row.split(',').nth(4).unwrap().parse().unwrap();
    assert!(reduction >= 0.0, "oracle reduction {reduction} < 0");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn exit_codes() {
    let dir = tmp_dir("codes");
    let model = write_toy_model(&dir);

    // usage: unknown flag
    let out = run(&["place", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));

    // usage: bad engine value
    let part = dir.join("part");
    assert!(run(&[
        "partition",
        "--model",
        model.to_str().unwrap(),
        "--cores",
        "8",
        "--out",
        part.to_str().unwrap()
    ])
    .status
    .success());
    let graph = part.join("taskgraph.json");
    let out = run(&[
        "place",
        "--graph",
        graph.to_str().unwrap(),
        "--mesh",
        "3x3",
        "--engine",
        "sorted",
        "--out",
        dir.join("x").to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    // validation: missing file
    let out = run(&[
        "place",
        "--graph",
        dir.join("missing.json").to_str().unwrap(),
        "--mesh",
        "3x3",
        "--engine",
        "zigzag",
        "--out",
        dir.join("y").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));

    // validation: mesh too small for the graph
    let out = run(&[
        "place",
        "--graph",
        graph.to_str().unwrap(),
        "--mesh",
        "2x2",
        "--engine",
        "zigzag",
        "--out",
        dir.join("z").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("mesh too small"), "stderr: {stderr}");

    // validation: schema violation names the missing field
    let bad = dir.join("bad.json");
    std::fs::write(
        &bad,
        r#"{"layers":[{"id":"a","kind":"conv","in_channels":3,"kernel":[3,3],"out":[8,8]}]}"#,
    )
    .unwrap();
    let out = run(&[
        "partition",
        "--model",
        bad.to_str().unwrap(),
        "--cores",
        "4",
        "--out",
        dir.join("w").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("out_channels"));

    // validation: infeasible core count
    let out = run(&[
        "partition",
        "--model",
        model.to_str().unwrap(),
        "--cores",
        "3",
        "--out",
        dir.join("v").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn hardware_profile_env_var_applies() {
    let dir = tmp_dir("hwenv");
    let model = write_toy_model(&dir);
    let profile = dir.join("hw.json");
    std::fs::write(
        &profile,
        r#"{"sram_bytes_per_core": 65536, "offchip_bandwidth": 4}"#,
    )
    .unwrap();
    let part = dir.join("part");
    let out = run_env(
        &[
            "partition",
            "--model",
            model.to_str().unwrap(),
            "--cores",
            "8",
            "--out",
            part.to_str().unwrap(),
        ],
        "COREMAP_HW_PROFILE",
        profile.to_str().unwrap(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let graph: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(part.join("taskgraph.json")).unwrap())
            .unwrap();
    assert_eq!(graph["hardware"]["sram_bytes_per_core"], 65536);
    assert_eq!(graph["hardware"]["offchip_bandwidth"], 4);
    // CLI flag outranks the env profile
    let part2 = dir.join("part2");
    let out = run_env(
        &[
            "partition",
            "--model",
            model.to_str().unwrap(),
            "--cores",
            "8",
            "--sram-bytes",
            "131072",
            "--out",
            part2.to_str().unwrap(),
        ],
        "COREMAP_HW_PROFILE",
        profile.to_str().unwrap(),
    );
    assert!(out.status.success());
    let graph: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(part2.join("taskgraph.json")).unwrap())
            .unwrap();
    assert_eq!(graph["hardware"]["sram_bytes_per_core"], 131072);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn zero_episode_budget_warns_and_emits_zigzag() {
    let dir = tmp_dir("budget0");
    let model = write_toy_model(&dir);
    let part = dir.join("part");
    assert!(run(&[
        "partition",
        "--model",
        model.to_str().unwrap(),
        "--cores",
        "8",
        "--out",
        part.to_str().unwrap()
    ])
    .status
    .success());
    let out = run(&[
        "train",
        "--graph",
        part.join("taskgraph.json").to_str().unwrap(),
        "--mesh",
        "3x3",
        "--episodes",
        "0",
        "--out",
        dir.join("rl").to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    let zz = dir.join("zz");
    assert!(run(&[
        "place",
        "--graph",
        part.join("taskgraph.json").to_str().unwrap(),
        "--mesh",
        "3x3",
        "--engine",
        "zigzag",
        "--out",
        zz.to_str().unwrap()
    ])
    .status
    .success());
    assert_eq!(
        std::fs::read(dir.join("rl").join("placement.json")).unwrap(),
        std::fs::read(zz.join("placement.json")).unwrap()
    );
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn manifest_written_everywhere() {
    let dir = tmp_dir("manifest");
    let model = write_toy_model(&dir);
    let part = dir.join("part");
    assert!(run(&[
        "partition",
        "--model",
        model.to_str().unwrap(),
        "--cores",
        "8",
        "--out",
        part.to_str().unwrap()
    ])
    .status
    .success());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(part.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["tool"], "coremap");
    assert_eq!(manifest["command"], "partition");
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 1);
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    std::fs::remove_dir_all(&dir).ok();
}
