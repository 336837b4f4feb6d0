use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use momask_cli::commands::TokenFile;
use momask_cli::manifest::RunManifest;
use momask_core::motion::{synth_motion, JointLayout, MotionSequence, SynthKind};
use serde_json::Value;

const SMALL: &str = r#"{"seed": 3, "rvq": {"codebook_size": 16, "num_residual_layers": 2}, "tokenizer": {"epochs": 2, "batch_size": 64}}"#;

fn momask(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_momask")).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = momask(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Synth → tokenize → train-predictor under `root`, returning the models dir.
fn pipeline(root: &Path, config: &str) -> PathBuf {
    let cfg = root.join("cfg.json");
    std::fs::write(&cfg, config).unwrap();
    let (syn, tok, models) = (root.join("syn"), root.join("tok"), root.join("models"));
    ok(&["synth", "--config", p(&cfg), "--out", p(&syn), "--count", "12", "--frames", "32"]);
    ok(&[
        "tokenize",
        "--config",
        p(&cfg),
        "--motions",
        p(&syn.join("motions")),
        "--labels",
        p(&syn.join("labels.json")),
        "--out",
        p(&tok),
    ]);
    ok(&["train-predictor", "--config", p(&cfg), "--tokens", p(&tok), "--out", p(&models)]);
    models
}

#[test]
fn unknown_config_key_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"rvq": {"codebooksize": 3}}"#).unwrap();
    let out = momask(&["synth", "--config", p(&cfg), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_log_level_is_a_config_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_momask"))
        .args(["synth", "--out", "/nonexistent"])
        .env("MOMASK_LOG", "verbose")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn non_motion_file_is_a_data_error_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let motions = dir.path().join("m");
    std::fs::create_dir(&motions).unwrap();
    std::fs::write(motions.join("readme.txt"), "hello").unwrap();
    let out = momask(&["tokenize", "--motions", p(&motions), "--out", p(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("readme.txt"));
}

#[test]
fn missing_models_exit_with_model_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = momask(&["generate", "--models", p(&dir.path().join("none")), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn bad_region_syntax_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = momask(&["generate", "--models", p(dir.path()), "--inpaint", "5-2", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_missing_ground_truth_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let seq = synth_motion(SynthKind::SineWalk, 16, 1).unwrap();
    let pred = dir.path().join("pred.mot");
    std::fs::write(&pred, {
        let mut b = Vec::new();
        seq.write_to(&mut b).unwrap();
        b
    })
    .unwrap();
    let gt = dir.path().join("absent.mot");
    let out = momask(&["eval", "--pred", p(&pred), "--gt", p(&gt), "--out", p(&dir.path().join("e"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.mot"));
}

#[test]
fn eval_self_comparison_and_flattened_cubic() {
    let dir = tempfile::tempdir().unwrap();
    let (pred, gt) = (dir.path().join("pred"), dir.path().join("gt"));
    std::fs::create_dir_all(&pred).unwrap();
    std::fs::create_dir_all(&gt).unwrap();
    let cubic = synth_motion(SynthKind::Cubic, 40, 2).unwrap();
    // same start and end, no jerk in between
    let first = cubic.frame(0).to_vec();
    let last = cubic.frame(cubic.len() - 1).to_vec();
    let flat: Vec<f64> = (0..cubic.len())
        .flat_map(|t| {
            let w = t as f64 / (cubic.len() - 1) as f64;
            first.iter().zip(&last).map(move |(a, b)| a + w * (b - a)).collect::<Vec<_>>()
        })
        .collect();
    let flat = MotionSequence::new(flat, cubic.fps(), JointLayout::toy_skeleton()).unwrap();
    let save = |s: &MotionSequence, path: PathBuf| {
        let mut b = Vec::new();
        s.write_to(&mut b).unwrap();
        std::fs::write(path, b).unwrap();
    };
    save(&cubic, gt.join("c.mot"));
    save(&cubic, pred.join("c.mot"));
    let same = dir.path().join("same");
    ok(&["eval", "--pred", p(&pred), "--gt", p(&gt), "--out", p(&same)]);
    let r = read_json(same.join("report.json"));
    assert_eq!(r["mpjpe_mm"], 0.0);
    assert_eq!(r["sjpe"], 0.0);
    assert!(r["fid"].as_f64().unwrap() < 1e-6);

    save(&flat, pred.join("c.mot"));
    let flat_out = dir.path().join("flat");
    ok(&["eval", "--pred", p(&pred), "--gt", p(&gt), "--out", p(&flat_out)]);
    let r = read_json(flat_out.join("report.json"));
    assert!(r["sjpe_static"].as_f64().unwrap() > r["sjpe_noise"].as_f64().unwrap());
    let trace = std::fs::read_to_string(flat_out.join("traces/c_sjpe.csv")).unwrap();
    assert_eq!(trace.lines().next(), Some("frame,gt_jerk,pred_jerk,term,sign"));
    assert_eq!(trace.lines().count(), 1 + 40 - 3);
}

#[test]
fn more_residual_layers_do_not_raise_final_mse() {
    let dir = tempfile::tempdir().unwrap();
    let syn = dir.path().join("syn");
    ok(&["synth", "--out", p(&syn), "--count", "12", "--frames", "32", "--kind", "random_smooth"]);
    let mut mse = Vec::new();
    for v in [0, 2] {
        let cfg = dir.path().join(format!("v{v}.json"));
        std::fs::write(
            &cfg,
            format!(r#"{{"seed": 1, "rvq": {{"codebook_size": 16, "num_residual_layers": {v}}}, "tokenizer": {{"epochs": 3}}}}"#),
        )
        .unwrap();
        let out = dir.path().join(format!("tok{v}"));
        ok(&["tokenize", "--config", p(&cfg), "--motions", p(&syn.join("motions")), "--out", p(&out)]);
        let m: RunManifest = serde_json::from_value(read_json(out.join("manifest.json"))).unwrap();
        mse.push(m.details["final_mse"].as_f64().unwrap());
    }
    assert!(mse[1] <= mse[0], "{mse:?}");
}

#[test]
fn generate_contracts() {
    let dir = tempfile::tempdir().unwrap();
    let models = pipeline(dir.path(), SMALL);
    let run = |name: &str, extra: &[&str]| -> RunManifest {
        let out = dir.path().join(name);
        let mut args = vec!["generate", "--models", p(&models), "--label", "1", "--length", "10", "--seed", "4"];
        args.extend_from_slice(extra);
        args.extend_from_slice(&["--out", p(&out)]);
        ok(&args);
        serde_json::from_value(read_json(out.join("manifest.json"))).unwrap()
    };

    let s0 = run("s0", &["--cfg", "0"]);
    let cond = run("cond", &["--conditional-only"]);
    assert_eq!(s0.outputs, cond.outputs);

    let base = run("base", &[]);
    assert_eq!(base.details["predictor_passes"], 10 + 2);
    let log = std::fs::read_to_string(dir.path().join("base/decode_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 11);

    let input = dir.path().join("base/tokens.json");
    run("inp", &["--input", p(&input), "--inpaint", "2:5"]);
    let before: TokenFile = serde_json::from_value(read_json(input.clone())).unwrap();
    let after: TokenFile = serde_json::from_value(read_json(dir.path().join("inp/tokens.json"))).unwrap();
    for layer in 0..before.grid.num_layers() {
        let (a, b) = (before.grid.row(layer), after.grid.row(layer));
        assert_eq!(a[..2], b[..2]);
        assert_eq!(a[5..], b[5..]);
    }
}

#[test]
fn plot_writes_one_svg_per_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csvs = dir.path().join("csv");
    std::fs::create_dir(&csvs).unwrap();
    std::fs::write(csvs.join("a.csv"), "x,y\n0,1\n1,2\n").unwrap();
    std::fs::write(csvs.join("b.csv"), "x,y,z\n0,1,3\n1,2,4\n").unwrap();
    let out = dir.path().join("plots");
    ok(&["plot", "--input", p(&csvs), "--out", p(&out)]);
    assert!(out.join("a.svg").is_file() && out.join("b.svg").is_file());
}
