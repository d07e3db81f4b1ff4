use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use mstl_cli::commands::{CHECKPOINT_FILE, HISTORY_FILE};
use mstl_cli::{cmd_eval, cmd_simulate, cmd_sweep, cmd_train, parse_factors, Algorithm, RunConfig};
use mstl_core::simworld::{FieldModel, WalkConfig};
use tempfile::TempDir;

const LOOP: [[f64; 2]; 5] = [[0.0, 0.0], [4.0, 0.0], [4.0, 3.0], [0.0, 3.0], [0.0, 0.0]];

/// World and five walks on disk, plus the simulated traces.
fn fixture() -> (TempDir, PathBuf, PathBuf, PathBuf) {
    let dir = TempDir::new().unwrap();
    let world = dir.path().join("world.json");
    FieldModel::random(3, 12, [-1.0, -1.0], [5.0, 4.0]).save(&world).unwrap();
    let walks: Vec<WalkConfig> = (0..5).map(|s| WalkConfig::new(LOOP.to_vec(), 1.5, 0.5, s)).collect();
    let walks_path = dir.path().join("walks.json");
    fs::write(&walks_path, serde_json::to_string(&walks).unwrap()).unwrap();
    let traces = dir.path().join("traces");
    cmd_simulate(&world, &walks_path, &traces).unwrap();
    (dir, world, walks_path, traces)
}

fn tiny_config(traces: &Path, window: usize) -> RunConfig {
    let text = format!(
        r#"{{
            "name": "tiny",
            "data": {{"traces": {:?}, "stride": 2}},
            "model": {{"kind": "MSTL", "tcns": 2, "channels": 3, "window": {window}, "hidden": 6}},
            "train": {{"learning_rate": 0.003, "batch_size": 16, "max_epochs": 6, "patience": 3}},
            "seed": 4
        }}"#,
        traces.display().to_string()
    );
    RunConfig::from_json(&text).unwrap()
}

fn mstl() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mstl"))
}

#[test]
fn simulate_writes_one_file_per_walk_reproducibly() {
    let (dir, world, walks, traces) = fixture();
    let mut files: Vec<_> = fs::read_dir(&traces).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert_eq!(files.len(), 5);

    let again = dir.path().join("again");
    let second = cmd_simulate(&world, &walks, &again).unwrap();
    assert_eq!(second.len(), 5);
    for f in &files {
        let twin = again.join(f.file_name().unwrap());
        assert_eq!(fs::read(f).unwrap(), fs::read(twin).unwrap(), "{}", f.display());
    }
}

#[test]
fn missing_world_names_the_path() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nowhere").join("world.json");
    let out = mstl()
        .args(["simulate", "--world"])
        .arg(&missing)
        .args(["--walks", "walks.json", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains(&missing.display().to_string()), "{stderr}");
}

#[test]
fn train_writes_checkpoint_and_consistent_history() {
    let (dir, _, _, traces) = fixture();
    let out = dir.path().join("run");
    let cfg = tiny_config(&traces, 4);
    let o = cmd_train(&cfg, &out).unwrap();
    assert!(o.warnings.is_empty(), "{:?}", o.warnings);
    let bytes = fs::read(out.join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(&bytes[..5], b"MSTL1");
    let h: serde_json::Value = serde_json::from_slice(&fs::read(out.join(HISTORY_FILE)).unwrap()).unwrap();
    let (best, stopped) = (h["best_epoch"].as_u64().unwrap(), h["stopped_epoch"].as_u64().unwrap());
    assert!(1 <= best && best <= stopped && stopped <= 6, "best {best} stopped {stopped}");
    assert_eq!(h["val_loss"].as_array().unwrap().len() as u64, stopped);
}

#[test]
fn non_power_of_two_window_warns() {
    let (dir, _, _, traces) = fixture();
    let o = cmd_train(&tiny_config(&traces, 6), &dir.path().join("run")).unwrap();
    assert!(!o.warnings.is_empty());
}

#[test]
fn dtw_eval_needs_no_checkpoint() {
    let (dir, _, _, traces) = fixture();
    let out = dir.path().join("eval");
    let o = cmd_eval(&tiny_config(&traces, 4), None, Algorithm::Dtw, &out).unwrap();
    assert_eq!(o.report.cdf.last().unwrap().1, 1.0);
    assert!(o.report.mean.is_finite());
    let csv = fs::read_to_string(&o.trajectory_path).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "idx,pred_x,pred_y,true_x,true_y");
    assert_eq!(csv.lines().count(), o.report.errors.len() + 1);
    assert!(cmd_eval(&tiny_config(&traces, 4), None, Algorithm::Neural(mstl_core::neuralnet::ModelKind::Mstl), &out).is_err());
}

#[test]
fn unknown_algorithm_lists_valid_names() {
    let out = mstl().args(["eval", "--preset", "S", "--algorithm", "KNN"]).output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    for name in Algorithm::NAMES {
        assert!(stderr.contains(name), "{stderr}");
    }
}

#[test]
fn sweep_rows_match_requested_factors() {
    let (dir, _, _, traces) = fixture();
    let cfg = tiny_config(&traces, 4);
    let run = dir.path().join("run");
    let ckpt = cmd_train(&cfg, &run).unwrap().checkpoint;
    let alg = Algorithm::Neural(mstl_core::neuralnet::ModelKind::Mstl);
    let (table, path) = cmd_sweep(&cfg, Some(&ckpt), alg, &parse_factors("1,2,4").unwrap(), &run).unwrap();
    let json: serde_json::Value = serde_json::from_slice(&fs::read(path).unwrap()).unwrap();
    let keys: Vec<&str> = json.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, ["1", "2", "4"]);

    let eval = cmd_eval(&cfg, Some(&ckpt), alg, &run).unwrap();
    assert_eq!(table.rows[0].1.errors, eval.report.errors);

    let out = mstl()
        .args(["sweep", "--algorithm", "DTW", "--factors", "1,9", "--preset", "S"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains('9'));
}
