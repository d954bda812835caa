use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use echoplan::checkpoint::{initial_checkpoint, load_manifest, save_checkpoint, DType};
use echoplan::cli::{EXIT_IO, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION};
use echoplan::dataset::tree_hash;
use echoplan::manifest::{file_hash, read_manifest};
use echoplan_core::closedloop::ClosedLoopReport;
use echoplan_core::metrics::OpenLoopReport;
use echoplan_core::trainer::{standard_arms, AblationRow, Architecture, TrainConfig};
use echoplan_core::GridSpec;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_echoplan"));
    c.env_remove("ECHOPLAN_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn tiny() -> TrainConfig {
    TrainConfig {
        grid: GridSpec {
            h: 8,
            w: 8,
            cell_size: 4.0,
        },
        channels: 8,
        tokens: 4,
        architecture: Architecture {
            encoder_hidden: 4,
            heads: 2,
            attn_layers: 1,
            mln_hidden: 6,
            planner_hidden: 8,
        },
        learning_rate: 1e-3,
        epochs: 1,
        max_steps: Some(3),
        ..TrainConfig::default()
    }
}

fn gen_tiny(out: &Path, seed: &str, split: &str) {
    let o = run(&[
        "gen-data", "--seed", seed, "--episodes", "4", "--grid-h", "8", "--grid-w", "8", "--cell-size", "4.0",
        "--split", split, "--out", p(out),
    ]);
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
}

fn write_config(dir: &Path, config: &TrainConfig) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_vec_pretty(config).unwrap()).unwrap();
    path
}

#[test]
fn gen_data_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["gen-data", "--seed", "1", "--episodes", "64", "--out", p(out)]);
        assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ha = tree_hash(&a.join("train")).unwrap();
    assert_eq!(ha, tree_hash(&b.join("train")).unwrap());
    assert_eq!(read_manifest(&a).unwrap().outputs, read_manifest(&b).unwrap().outputs);
    assert_eq!(read_manifest(&a).unwrap().outputs.len(), 128);
    assert_eq!(fs::read_dir(a.join("train")).unwrap().count(), 64);

    let before = fs::read(a.join("manifest.json")).unwrap();
    let o = run(&["gen-data", "--seed", "1", "--episodes", "64", "--out", p(&a)]);
    assert_eq!(code(&o), EXIT_OK);
    assert_eq!(fs::read(a.join("manifest.json")).unwrap(), before);
    assert_eq!(tree_hash(&a.join("train")).unwrap(), ha);

    let c = tmp.path().join("c");
    let o = run(&["gen-data", "--seed", "2", "--episodes", "64", "--out", p(&c)]);
    assert_eq!(code(&o), EXIT_OK);
    assert_ne!(tree_hash(&c.join("train")).unwrap(), ha);
}

#[test]
fn eval_open_on_untrained_checkpoint_reports_finite_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen_tiny(&data, "3", "eval");
    let ck = tmp.path().join("ck");
    save_checkpoint(&initial_checkpoint(&tiny()), &ck, DType::F64).unwrap();
    let out = tmp.path().join("eval");
    let o = run(&["eval-open", "--checkpoint", p(&ck), "--data", p(&data.join("eval")), "--out", p(&out)]);
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));

    let raw = fs::read(out.join("open_loop.json")).unwrap();
    let report: OpenLoopReport = serde_json::from_slice(&raw).unwrap();
    assert!(report.samples > 0);
    for row in [&report.final_max, &report.average] {
        assert!(row.l2.iter().chain(&row.collision_rate).all(|v| v.is_finite()));
        assert!(row.l2_avg.is_finite() && row.collision_avg.is_finite());
    }
    let text = fs::read_to_string(out.join("open_loop.txt")).unwrap();
    for col in ["L2 1s", "L2 2s", "L2 3s", "L2 Avg", "CR 1s", "CR Avg", "FINAL_MAX", "AVERAGE"] {
        assert!(text.contains(col), "missing {col}:\n{text}");
    }
    let dump = fs::read_to_string(out.join("trajectories.csv")).unwrap();
    assert!(dump.starts_with("episode_id,frame_idx,branch,step,x,y"));
    // three command branches and the ground truth, six waypoints each
    assert_eq!(dump.lines().count() - 1, report.samples * 4 * 6);
    let m = read_manifest(&out).unwrap();
    assert_eq!(m.outputs.len(), 3);
    assert_eq!(m.input_hashes[1], tree_hash(&data.join("eval")).unwrap());
}

#[test]
fn train_writes_checkpoint_and_log_and_honours_seed_override() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen_tiny(&data, "4", "train");
    let config = write_config(tmp.path(), &tiny());
    let out = tmp.path().join("run");
    let o = bin()
        .args(["train", "--config", p(&config), "--data", p(&data.join("train")), "--out", p(&out)])
        .env("ECHOPLAN_SEED", "11")
        .output()
        .unwrap();
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    let m = load_manifest(&out).unwrap();
    assert_eq!(m.config.seed, 11);
    assert_eq!(m.step, 3);
    let log = fs::read_to_string(out.join("loss_log.csv")).unwrap();
    assert!(log.starts_with("step,traj,futbev,curbev,total"));
    assert_eq!(log.lines().count(), 4);

    let out2 = tmp.path().join("run2");
    let o = bin()
        .args(["train", "--config", p(&config), "--data", p(&data.join("train")), "--out", p(&out2), "--seed", "11"])
        .env("ECHOPLAN_SEED", "99")
        .output()
        .unwrap();
    assert_eq!(code(&o), EXIT_OK);
    for f in ["tensors.ept", "checkpoint.json", "loss_log.csv"] {
        assert_eq!(file_hash(&out.join(f)).unwrap(), file_hash(&out2.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn ablate_rows_match_the_arm_sets() {
    let tmp = tempfile::tempdir().unwrap();
    let base = TrainConfig {
        max_steps: Some(1),
        ..tiny()
    };
    let grid = serde_json::json!({
        "base": base,
        "train": {"generated": {"seed": 5, "episodes": 2}},
        "eval": {"generated": {"seed": 6, "episodes": 1}},
        "tables": ["table2", "table3", "table4"],
    });
    let grid_path = tmp.path().join("tables234.json");
    fs::write(&grid_path, serde_json::to_vec_pretty(&grid).unwrap()).unwrap();
    let out = tmp.path().join("ablation");
    let o = run(&["ablate", p(&grid_path), "--workers", "2", "--out", p(&out)]);
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    let rows: Vec<AblationRow> = serde_json::from_slice(&fs::read(out.join("ablation.json")).unwrap()).unwrap();
    let arms = standard_arms(&base);
    assert_eq!(rows.len(), arms.len());
    for (r, a) in rows.iter().zip(&arms) {
        assert_eq!((&r.table, &r.label), (&a.table, &a.label));
        assert_eq!(r.key.tokens, a.config.tokens);
        assert_eq!((r.key.lambda_curbev, r.key.lambda_futbev), (a.config.lambda_curbev, a.config.lambda_futbev));
    }
    let text = fs::read_to_string(out.join("ablation.txt")).unwrap();
    assert_eq!(text.lines().count(), 2 + 2 * arms.len());

    let one = tmp.path().join("ablation1");
    let o = run(&["ablate", p(&grid_path), "--workers", "1", "--out", p(&one)]);
    assert_eq!(code(&o), EXIT_OK);
    assert_eq!(fs::read(out.join("ablation.json")).unwrap(), fs::read(one.join("ablation.json")).unwrap());
}

#[test]
fn eval_closed_oracle_succeeds_everywhere() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("closed");
    let o = run(&["eval-closed", "--oracle", "--out", p(&out)]);
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    let report: ClosedLoopReport = serde_json::from_slice(&fs::read(out.join("closed_loop.json")).unwrap()).unwrap();
    assert_eq!(report.runs.len(), 20);
    assert_eq!(report.success_rate, 100.0);
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("seed,scenario,step,ego_x,ego_y,ego_heading,wp1_x,wp1_y"));
    let steps: usize = report.runs.iter().map(|r| r.steps).sum();
    assert_eq!(trace.lines().count() - 1, steps);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    assert_eq!(code(&run(&[])), EXIT_USAGE);
    assert_eq!(code(&run(&["fly"])), EXIT_USAGE);
    assert_eq!(code(&run(&["gen-data", "--seed", "1", "--episodes", "2", "--bogus", "--out", p(&out)])), EXIT_USAGE);
    assert_eq!(code(&run(&["gen-data", "--seed", "x", "--episodes", "2", "--out", p(&out)])), EXIT_USAGE);
    assert_eq!(code(&run(&["--help"])), EXIT_OK);
    let o = run(&["fly"]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));

    let o = run(&["gen-data", "--seed", "1", "--episodes", "0", "--out", p(&out)]);
    assert_eq!(code(&o), EXIT_VALIDATION);
    assert!(String::from_utf8_lossy(&o.stderr).contains("episodes"));

    let data = tmp.path().join("data");
    gen_tiny(&data, "8", "train");
    let split = data.join("train");

    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"learning_rate": -1.0}"#).unwrap();
    let o = run(&["train", "--config", p(&bad), "--data", p(&split), "--out", p(&out)]);
    assert_eq!(code(&o), EXIT_VALIDATION);
    assert!(String::from_utf8_lossy(&o.stderr).contains("learning_rate"));

    fs::write(&bad, r#"{"learning_rat": 0.1}"#).unwrap();
    let o = run(&["train", "--config", p(&bad), "--data", p(&split), "--out", p(&out)]);
    assert_eq!(code(&o), EXIT_VALIDATION);
    assert!(String::from_utf8_lossy(&o.stderr).contains("learning_rat"));

    let missing = tmp.path().join("nope.json");
    let o = run(&["train", "--config", p(&missing), "--data", p(&split), "--out", p(&out)]);
    assert_eq!(code(&o), EXIT_IO);

    let o = bin()
        .args(["train", "--config", p(&write_config(tmp.path(), &tiny())), "--data", p(&split), "--out", p(&out)])
        .env("ECHOPLAN_SEED", "abc")
        .output()
        .unwrap();
    assert_eq!(code(&o), EXIT_VALIDATION);

    let exploding = TrainConfig {
        learning_rate: 1e300,
        max_steps: Some(4),
        ..tiny()
    };
    let o = run(&["train", "--config", p(&write_config(tmp.path(), &exploding)), "--data", p(&split), "--out", p(&out)]);
    assert_eq!(code(&o), EXIT_NUMERIC, "{}", String::from_utf8_lossy(&o.stderr));

    let o = run(&["eval-open", "--checkpoint", p(&tmp.path().join("none")), "--data", p(&split), "--out", p(&out)]);
    assert_eq!(code(&o), EXIT_IO);
}

#[test]
fn plot_reads_inputs_without_touching_them() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen_tiny(&data, "9", "train");
    let split = data.join("train");
    let run_dir = tmp.path().join("run");
    let config = write_config(tmp.path(), &tiny());
    assert_eq!(code(&run(&["train", "--config", p(&config), "--data", p(&split), "--out", p(&run_dir)])), EXIT_OK);
    let eval = tmp.path().join("eval");
    assert_eq!(
        code(&run(&["eval-open", "--checkpoint", p(&run_dir), "--data", p(&split), "--out", p(&eval)])),
        EXIT_OK
    );
    let closed = tmp.path().join("closed");
    assert_eq!(code(&run(&["eval-closed", "--oracle", "--out", p(&closed)])), EXIT_OK);

    let inputs = [
        run_dir.join("loss_log.csv"),
        eval.join("open_loop.json"),
        eval.join("trajectories.csv"),
        closed.join("trace.csv"),
        closed.join("closed_loop.json"),
    ];
    let before: Vec<String> = inputs.iter().map(|f| file_hash(f).unwrap()).collect();
    let plots = tmp.path().join("plots");
    let mut args = vec!["plot"];
    args.extend(inputs.iter().map(|f| p(f)));
    args.extend(["--out", p(&plots)]);
    let o = run(&args);
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    let after: Vec<String> = inputs.iter().map(|f| file_hash(f).unwrap()).collect();
    assert_eq!(before, after);

    let m = read_manifest(&plots).unwrap();
    assert_eq!(m.input_hashes, before);
    let svgs: Vec<_> = m.outputs.iter().filter(|o| o.path.ends_with(".svg")).collect();
    assert!(svgs.len() >= 5, "{svgs:?}");
    for o in &m.outputs {
        let body = fs::read_to_string(plots.join(&o.path)).unwrap();
        if o.path.ends_with(".svg") {
            assert!(body.starts_with("<svg") && body.trim_end().ends_with("</svg>"));
        } else {
            assert!(body.starts_with("series,x,y"));
        }
    }
    let loss_csv = fs::read_to_string(plots.join("00_loss_log.csv")).unwrap();
    assert_eq!(loss_csv.lines().count() - 1, 4 * 3);

    let o = run(&["plot", p(&config), "--out", p(&plots)]);
    assert_eq!(code(&o), EXIT_VALIDATION);
}

#[test]
fn shipped_configs_parse() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let desk: TrainConfig =
        serde_json::from_slice(&std::fs::read(root.join("desk.json")).unwrap()).unwrap();
    assert_eq!((desk.grid.h, desk.channels, desk.epochs), (16, 32, 10));
    let grid: echoplan::experiment::AblationGrid =
        serde_json::from_slice(&std::fs::read(root.join("tables234.json")).unwrap()).unwrap();
    grid.validate().unwrap();
    assert_eq!(grid.arms().len(), 9);
}
