//! The `echoplan` command line.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use echoplan_core::closedloop::{rollout, ClosedLoopReport, ModelPlanner, OraclePlanner, RolloutConfig};
use echoplan_core::metrics::{evaluate_open_loop, OpenLoopReport, Protocol};
use echoplan_core::trainer::{AblationRow, TrainConfig, Trainer};
use echoplan_core::{GridSpec, Scenario};

use crate::checkpoint::{config_hash, load_checkpoint, save_checkpoint, DType};
use crate::dataset::{generate_split, load_dataset, save_dataset, tree_hash};
use crate::error::FormatError;
use crate::experiment::{ablate_parallel, default_workers, AblationGrid, ExperimentError};
use crate::logs::{loss_rows, read_csv, trace_rows, trajectory_rows, write_csv, LossRow, TraceCsvRow, TrajectoryRow};
use crate::manifest::{is_up_to_date, output_entries, write_manifest, RunManifest};
use crate::plot::{bar_chart, line_chart, trajectory_overlay, Series};
use crate::report::{ablation_text, closed_loop_text, open_loop_text, read_json, write_json};

pub const SEED_ENV: &str = "ECHOPLAN_SEED";

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "echoplan", version, about = "Echo planner: data, training, evaluation and ablations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset split.
    GenData(GenDataArgs),
    /// Train from a JSON config and write a checkpoint plus loss log.
    Train(TrainArgs),
    /// Open-loop evaluation under both protocols.
    EvalOpen(EvalOpenArgs),
    /// Closed-loop rollout on the scenario suite.
    EvalClosed(EvalClosedArgs),
    /// Train and evaluate every arm of an ablation grid file.
    Ablate(AblateArgs),
    /// Render SVG charts and plot data from logs and reports.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub episodes: usize,
    /// Comma-separated scenario mix, cycled in order.
    #[arg(long, value_delimiter = ',', value_parser = parse_scenario,
          default_value = "STRAIGHT,LEFT_TURN,RIGHT_TURN,INTERSECTION_MIXED")]
    pub scenarios: Vec<Scenario>,
    #[arg(long, default_value = "train")]
    pub split: String,
    #[arg(long, default_value_t = GridSpec::default().h)]
    pub grid_h: usize,
    #[arg(long, default_value_t = GridSpec::default().w)]
    pub grid_w: usize,
    #[arg(long, default_value_t = GridSpec::default().cell_size)]
    pub cell_size: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training config (JSON); optional when resuming.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Split directory; defaults to the config's `dataset`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Continue from a checkpoint directory.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Overrides the config seed and the environment.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalOpenArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalClosedArgs {
    /// Checkpoint directory; required unless `--oracle`.
    #[arg(long, required_unless_present = "oracle")]
    pub checkpoint: Option<PathBuf>,
    /// Rollout config (JSON); defaults to the 20-scene suite.
    #[arg(long)]
    pub suite: Option<PathBuf>,
    /// Drive the reference route instead of a model.
    #[arg(long, conflicts_with = "checkpoint")]
    pub oracle: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Grid file (JSON) with base config, data sources and tables.
    pub grid: PathBuf,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Loss logs, trajectory dumps, closed-loop traces or JSON reports.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown scenario `{s}` (expected one of STRAIGHT, LEFT_TURN, RIGHT_TURN, INTERSECTION_MIXED)"))
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Core(#[from] echoplan_core::Error),
    #[error("{0}")]
    Validation(String),
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Format(e) => CliError::Format(e),
            ExperimentError::Core(e) => CliError::Core(e),
            e @ ExperimentError::Invalid { .. } => CliError::Validation(e.to_string()),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(echoplan_core::Error::NonFiniteLoss { .. }) => EXIT_NUMERIC,
            CliError::Core(_) | CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Format(FormatError::MissingFile(_) | FormatError::Io { .. }) => EXIT_IO,
            CliError::Format(_) => EXIT_VALIDATION,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code. Diagnostics go to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::EvalOpen(a) => eval_open(a),
        Command::EvalClosed(a) => eval_closed(a),
        Command::Ablate(a) => ablate(a),
        Command::Plot(a) => plot(a),
    }
}

fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Validation(format!("`{SEED_ENV}` must be an unsigned integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

/// Flag, then environment, then config file.
fn resolve_seed(flag: Option<u64>, config_seed: u64) -> CliResult<u64> {
    Ok(flag.or(env_seed()?).unwrap_or(config_seed))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| FormatError::io(dir, e))?;
    Ok(())
}

fn args_of(parts: &[(&str, String)]) -> Vec<String> {
    parts.iter().map(|(k, v)| format!("{k}={v}")).collect()
}

fn path_str(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

/// Runs `body` unless `out` already holds this invocation's outputs, then
/// records the manifest.
fn with_manifest(
    out: &Path,
    mut pending: RunManifest,
    body: impl FnOnce() -> CliResult<Vec<PathBuf>>,
) -> CliResult<()> {
    create_dir(out)?;
    if is_up_to_date(out, &pending) {
        eprintln!("{}: outputs up to date", out.display());
        return Ok(());
    }
    let start = Instant::now();
    let files = body()?;
    pending.outputs = output_entries(out, &files)?;
    pending.wall_time_s = start.elapsed().as_secs_f64();
    write_manifest(out, &pending)?;
    Ok(())
}

fn pending(command: &str, args: Vec<String>, config_hash: Option<String>, inputs: Vec<String>) -> RunManifest {
    RunManifest {
        command: command.to_string(),
        args,
        config_hash,
        input_hashes: inputs,
        outputs: Vec::new(),
        wall_time_s: 0.0,
    }
}

fn gen_data(a: GenDataArgs) -> CliResult<()> {
    let grid = GridSpec {
        h: a.grid_h,
        w: a.grid_w,
        cell_size: a.cell_size,
    };
    grid.validate()?;
    if a.episodes == 0 {
        return Err(CliError::Validation(String::from("`episodes` must be >= 1")));
    }
    if a.split.is_empty() || a.split.contains(['/', '\\']) || a.split == "." || a.split == ".." {
        return Err(CliError::Validation(format!("`split` must be a plain directory name, got `{}`", a.split)));
    }
    let scenarios: Vec<String> = a.scenarios.iter().map(|s| format!("{s:?}")).collect();
    let args = args_of(&[
        ("seed", a.seed.to_string()),
        ("episodes", a.episodes.to_string()),
        ("scenarios", scenarios.join(",")),
        ("split", a.split.clone()),
        ("grid", format!("{}x{}@{}", grid.h, grid.w, grid.cell_size)),
    ]);
    with_manifest(&a.out, pending("gen-data", args, None, Vec::new()), || {
        let split_dir = a.out.join(&a.split);
        if split_dir.exists() {
            fs::remove_dir_all(&split_dir).map_err(|e| FormatError::io(&split_dir, e))?;
        }
        let episodes = generate_split(a.seed, a.episodes, &a.scenarios, &grid);
        let files = save_dataset(&episodes, &a.out, &a.split)?;
        println!("{} episodes, dataset hash {}", episodes.len(), tree_hash(&split_dir)?);
        Ok(files)
    })
}

fn read_config(path: &Path) -> CliResult<TrainConfig> {
    let config: TrainConfig = read_json(path)?;
    config.validate()?;
    Ok(config)
}

fn train(a: TrainArgs) -> CliResult<()> {
    let (config, resume) = match (&a.config, &a.resume) {
        (_, Some(dir)) => {
            let ck = load_checkpoint(dir)?;
            (ck.config.clone(), Some(ck))
        }
        (Some(path), None) => {
            let mut c = read_config(path)?;
            c.seed = resolve_seed(a.seed, c.seed)?;
            (c, None)
        }
        (None, None) => return Err(CliError::Validation(String::from("`config` is required unless resuming"))),
    };
    let data = match (&a.data, &config.dataset) {
        (Some(d), _) => d.clone(),
        (None, Some(d)) => PathBuf::from(d),
        (None, None) => return Err(CliError::Validation(String::from("`dataset` is not set and no --data given"))),
    };
    let episodes = load_dataset(&data)?;
    let mut inputs = vec![tree_hash(&data)?];
    if let Some(dir) = &a.resume {
        inputs.push(crate::manifest::file_hash(&dir.join(crate::checkpoint::TENSORS_FILE))?);
    }
    let args = args_of(&[("data", path_str(&data)), ("seed", config.seed.to_string())]);
    with_manifest(&a.out, pending("train", args, Some(config_hash(&config)), inputs), || {
        let mut trainer = match resume {
            Some(ck) => Trainer::resume(ck, &episodes)?,
            None => Trainer::new(config.clone(), &episodes)?,
        };
        let total = trainer.total_steps();
        trainer.run_with(|step, b| {
            if step % 50 == 0 || step == total {
                eprintln!("step {step}/{total} total {:.5} traj {:.5}", b.total, b.traj);
            }
        })?;
        let ck = trainer.into_checkpoint();
        let mut files = save_checkpoint(&ck, &a.out, DType::F64)?;
        let log = a.out.join("loss_log.csv");
        write_csv(&log, &loss_rows(&ck.history))?;
        files.push(log);
        Ok(files)
    })
}

fn eval_open(a: EvalOpenArgs) -> CliResult<()> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let episodes = load_dataset(&a.data)?;
    if let Some(ep) = episodes.iter().find(|e| e.grid != ck.config.grid) {
        return Err(CliError::Validation(format!(
            "episode `{}` grid {:?} does not match checkpoint grid {:?}",
            ep.scenario_id, ep.grid, ck.config.grid
        )));
    }
    let inputs = vec![
        crate::manifest::file_hash(&a.checkpoint.join(crate::checkpoint::TENSORS_FILE))?,
        tree_hash(&a.data)?,
    ];
    let args = args_of(&[("checkpoint", path_str(&a.checkpoint)), ("data", path_str(&a.data))]);
    with_manifest(&a.out, pending("eval-open", args, Some(config_hash(&ck.config)), inputs), || {
        let eval = evaluate_open_loop(&ck.params, &episodes)?;
        let json = a.out.join("open_loop.json");
        write_json(&json, &eval.report)?;
        let text = a.out.join("open_loop.txt");
        let label = if ck.config.loss_weights().is_cycle_enabled() { "EchoP" } else { "Baseline" };
        let mut body = open_loop_text(label, &eval.report);
        body.push_str(&format!("temporal consistency: {:.6}\n", eval.temporal_consistency));
        fs::write(&text, &body).map_err(|e| FormatError::io(&text, e))?;
        print!("{body}");
        let dump = a.out.join("trajectories.csv");
        write_csv(&dump, &trajectory_rows(&ck.params, &episodes)?)?;
        Ok(vec![json, text, dump])
    })
}

fn eval_closed(a: EvalClosedArgs) -> CliResult<()> {
    let rollout_config = match &a.suite {
        Some(p) => read_json::<RolloutConfig>(p)?,
        None => RolloutConfig::default(),
    };
    rollout_config.validate()?;
    let ck = match &a.checkpoint {
        Some(dir) => Some(load_checkpoint(dir)?),
        None => None,
    };
    let mut inputs = Vec::new();
    if let Some(dir) = &a.checkpoint {
        inputs.push(crate::manifest::file_hash(&dir.join(crate::checkpoint::TENSORS_FILE))?);
    }
    let suite_json = serde_json::to_string(&rollout_config).expect("rollout config serializes");
    let args = args_of(&[
        ("planner", a.checkpoint.as_deref().map_or(String::from("oracle"), path_str)),
        ("suite", suite_json),
    ]);
    let hash = ck.as_ref().map(|c| config_hash(&c.config));
    with_manifest(&a.out, pending("eval-closed", args, hash, inputs), || {
        let (report, label): (ClosedLoopReport, &str) = match &ck {
            Some(ck) => (
                rollout(&mut ModelPlanner { params: &ck.params }, &ck.config.grid, &rollout_config)?,
                if ck.config.loss_weights().is_cycle_enabled() { "EchoP" } else { "Baseline" },
            ),
            None => (rollout(&mut OraclePlanner, &GridSpec::default(), &rollout_config)?, "Oracle"),
        };
        let json = a.out.join("closed_loop.json");
        write_json(&json, &report)?;
        let text = a.out.join("closed_loop.txt");
        let body = closed_loop_text(label, &report);
        fs::write(&text, &body).map_err(|e| FormatError::io(&text, e))?;
        println!(
            "success {:.1}% completion {:.3} score {:.3}",
            report.success_rate, report.route_completion, report.score
        );
        let trace = a.out.join("trace.csv");
        write_csv(&trace, &trace_rows(&report))?;
        Ok(vec![json, text, trace])
    })
}

fn ablate(a: AblateArgs) -> CliResult<()> {
    let mut grid: AblationGrid = read_json(&a.grid)?;
    grid.base.seed = resolve_seed(a.seed, grid.base.seed)?;
    grid.validate()?;
    let base_dir = a.grid.parent().map(Path::to_path_buf).unwrap_or_default();
    let train_set = grid.train.load(&base_dir, &grid.base.grid)?;
    let eval_set = grid.eval.load(&base_dir, &grid.base.grid)?;
    let workers = a.workers.unwrap_or_else(default_workers);
    if workers == 0 {
        return Err(CliError::Validation(String::from("`workers` must be >= 1")));
    }
    let grid_json = serde_json::to_vec(&grid).expect("grid serializes");
    let inputs = vec![crate::dataset::blob_hash(&grid_json)];
    let args = args_of(&[("grid", path_str(&a.grid))]);
    with_manifest(&a.out, pending("ablate", args, Some(config_hash(&grid.base)), inputs), || {
        let arms = grid.arms();
        let rows = ablate_parallel(&arms, &train_set, &eval_set, workers)?;
        let json = a.out.join("ablation.json");
        write_json(&json, &rows)?;
        let text = a.out.join("ablation.txt");
        let body = ablation_text(&rows);
        fs::write(&text, &body).map_err(|e| FormatError::io(&text, e))?;
        print!("{body}");
        Ok(vec![json, text])
    })
}

#[derive(Debug)]
enum PlotInput {
    Loss(Vec<LossRow>),
    Trajectories(Vec<TrajectoryRow>),
    Trace(Vec<TraceCsvRow>),
    OpenLoop(OpenLoopReport),
    ClosedLoop(ClosedLoopReport),
    Ablation(Vec<AblationRow>),
}

fn csv_header(path: &Path) -> CliResult<Vec<String>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| FormatError::csv(path, e))?;
    let h = r.headers().map_err(|e| FormatError::csv(path, e))?;
    Ok(h.iter().map(String::from).collect())
}

fn classify(path: &Path) -> CliResult<PlotInput> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let unknown = || {
        CliError::Validation(format!(
            "{}: not a loss log, trajectory dump, trace or report",
            path.display()
        ))
    };
    match ext {
        "csv" => {
            let header = csv_header(path)?;
            let first = header.first().map(String::as_str);
            match first {
                Some("step") if header.iter().any(|h| h == "futbev") => Ok(PlotInput::Loss(read_csv(path)?)),
                Some("episode_id") => Ok(PlotInput::Trajectories(read_csv(path)?)),
                Some("seed") if header.iter().any(|h| h == "ego_x") => Ok(PlotInput::Trace(read_csv(path)?)),
                _ => Err(unknown()),
            }
        }
        "json" => {
            let raw = fs::read(path).map_err(|e| FormatError::io(path, e))?;
            let value: serde_json::Value = serde_json::from_slice(&raw).map_err(|e| FormatError::json(path, e))?;
            if value.get("final_max").is_some() {
                Ok(PlotInput::OpenLoop(serde_json::from_value(value).map_err(|e| FormatError::json(path, e))?))
            } else if value.get("success_rate").is_some() {
                Ok(PlotInput::ClosedLoop(serde_json::from_value(value).map_err(|e| FormatError::json(path, e))?))
            } else if value.is_array() {
                Ok(PlotInput::Ablation(serde_json::from_value(value).map_err(|e| FormatError::json(path, e))?))
            } else {
                Err(unknown())
            }
        }
        _ => Err(unknown()),
    }
}

#[derive(serde::Serialize)]
struct PlotPoint<'a> {
    series: &'a str,
    x: String,
    y: f64,
}

fn write_svg(path: &Path, svg: &str, files: &mut Vec<PathBuf>) -> CliResult<()> {
    fs::write(path, svg).map_err(|e| FormatError::io(path, e))?;
    files.push(path.to_path_buf());
    Ok(())
}

fn emit(out: &Path, stem: &str, svg: &str, series: &[Series], files: &mut Vec<PathBuf>) -> CliResult<()> {
    write_svg(&out.join(format!("{stem}.svg")), svg, files)?;
    let rows: Vec<PlotPoint<'_>> = series
        .iter()
        .flat_map(|s| {
            s.points.iter().map(|&(x, y)| PlotPoint {
                series: &s.label,
                x: x.to_string(),
                y,
            })
        })
        .collect();
    let csv_path = out.join(format!("{stem}.csv"));
    write_csv(&csv_path, &rows)?;
    files.push(csv_path);
    Ok(())
}

fn emit_bars(
    out: &Path,
    stem: &str,
    title: &str,
    ylabel: &str,
    categories: &[String],
    groups: &[(String, Vec<f64>)],
    files: &mut Vec<PathBuf>,
) -> CliResult<()> {
    write_svg(&out.join(format!("{stem}.svg")), &bar_chart(title, ylabel, categories, groups), files)?;
    let rows: Vec<PlotPoint<'_>> = groups
        .iter()
        .flat_map(|(label, vals)| {
            categories.iter().zip(vals).map(move |(c, v)| PlotPoint {
                series: label,
                x: c.clone(),
                y: *v,
            })
        })
        .collect();
    let csv_path = out.join(format!("{stem}.csv"));
    write_csv(&csv_path, &rows)?;
    files.push(csv_path);
    Ok(())
}

const TRAJECTORY_FRAMES: usize = 4;

fn plot_one(input: PlotInput, stem: &str, out: &Path, files: &mut Vec<PathBuf>) -> CliResult<()> {
    match input {
        PlotInput::Loss(rows) => {
            let col = |name: &str, f: fn(&LossRow) -> f64| Series {
                label: name.to_string(),
                points: rows.iter().map(|r| (r.step as f64, f(r))).collect(),
            };
            let series = vec![
                col("traj", |r| r.traj),
                col("futbev", |r| r.futbev),
                col("curbev", |r| r.curbev),
                col("total", |r| r.total),
            ];
            emit(out, stem, &line_chart("Training losses", "step", "loss", &series), &series, files)
        }
        PlotInput::Trajectories(rows) => {
            let mut keys: Vec<(String, usize)> = rows.iter().map(|r| (r.episode_id.clone(), r.frame_idx)).collect();
            keys.dedup();
            for (i, (ep, frame)) in keys.iter().take(TRAJECTORY_FRAMES).enumerate() {
                let mut series: Vec<Series> = Vec::new();
                for r in rows.iter().filter(|r| &r.episode_id == ep && r.frame_idx == *frame) {
                    match series.iter_mut().find(|s| s.label == r.branch) {
                        Some(s) => s.points.push((r.x, r.y)),
                        None => series.push(Series {
                            label: r.branch.clone(),
                            points: vec![(0.0, 0.0), (r.x, r.y)],
                        }),
                    }
                }
                let title = format!("{ep} frame {frame}");
                emit(out, &format!("{stem}_{i}"), &trajectory_overlay(&title, &series), &series, files)?;
            }
            Ok(())
        }
        PlotInput::Trace(rows) => {
            let mut series: Vec<Series> = Vec::new();
            for r in &rows {
                let label = format!("{} {}", r.scenario, r.seed);
                match series.iter_mut().find(|s| s.label == label) {
                    Some(s) => s.points.push((r.ego_x, r.ego_y)),
                    None => series.push(Series {
                        label,
                        points: vec![(r.ego_x, r.ego_y)],
                    }),
                }
            }
            emit(out, stem, &trajectory_overlay("Closed-loop ego paths", &series), &series, files)
        }
        PlotInput::OpenLoop(report) => {
            let categories: Vec<String> = ["1s", "2s", "3s"].iter().map(|s| s.to_string()).collect();
            let groups: Vec<(String, Vec<f64>)> = Protocol::ALL
                .iter()
                .map(|p| (p.as_str().to_string(), report.row(*p).l2.to_vec()))
                .collect();
            emit_bars(out, stem, "Open-loop L2", "L2 (m)", &categories, &groups, files)
        }
        PlotInput::ClosedLoop(report) => {
            let categories: Vec<String> = report.runs.iter().map(|r| r.seed.to_string()).collect();
            let groups = vec![
                (String::from("completion"), report.runs.iter().map(|r| r.completion).collect()),
                (String::from("score"), report.runs.iter().map(|r| r.score).collect()),
            ];
            emit_bars(out, stem, "Closed-loop runs", "fraction", &categories, &groups, files)
        }
        PlotInput::Ablation(rows) => {
            let categories: Vec<String> = rows.iter().map(|r| format!("{}:{}", r.table, r.label)).collect();
            let groups: Vec<(String, Vec<f64>)> = Protocol::ALL
                .iter()
                .map(|p| (format!("L2 avg {}", p.as_str()), rows.iter().map(|r| r.report.row(*p).l2_avg).collect()))
                .collect();
            emit_bars(out, stem, "Ablation average L2", "L2 (m)", &categories, &groups, files)
        }
    }
}

fn plot(a: PlotArgs) -> CliResult<()> {
    let mut inputs = Vec::with_capacity(a.inputs.len());
    let mut parsed = Vec::with_capacity(a.inputs.len());
    for p in &a.inputs {
        inputs.push(crate::manifest::file_hash(p)?);
        parsed.push(classify(p)?);
    }
    let args = a.inputs.iter().map(|p| format!("input={}", p.display())).collect();
    with_manifest(&a.out, pending("plot", args, None, inputs), || {
        let mut files = Vec::new();
        for (i, (path, input)) in a.inputs.iter().zip(parsed).enumerate() {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("plot");
            plot_one(input, &format!("{i:02}_{stem}"), &a.out, &mut files)?;
        }
        Ok(files)
    })
}
