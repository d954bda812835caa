//! CSV logs: per-step losses, trajectory dumps and closed-loop traces.

use std::path::Path;

use echoplan_core::cfc::{infer_branches, LossBundle};
use echoplan_core::closedloop::ClosedLoopReport;
use echoplan_core::metrics::eval_frames;
use echoplan_core::world::HORIZON;
use echoplan_core::{Episode, ModelParams, NavigationCommand};
use serde::{Deserialize, Serialize};

use crate::error::{FormatError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub step: usize,
    pub traj: f64,
    pub futbev: f64,
    pub curbev: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub episode_id: String,
    pub frame_idx: usize,
    /// `LEFT`, `STRAIGHT`, `RIGHT` or `GT`.
    pub branch: String,
    pub step: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceCsvRow {
    pub seed: u64,
    pub scenario: String,
    pub step: usize,
    pub ego_x: f64,
    pub ego_y: f64,
    pub ego_heading: f64,
    pub wp1_x: f64,
    pub wp1_y: f64,
    pub wp2_x: f64,
    pub wp2_y: f64,
    pub wp3_x: f64,
    pub wp3_y: f64,
    pub wp4_x: f64,
    pub wp4_y: f64,
    pub wp5_x: f64,
    pub wp5_y: f64,
    pub wp6_x: f64,
    pub wp6_y: f64,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| FormatError::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| FormatError::csv(path, e))?;
    }
    w.flush().map_err(|e| FormatError::io(path, e))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| FormatError::csv(path, e))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| FormatError::csv(path, e))
}

pub fn loss_rows(history: &[LossBundle]) -> Vec<LossRow> {
    history
        .iter()
        .enumerate()
        .map(|(i, b)| LossRow {
            step: i + 1,
            traj: b.traj,
            futbev: b.futbev,
            curbev: b.curbev,
            total: b.total,
        })
        .collect()
}

fn command_label(c: NavigationCommand) -> &'static str {
    match c {
        NavigationCommand::Left => "LEFT",
        NavigationCommand::Straight => "STRAIGHT",
        NavigationCommand::Right => "RIGHT",
    }
}

/// Every branch of the planner head plus the ground truth, for each
/// evaluable frame.
pub fn trajectory_rows(params: &ModelParams, episodes: &[Episode]) -> Result<Vec<TrajectoryRow>, echoplan_core::Error> {
    let mut rows = Vec::new();
    for ep in episodes {
        for t in eval_frames(ep) {
            let frame = &ep.frames[t];
            let multi = infer_branches(params, &frame.raster, frame.command)?;
            let mut push = |branch: &str, points: &[[f64; 2]]| {
                for (k, p) in points.iter().enumerate().take(HORIZON) {
                    rows.push(TrajectoryRow {
                        episode_id: ep.scenario_id.clone(),
                        frame_idx: t,
                        branch: branch.to_string(),
                        step: k + 1,
                        x: p[0],
                        y: p[1],
                    });
                }
            };
            for c in NavigationCommand::ALL {
                push(command_label(c), &multi.branch(c).points);
            }
            push("GT", &frame.gt_future.points);
        }
    }
    Ok(rows)
}

pub fn trace_rows(report: &ClosedLoopReport) -> Vec<TraceCsvRow> {
    let mut rows = Vec::new();
    for run in &report.runs {
        let scenario = serde_json::to_value(run.scenario)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default();
        for tr in &run.trace {
            let wp = |k: usize, axis: usize| tr.plan.points.get(k).map_or(f64::NAN, |p| p[axis]);
            rows.push(TraceCsvRow {
                seed: run.seed,
                scenario: scenario.clone(),
                step: tr.step,
                ego_x: tr.ego.x,
                ego_y: tr.ego.y,
                ego_heading: tr.ego.heading,
                wp1_x: wp(0, 0),
                wp1_y: wp(0, 1),
                wp2_x: wp(1, 0),
                wp2_y: wp(1, 1),
                wp3_x: wp(2, 0),
                wp3_y: wp(2, 1),
                wp4_x: wp(3, 0),
                wp4_y: wp(3, 1),
                wp5_x: wp(4, 0),
                wp5_y: wp(4, 1),
                wp6_x: wp(5, 0),
                wp6_y: wp(5, 1),
            });
        }
    }
    rows
}
