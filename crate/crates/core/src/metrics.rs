//! Open-loop planning metrics under the two aggregation protocols.
//!
//! * `FinalMax`: L2 is the displacement at the horizon step; a sample counts
//!   as a collision if any step up to the horizon collides.
//! * `Average`: L2 is the mean per-step displacement over steps `1..=h`;
//!   collision rate is the mean over steps of the per-step collision fraction.
//!
//! Collisions are decided on the cell lattice anchored at the sample's ego
//! frame: the ego footprint at a waypoint collides with an agent when some
//! cell center lies inside both rectangles.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cfc::{bev_mse_value, cfc_outputs, infer, LossWeights, Sample};
use crate::components::BevFeature;
use crate::error::{Error, Result};
use crate::geometry::{Lattice, OrientedBox, Pose};
use crate::params::ModelParams;
use crate::world::{AgentState, Episode, Trajectory, EGO_LENGTH, EGO_WIDTH, HORIZON};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Protocol {
    FinalMax,
    Average,
}

impl Protocol {
    pub const ALL: [Protocol; 2] = [Protocol::FinalMax, Protocol::Average];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::FinalMax => "FINAL_MAX",
            Protocol::Average => "AVERAGE",
        }
    }
}

/// Reporting horizons in seconds and their waypoint step counts at 2 Hz.
pub const HORIZONS: [(u32, usize); 3] = [(1, 2), (2, 4), (3, 6)];

fn check_horizon(h_steps: usize, n: usize) -> Result<()> {
    if h_steps == 0 || h_steps > n {
        return Err(Error::HorizonOutOfRange { h_steps, max: n });
    }
    Ok(())
}

pub fn l2_at_horizon(pred: &Trajectory, gt: &Trajectory, h_steps: usize, protocol: Protocol) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::ShapeMismatch {
            what: "l2_at_horizon",
            expected: (gt.len(), 2),
            actual: (pred.len(), 2),
        });
    }
    check_horizon(h_steps, pred.len())?;
    let dist = |k: usize| {
        let (p, q) = (pred.points[k], gt.points[k]);
        libm::hypot(p[0] - q[0], p[1] - q[1])
    };
    Ok(match protocol {
        Protocol::FinalMax => dist(h_steps - 1),
        Protocol::Average => (0..h_steps).map(dist).sum::<f64>() / h_steps as f64,
    })
}

/// Ego poses along a planned trajectory, in the planning frame. Heading of
/// the first waypoint is the current heading (0); later ones follow the
/// chord from the previous waypoint, holding the last heading when two
/// waypoints coincide.
pub fn poses_along(pred: &Trajectory) -> Vec<Pose> {
    let mut heading = 0.0;
    let mut prev: Option<[f64; 2]> = None;
    pred.points
        .iter()
        .map(|p| {
            if let Some(q) = prev {
                let (dx, dy) = (p[0] - q[0], p[1] - q[1]);
                if dx != 0.0 || dy != 0.0 {
                    heading = libm::atan2(dy, dx);
                }
            }
            prev = Some(*p);
            Pose::new(p[0], p[1], heading)
        })
        .collect()
}

/// True when the ego footprint at `ego` shares a lattice cell with any agent.
/// Everything is expressed in the lattice frame.
pub fn footprint_collides(ego: &Pose, agents: &[OrientedBox], lattice: &Lattice) -> bool {
    let ego_box = OrientedBox::new(*ego, EGO_LENGTH, EGO_WIDTH);
    agents.iter().any(|a| lattice.boxes_share_cell(&ego_box, a))
}

/// Agents of `agents` re-expressed relative to `frame`.
pub fn agents_in_frame(frame: &Pose, agents: &[AgentState]) -> Vec<OrientedBox> {
    agents
        .iter()
        .map(|a| OrientedBox::new(frame.relative(&a.pose()), a.length, a.width))
        .collect()
}

/// A planned trajectory for frame `frame` of `episode`.
#[derive(Clone, Copy, Debug)]
pub struct PlanSample<'a> {
    pub pred: &'a Trajectory,
    pub episode: &'a Episode,
    pub frame: usize,
}

/// Per-step collision flags for steps `1..=h_steps` against the true agents
/// of frames `t+1..=t+h_steps`.
pub fn collision_flags(sample: &PlanSample<'_>, h_steps: usize) -> Result<Vec<bool>> {
    check_horizon(h_steps, sample.pred.len())?;
    let frames = &sample.episode.frames;
    let available = frames.len().saturating_sub(sample.frame + 1);
    if available < h_steps {
        return Err(Error::InsufficientFuture {
            frame: sample.frame,
            needed: h_steps,
            available,
        });
    }
    let lattice = Lattice {
        cell_size: sample.episode.grid.cell_size,
    };
    let origin = frames[sample.frame].ego.pose();
    let poses = poses_along(sample.pred);
    Ok((1..=h_steps)
        .map(|k| {
            let agents = agents_in_frame(&origin, &frames[sample.frame + k].agents);
            footprint_collides(&poses[k - 1], &agents, &lattice)
        })
        .collect())
}

/// Collision rate in percent.
pub fn collision_rate(samples: &[PlanSample<'_>], h_steps: usize, protocol: Protocol) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let flags = samples
        .iter()
        .map(|s| collision_flags(s, h_steps))
        .collect::<Result<Vec<_>>>()?;
    let n = samples.len() as f64;
    Ok(match protocol {
        Protocol::FinalMax => {
            100.0 * flags.iter().filter(|f| f.iter().any(|c| *c)).count() as f64 / n
        }
        Protocol::Average => {
            let per_step: f64 = (0..h_steps)
                .map(|k| flags.iter().filter(|f| f[k]).count() as f64 / n)
                .sum();
            100.0 * per_step / h_steps as f64
        }
    })
}

/// Temporal-consistency error between a reconstructed and a reference map.
pub fn temporal_consistency(pred_bev: &BevFeature, gt_bev: &BevFeature) -> Result<f64> {
    bev_mse_value(pred_bev, gt_bev)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProtocolRow {
    /// Meters at 1 s, 2 s, 3 s.
    pub l2: [f64; 3],
    /// Percent at 1 s, 2 s, 3 s.
    pub collision_rate: [f64; 3],
    pub l2_avg: f64,
    pub collision_avg: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OpenLoopReport {
    pub final_max: ProtocolRow,
    pub average: ProtocolRow,
    pub samples: usize,
}

impl OpenLoopReport {
    pub fn row(&self, protocol: Protocol) -> &ProtocolRow {
        match protocol {
            Protocol::FinalMax => &self.final_max,
            Protocol::Average => &self.average,
        }
    }
}

/// Builds the report from per-sample predictions.
pub fn open_loop_report(samples: &[PlanSample<'_>]) -> Result<OpenLoopReport> {
    let mut report = OpenLoopReport {
        samples: samples.len(),
        ..Default::default()
    };
    for protocol in Protocol::ALL {
        let mut row = ProtocolRow::default();
        for (i, (_, h)) in HORIZONS.iter().enumerate() {
            let mut l2 = 0.0;
            for s in samples {
                let gt = &s.episode.frames[s.frame].gt_future;
                l2 += l2_at_horizon(s.pred, gt, *h, protocol)?;
            }
            row.l2[i] = if samples.is_empty() { 0.0 } else { l2 / samples.len() as f64 };
            row.collision_rate[i] = collision_rate(samples, *h, protocol)?;
        }
        row.l2_avg = row.l2.iter().sum::<f64>() / 3.0;
        row.collision_avg = row.collision_rate.iter().sum::<f64>() / 3.0;
        match protocol {
            Protocol::FinalMax => report.final_max = row,
            Protocol::Average => report.average = row,
        }
    }
    Ok(report)
}

/// Frames of `episode` with a full horizon of future frames.
pub fn eval_frames(episode: &Episode) -> core::ops::Range<usize> {
    0..episode.frames.len().saturating_sub(HORIZON)
}

/// A prediction tied to its episode and frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub episode: usize,
    pub frame: usize,
    pub pred: Trajectory,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OpenLoopEval {
    pub report: OpenLoopReport,
    /// Mean current-BEV reconstruction error over the evaluated frames.
    pub temporal_consistency: f64,
    pub predictions: Vec<Prediction>,
}

/// Runs inference on every evaluable frame and scores it.
pub fn evaluate_open_loop(params: &ModelParams, episodes: &[Episode]) -> Result<OpenLoopEval> {
    let mut predictions = Vec::new();
    let mut tc_sum = 0.0;
    for (ei, ep) in episodes.iter().enumerate() {
        for t in eval_frames(ep) {
            let frame = &ep.frames[t];
            let (pred, _) = infer(params, &frame.raster, frame.command)?;
            let future = ep.future_target_raster(t).ok_or(Error::InsufficientFuture {
                frame: t,
                needed: 1,
                available: 0,
            })?;
            let sample = Sample {
                raster: &frame.raster,
                command: frame.command,
                gt_future: &frame.gt_future,
                future_raster: &future,
            };
            let out = cfc_outputs(params, &sample, &LossWeights::default())?;
            tc_sum += temporal_consistency(&out.current_bev, &out.bev)?;
            predictions.push(Prediction {
                episode: ei,
                frame: t,
                pred,
            });
        }
    }
    let samples: Vec<PlanSample<'_>> = predictions
        .iter()
        .map(|p| PlanSample {
            pred: &p.pred,
            episode: &episodes[p.episode],
            frame: p.frame,
        })
        .collect();
    let report = open_loop_report(&samples)?;
    let n = predictions.len().max(1) as f64;
    Ok(OpenLoopEval {
        report,
        temporal_consistency: tc_sum / n,
        predictions,
    })
}

/// Per-step displacement for every branch, for dumps.
pub fn displacement_profile(pred: &Trajectory, gt: &Trajectory) -> Vec<f64> {
    let mut out = vec![0.0; pred.len().min(gt.len())];
    for (k, o) in out.iter_mut().enumerate() {
        *o = libm::hypot(pred.points[k][0] - gt.points[k][0], pred.points[k][1] - gt.points[k][1]);
    }
    out
}
