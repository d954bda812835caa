//! The current → future → current training cycle.
//!
//! The forward loop conditions the current scene tokens on the planned
//! trajectory and hallucinates the next BEV map. The echo loop feeds that
//! map back through the same encoder-side blocks with the reversed command,
//! plans a reversed trajectory, and reconstructs the current BEV map. Both
//! reconstructions are supervised against encoder outputs on ground-truth
//! rasters with the gradient stopped on the target side.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::components::{
    encode_bev, encode_bev_value, encode_command, mln, scene_attention, self_attention_refine,
    token_fuse, token_learn, BevFeature, SceneTokens,
};
use crate::error::{Error, Result};
use crate::graph::{Block, Graph, Var};
use crate::params::ModelParams;
use crate::planner::{plan, select_branch, traj_loss, MultiModalTrajectory};
use crate::world::{NavigationCommand, SemanticRaster, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_futbev: f64,
    pub lambda_curbev: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_futbev: 0.5,
            lambda_curbev: 0.1,
        }
    }
}

impl LossWeights {
    /// Both cycle terms off.
    pub const BASELINE: LossWeights = LossWeights {
        lambda_futbev: 0.0,
        lambda_curbev: 0.0,
    };

    pub fn is_cycle_enabled(&self) -> bool {
        self.lambda_futbev != 0.0 || self.lambda_curbev != 0.0
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_futbev", self.lambda_futbev),
            ("lambda_curbev", self.lambda_curbev),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(alloc::format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBundle {
    pub traj: f64,
    pub futbev: f64,
    pub curbev: f64,
    pub total: f64,
}

impl LossBundle {
    pub fn is_finite(&self) -> bool {
        self.traj.is_finite()
            && self.futbev.is_finite()
            && self.curbev.is_finite()
            && self.total.is_finite()
    }
}

/// LEFT ↔ RIGHT, STRAIGHT unchanged.
pub fn reverse_command(c: NavigationCommand) -> NavigationCommand {
    match c {
        NavigationCommand::Left => NavigationCommand::Right,
        NavigationCommand::Straight => NavigationCommand::Straight,
        NavigationCommand::Right => NavigationCommand::Left,
    }
}

/// `traj + λ_futbev·futbev + λ_curbev·curbev`
pub fn total_loss(traj: f64, futbev: f64, curbev: f64, weights: &LossWeights) -> LossBundle {
    LossBundle {
        traj,
        futbev,
        curbev,
        total: traj + weights.lambda_futbev * futbev + weights.lambda_curbev * curbev,
    }
}

/// Mean squared difference between two dense maps; the kernel behind both
/// reconstruction losses and the temporal-consistency metric.
pub fn bev_mse(g: &mut Graph<'_>, pred: Var, target: Var) -> Result<Var> {
    let (a, b) = (g.value(pred).shape(), g.value(target).shape());
    if a != b {
        return Err(Error::ShapeMismatch {
            what: "bev reconstruction",
            expected: b,
            actual: a,
        });
    }
    Ok(g.mean_sq_diff(pred, target))
}

pub fn futbev_loss(g: &mut Graph<'_>, pred: Var, target: Var) -> Result<Var> {
    bev_mse(g, pred, target)
}

pub fn curbev_loss(g: &mut Graph<'_>, pred: Var, target: Var) -> Result<Var> {
    bev_mse(g, pred, target)
}

/// Value-level [`bev_mse`].
pub fn bev_mse_value(pred: &BevFeature, target: &BevFeature) -> Result<f64> {
    let (a, b) = (&pred.0, &target.0);
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            what: "bev reconstruction",
            expected: b.shape(),
            actual: a.shape(),
        });
    }
    let s: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(s / a.len() as f64)
}

pub struct ForwardLoopOut {
    pub future_tokens: Var,
    pub future_bev: Var,
}

/// `Ŝ_{t+1} = refine(mln(S_t, T̂_P))`, `B̂_{t+1} = fuse(Ŝ_{t+1})`.
pub fn forward_loop(g: &mut Graph<'_>, tokens: Var, pred_traj: Var) -> Result<ForwardLoopOut> {
    g.record(Block::ForwardLoop);
    let conditioned = mln(g, tokens, pred_traj)?.tokens;
    let future_tokens = self_attention_refine(g, conditioned).tokens;
    let future_bev = token_fuse(g, future_tokens).bev;
    Ok(ForwardLoopOut {
        future_tokens,
        future_bev,
    })
}

pub struct EchoLoopOut {
    /// Scene tokens pooled from the hallucinated future map.
    pub echo_future_tokens: Var,
    pub reversed_traj: Var,
    pub current_tokens: Var,
    pub current_bev: Var,
}

/// Runs the pipeline backwards from the predicted future map.
pub fn echo_loop(
    g: &mut Graph<'_>,
    future_bev: Var,
    reversed_cmd: NavigationCommand,
) -> Result<EchoLoopOut> {
    g.record(Block::EchoLoop);
    let conditioned = encode_command(g, reversed_cmd, future_bev);
    let pooled = token_learn(g, conditioned).tokens;
    let echo_future_tokens = scene_attention(g, pooled).tokens;
    let multi = plan(g, echo_future_tokens).multi;
    let reversed_traj = select_branch(g, multi, reversed_cmd);
    let motion = mln(g, echo_future_tokens, reversed_traj)?.tokens;
    let current_tokens = self_attention_refine(g, motion).tokens;
    let current_bev = token_fuse(g, current_tokens).bev;
    Ok(EchoLoopOut {
        echo_future_tokens,
        reversed_traj,
        current_tokens,
        current_bev,
    })
}

/// One supervised frame: the current raster, its command and ground-truth
/// future, and the next frame's raster drawn in the current ego frame.
#[derive(Clone, Copy, Debug)]
pub struct Sample<'a> {
    pub raster: &'a SemanticRaster,
    pub command: NavigationCommand,
    pub gt_future: &'a Trajectory,
    pub future_raster: &'a SemanticRaster,
}

/// Handles into a fully built training tape.
pub struct TrainingGraph {
    pub bev: Var,
    pub scene_tokens: Var,
    pub pred_traj: Var,
    pub future_tokens: Var,
    pub future_bev: Var,
    pub echo: EchoLoopOut,
    pub traj_loss: Var,
    pub futbev_loss: Var,
    pub curbev_loss: Var,
    pub total: Var,
    pub bundle: LossBundle,
}

/// Encoder → command → tokens → plan → select, shared by training and
/// inference. Returns `(bev, scene_tokens, multi, pred_traj)`.
fn plan_forward(
    g: &mut Graph<'_>,
    raster: &SemanticRaster,
    command: NavigationCommand,
) -> Result<(Var, Var, Var, Var)> {
    let bev = encode_bev(g, raster)?;
    let conditioned = encode_command(g, command, bev);
    let pooled = token_learn(g, conditioned).tokens;
    let tokens = scene_attention(g, pooled).tokens;
    let multi = plan(g, tokens).multi;
    let pred = select_branch(g, multi, command);
    Ok((bev, tokens, multi, pred))
}

/// Builds the full cycle for one sample and its composite loss.
pub fn training_graph(
    g: &mut Graph<'_>,
    sample: &Sample<'_>,
    weights: &LossWeights,
) -> Result<TrainingGraph> {
    let future_target = encode_bev_value(g.params(), sample.future_raster)?;
    let future_target = g.constant(future_target);

    let (bev, scene_tokens, _, pred_traj) = plan_forward(g, sample.raster, sample.command)?;
    let current_target = g.detach(bev);
    let gt = g.constant(sample.gt_future.to_tensor());
    let l_traj = traj_loss(g, pred_traj, gt)?;

    let fwd = forward_loop(g, scene_tokens, pred_traj)?;
    let l_fut = futbev_loss(g, fwd.future_bev, future_target)?;
    let echo = echo_loop(g, fwd.future_bev, reverse_command(sample.command))?;
    let l_cur = curbev_loss(g, echo.current_bev, current_target)?;

    let fut_w = g.scale(l_fut, weights.lambda_futbev);
    let cur_w = g.scale(l_cur, weights.lambda_curbev);
    let total = g.add(l_traj, fut_w);
    let total = g.add(total, cur_w);

    let bundle = LossBundle {
        traj: g.value(l_traj).data[0],
        futbev: g.value(l_fut).data[0],
        curbev: g.value(l_cur).data[0],
        total: g.value(total).data[0],
    };
    Ok(TrainingGraph {
        bev,
        scene_tokens,
        pred_traj,
        future_tokens: fwd.future_tokens,
        future_bev: fwd.future_bev,
        echo,
        traj_loss: l_traj,
        futbev_loss: l_fut,
        curbev_loss: l_cur,
        total,
        bundle,
    })
}

/// Every intermediate of one training cycle, by value.
#[derive(Clone, Debug, PartialEq)]
pub struct CfcOutputs {
    pub pred_traj: Trajectory,
    pub future_tokens: SceneTokens,
    pub future_bev: BevFeature,
    pub reversed_traj: Trajectory,
    pub current_tokens: SceneTokens,
    pub current_bev: BevFeature,
    /// Encoder output on the current raster (the current-BEV target).
    pub bev: BevFeature,
    pub losses: LossBundle,
}

pub fn cfc_outputs(
    params: &ModelParams,
    sample: &Sample<'_>,
    weights: &LossWeights,
) -> Result<CfcOutputs> {
    let mut g = Graph::new(params);
    let t = training_graph(&mut g, sample, weights)?;
    Ok(CfcOutputs {
        pred_traj: Trajectory::from_tensor(g.value(t.pred_traj)),
        future_tokens: SceneTokens(g.value(t.future_tokens).clone()),
        future_bev: BevFeature(g.value(t.future_bev).clone()),
        reversed_traj: Trajectory::from_tensor(g.value(t.echo.reversed_traj)),
        current_tokens: SceneTokens(g.value(t.echo.current_tokens).clone()),
        current_bev: BevFeature(g.value(t.echo.current_bev).clone()),
        bev: BevFeature(g.value(t.bev).clone()),
        losses: t.bundle,
    })
}

/// Inference: the forward prediction only. Returns the selected branch and
/// the blocks that executed.
pub fn infer(
    params: &ModelParams,
    raster: &SemanticRaster,
    command: NavigationCommand,
) -> Result<(Trajectory, Vec<Block>)> {
    let mut g = Graph::new(params);
    let (_, _, _, pred) = plan_forward(&mut g, raster, command)?;
    Ok((Trajectory::from_tensor(g.value(pred)), g.trace().to_vec()))
}

/// Inference keeping every branch of the planner head.
pub fn infer_branches(
    params: &ModelParams,
    raster: &SemanticRaster,
    command: NavigationCommand,
) -> Result<MultiModalTrajectory> {
    let mut g = Graph::new(params);
    let (_, _, multi, _) = plan_forward(&mut g, raster, command)?;
    Ok(MultiModalTrajectory(g.value(multi).clone()))
}
