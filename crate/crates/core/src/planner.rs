//! Waypoint-query decoder, command branch selection and the trajectory loss.

use alloc::vec::Vec;

use crate::components::attention_layer;
use crate::error::{Error, Result};
use crate::graph::{Block, Graph, Var};
use crate::tensor::Tensor;
use crate::world::{NavigationCommand, Trajectory, HORIZON, NUM_COMMANDS};

/// `N_c` branches of `N_t` waypoints, stored branch-major as an
/// `(N_c·N_t)×2` tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiModalTrajectory(pub Tensor);

impl MultiModalTrajectory {
    pub fn branch(&self, command: NavigationCommand) -> Trajectory {
        let start = command.index() * HORIZON;
        Trajectory::new(
            (start..start + HORIZON)
                .map(|r| [self.0.get(r, 0), self.0.get(r, 1)])
                .collect(),
        )
    }

    pub fn branch_mut(&mut self, command: NavigationCommand) -> &mut [f64] {
        let start = command.index() * HORIZON * 2;
        &mut self.0.data[start..start + HORIZON * 2]
    }
}

pub struct PlanOut {
    pub multi: Var,
    /// Per-head `(N_c·N_t)×N_s` cross-attention weights.
    pub weights: Vec<Var>,
}

/// Waypoint queries cross-attend to the scene tokens, then a two-layer
/// pointwise head regresses each query to `(x, y)`.
pub fn plan(g: &mut Graph<'_>, tokens: Var) -> PlanOut {
    g.record(Block::Plan);
    let queries = g.param("planner.queries");
    let (e, weights) = attention_layer(g, "planner.cross", queries, Some(tokens));
    let w1 = g.param("planner.head1.weight");
    let b1 = g.param("planner.head1.bias");
    let w2 = g.param("planner.head2.weight");
    let b2 = g.param("planner.head2.bias");
    let h = g.matmul(e, w1);
    let h = g.add_row(h, b1);
    let h = g.tanh(h);
    let out = g.matmul(h, w2);
    let multi = g.add_row(out, b2);
    PlanOut { multi, weights }
}

/// The `N_t×2` branch for `command` (LEFT=0, STRAIGHT=1, RIGHT=2).
pub fn select_branch(g: &mut Graph<'_>, multi: Var, command: NavigationCommand) -> Var {
    debug_assert_eq!(g.value(multi).rows, NUM_COMMANDS * HORIZON);
    g.record(Block::SelectBranch);
    g.slice_rows(multi, command.index() * HORIZON, HORIZON)
}

/// Mean absolute error over all waypoint coordinates.
pub fn traj_loss(g: &mut Graph<'_>, pred: Var, gt: Var) -> Result<Var> {
    let (a, b) = (g.value(pred).shape(), g.value(gt).shape());
    if a != b {
        return Err(Error::ShapeMismatch {
            what: "traj_loss",
            expected: b,
            actual: a,
        });
    }
    Ok(g.mean_abs_diff(pred, gt))
}

/// Value-level [`traj_loss`].
pub fn traj_loss_value(pred: &Trajectory, gt: &Trajectory) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::ShapeMismatch {
            what: "traj_loss",
            expected: (gt.len(), 2),
            actual: (pred.len(), 2),
        });
    }
    let n = (2 * pred.len()) as f64;
    let s: f64 = pred
        .points
        .iter()
        .flatten()
        .zip(gt.points.iter().flatten())
        .map(|(p, q)| (p - q).abs())
        .sum();
    Ok(s / n)
}
