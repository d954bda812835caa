//! Receding-horizon rollouts inside the synthetic world.
//!
//! Each step the ego's surroundings are rasterized, the planner proposes a
//! trajectory in the ego frame, and the ego moves toward the next waypoint
//! with a turn-rate-limited heading controller. Agents replay their scripted
//! motion. A run ends at the goal, on the first collision, or after
//! `max_steps`.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::cfc::infer;
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Lattice, Pose};
use crate::metrics::{agents_in_frame, footprint_collides};
use crate::params::ModelParams;
use crate::world::{
    generate_scene, rasterize_frame, EgoState, GridSpec, NavigationCommand, Scenario, Scene,
    SemanticRaster, Trajectory, EGO_SPEED, FRAMES_PER_EPISODE, FRAME_DT, HORIZON,
};

/// Maximum heading change per step.
pub const MAX_TURN: f64 = 30.0 * PI / 180.0;
/// Speed ceiling of the kinematic model, m/s.
pub const MAX_SPEED: f64 = 4.0 * EGO_SPEED;
/// Driving-score multiplier per collision.
pub const COLLISION_PENALTY: f64 = 0.6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutConfig {
    pub max_steps: usize,
    pub replan_every: usize,
    /// Meters.
    pub goal_radius: f64,
    pub suite: Vec<(u64, Scenario)>,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            max_steps: 60,
            replan_every: 1,
            goal_radius: 1.0,
            suite: standard_suite(),
        }
    }
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(String::from(m)));
        if self.max_steps == 0 {
            return bad("`max_steps` must be >= 1");
        }
        if self.replan_every == 0 || self.replan_every > HORIZON {
            return bad("`replan_every` must be in 1..=6");
        }
        if !(self.goal_radius.is_finite() && self.goal_radius > 0.0) {
            return bad("`goal_radius` must be finite and > 0");
        }
        Ok(())
    }
}

/// The fixed 20-scenario suite: five seeds per scenario type.
pub fn standard_suite() -> Vec<(u64, Scenario)> {
    (0..20)
        .map(|i| (90_000 + i as u64, Scenario::ALL[i % Scenario::ALL.len()]))
        .collect()
}

/// What a planner sees at one step.
#[derive(Clone, Copy, Debug)]
pub struct Observation<'a> {
    pub raster: &'a SemanticRaster,
    pub command: NavigationCommand,
    pub ego: &'a EgoState,
    pub scene: &'a Scene,
    pub step: usize,
}

pub trait Planner {
    /// Waypoints in the current ego frame.
    fn plan(&mut self, obs: &Observation<'_>) -> Result<Trajectory>;
}

/// The learned planner, forward pass only.
pub struct ModelPlanner<'p> {
    pub params: &'p ModelParams,
}

impl Planner for ModelPlanner<'_> {
    fn plan(&mut self, obs: &Observation<'_>) -> Result<Trajectory> {
        Ok(infer(self.params, obs.raster, obs.command)?.0)
    }
}

/// Replays the reference route: the ground-truth future of the current step.
pub struct OraclePlanner;

impl Planner for OraclePlanner {
    fn plan(&mut self, obs: &Observation<'_>) -> Result<Trajectory> {
        let pose = obs.ego.pose();
        Ok(Trajectory::new(
            (1..=HORIZON)
                .map(|k| {
                    let r = obs.scene.reference_ego(obs.step + k);
                    let (x, y) = pose.to_local(r.x, r.y);
                    [x, y]
                })
                .collect(),
        ))
    }
}

/// Always asks to stay put.
pub struct StandStillPlanner;

impl Planner for StandStillPlanner {
    fn plan(&mut self, _obs: &Observation<'_>) -> Result<Trajectory> {
        Ok(Trajectory::zeros(HORIZON))
    }
}

/// Moves `ego` one step toward `target` (world frame).
pub fn advance_ego(ego: &EgoState, target: [f64; 2]) -> EgoState {
    let pose = ego.pose();
    let (lx, ly) = pose.to_local(target[0], target[1]);
    let dist = libm::hypot(lx, ly);
    if dist == 0.0 {
        return EgoState { speed: 0.0, ..*ego };
    }
    let turn = libm::atan2(ly, lx).clamp(-MAX_TURN, MAX_TURN);
    let heading = wrap_angle(ego.heading + turn);
    let speed = (dist / FRAME_DT).min(MAX_SPEED);
    EgoState {
        x: ego.x + speed * FRAME_DT * libm::cos(heading),
        y: ego.y + speed * FRAME_DT * libm::sin(heading),
        heading,
        speed,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub ego: Pose,
    /// The plan being tracked, in the ego frame at which it was made.
    pub plan: Trajectory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub scenario: Scenario,
    pub success: bool,
    pub collisions: usize,
    /// Fraction of route progress in `[0, 1]`.
    pub completion: f64,
    pub score: f64,
    pub steps: usize,
    pub failure: Option<String>,
    pub trace: Vec<TraceRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopReport {
    /// Percent of runs that reached the goal without collision.
    pub success_rate: f64,
    /// Mean completion fraction.
    pub route_completion: f64,
    /// Total collisions across the suite.
    pub collisions: usize,
    /// Mean of `completion · 0.6^collisions`.
    pub score: f64,
    pub runs: Vec<RunResult>,
}

pub fn run_score(completion: f64, collisions: usize) -> f64 {
    completion * libm::pow(COLLISION_PENALTY, collisions as f64)
}

/// One rollout on `scene`.
pub fn rollout_scene(
    planner: &mut dyn Planner,
    scene: &Scene,
    grid: &GridSpec,
    config: &RolloutConfig,
) -> RunResult {
    let route = &scene.geometry.route;
    let goal_step = FRAMES_PER_EPISODE - 1;
    let goal = scene.reference_ego(goal_step);
    let goal_s = scene.reference_s(goal_step);
    let lattice = Lattice {
        cell_size: grid.cell_size,
    };
    let progress = |e: &EgoState| {
        let s = route.project(e.x, e.y).s;
        ((s - scene.start_s) / (goal_s - scene.start_s)).clamp(0.0, 1.0)
    };

    let mut ego = scene.reference_ego(0);
    let mut plan: Option<(Pose, Trajectory)> = None;
    let mut plan_age = 0;
    let mut trace = Vec::new();
    let mut collisions = 0;
    let mut success = false;
    let mut failure = None;
    let mut steps = 0;

    for step in 0..config.max_steps {
        if plan.is_none() || plan_age >= config.replan_every {
            let agents = scene.agents_at(step);
            let raster = rasterize_frame(&ego, &agents, &scene.geometry, grid);
            let s = route.project(ego.x, ego.y).s;
            let obs = Observation {
                raster: &raster,
                command: scene.command_at(s),
                ego: &ego,
                scene,
                step,
            };
            match planner.plan(&obs) {
                Ok(t) if t.len() == HORIZON && t.is_finite() => {
                    plan = Some((ego.pose(), t));
                    plan_age = 0;
                }
                Ok(_) => {
                    failure = Some(String::from("non-finite planner output"));
                    break;
                }
                Err(e) => {
                    failure = Some(alloc::format!("{e}"));
                    break;
                }
            }
        }
        let (origin, traj) = plan.as_ref().expect("plan");
        let wp = traj.points[plan_age];
        let (tx, ty) = origin.to_world(wp[0], wp[1]);
        ego = advance_ego(&ego, [tx, ty]);
        trace.push(TraceRow {
            step,
            ego: ego.pose(),
            plan: traj.clone(),
        });
        plan_age += 1;
        steps = step + 1;

        let pose = ego.pose();
        let agents = agents_in_frame(&pose, &scene.agents_at(step + 1));
        if footprint_collides(&Pose::new(0.0, 0.0, 0.0), &agents, &lattice) {
            collisions += 1;
            break;
        }
        if libm::hypot(ego.x - goal.x, ego.y - goal.y) <= config.goal_radius {
            success = true;
            break;
        }
    }

    let completion = if success { 1.0 } else { progress(&ego) };
    RunResult {
        seed: scene.seed,
        scenario: scene.scenario,
        success,
        collisions,
        completion,
        score: run_score(completion, collisions),
        steps,
        failure,
        trace,
    }
}

/// Rolls out every suite entry and aggregates.
pub fn rollout(planner: &mut dyn Planner, grid: &GridSpec, config: &RolloutConfig) -> Result<ClosedLoopReport> {
    config.validate()?;
    grid.validate()?;
    let runs: Vec<RunResult> = config
        .suite
        .iter()
        .map(|(seed, scenario)| rollout_scene(planner, &generate_scene(*seed, *scenario), grid, config))
        .collect();
    Ok(aggregate(runs))
}

pub fn aggregate(runs: Vec<RunResult>) -> ClosedLoopReport {
    let n = runs.len().max(1) as f64;
    ClosedLoopReport {
        success_rate: 100.0 * runs.iter().filter(|r| r.success).count() as f64 / n,
        route_completion: runs.iter().map(|r| r.completion).sum::<f64>() / n,
        collisions: runs.iter().map(|r| r.collisions).sum(),
        score: runs.iter().map(|r| r.score).sum::<f64>() / n,
        runs,
    }
}
