//! Procedural driving episodes on a metric grid.
//!
//! A [`Scene`] holds the static road layout, the ego route and the initial
//! agent states. [`Scene::episode`] samples it every [`FRAME_DT`] seconds and
//! rasterizes each frame in the ego frame. All stored quantities are rounded
//! to `f32` precision at generation time so the on-disk format is lossless.

mod raster;
pub mod road;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{quantize, quantize_heading, wrap_angle, OrientedBox, Pose};
pub use raster::{
    cell_center, ego_footprint_cells, rasterize_agents, rasterize_frame, SemanticRaster,
    AGENT_OCCUPANCY, DRIVABLE, LANE_COS, LANE_SIN, ROUTE_HALF_WIDTH, ROUTE_HINT,
};
use road::{Path, Road};

pub const SEM_CHANNELS: usize = 5;
/// Future waypoints per frame (2 Hz over 3 s).
pub const HORIZON: usize = 6;
pub const NUM_COMMANDS: usize = 3;
pub const FRAME_DT: f64 = 0.5;
pub const EGO_LENGTH: f64 = 4.0;
pub const EGO_WIDTH: f64 = 2.0;
pub const EGO_SPEED: f64 = 2.5;
pub const FRAMES_PER_EPISODE: usize = 12;
/// Heading change separating turns from straight driving, radians (15°).
pub const COMMAND_THRESHOLD: f64 = 15.0 * core::f64::consts::PI / 180.0;

const ROUTE_LEAD_IN: f64 = 20.0;
const ROAD_HALF_WIDTH: f64 = 4.0;
const AGENT_CLEARANCE: f64 = 0.75;
const MAX_AGENTS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub h: usize,
    pub w: usize,
    /// Meters per cell.
    pub cell_size: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            h: 32,
            w: 32,
            cell_size: 0.5,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.h == 0 || self.w == 0 {
            return Err(Error::InvalidConfig(format!(
                "grid dimensions must be positive, got {}x{}",
                self.h, self.w
            )));
        }
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "grid cell_size must be positive, got {}",
                self.cell_size
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NavigationCommand {
    Left,
    Straight,
    Right,
}

impl NavigationCommand {
    pub const ALL: [NavigationCommand; NUM_COMMANDS] = [Self::Left, Self::Straight, Self::Right];

    /// Planner branch index: LEFT=0, STRAIGHT=1, RIGHT=2.
    pub fn index(self) -> usize {
        match self {
            Self::Left => 0,
            Self::Straight => 1,
            Self::Right => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Left => "LEFT",
            Self::Straight => "STRAIGHT",
            Self::Right => "RIGHT",
        }
    }
}

/// Maps the heading change over a route segment to a command.
pub fn command_for_route(future_headings: &[f64]) -> Result<NavigationCommand> {
    let (first, last) = match (future_headings.first(), future_headings.last()) {
        (Some(f), Some(l)) => (*f, *l),
        _ => return Err(Error::EmptyRouteSegment),
    };
    let delta = wrap_angle(last - first);
    Ok(if delta > COMMAND_THRESHOLD {
        NavigationCommand::Left
    } else if delta < -COMMAND_THRESHOLD {
        NavigationCommand::Right
    } else {
        NavigationCommand::Straight
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Scenario {
    Straight,
    LeftTurn,
    RightTurn,
    IntersectionMixed,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Self::Straight,
        Self::LeftTurn,
        Self::RightTurn,
        Self::IntersectionMixed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Straight => "STRAIGHT",
            Self::LeftTurn => "LEFT_TURN",
            Self::RightTurn => "RIGHT_TURN",
            Self::IntersectionMixed => "INTERSECTION_MIXED",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|sc| sc.as_str().eq_ignore_ascii_case(s))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EgoState {
    pub x: f64,
    pub y: f64,
    /// Radians in `(−π, π]`.
    pub heading: f64,
    pub speed: f64,
}

impl EgoState {
    pub fn pose(&self) -> Pose {
        Pose::new(self.x, self.y, self.heading)
    }

    pub fn footprint(&self) -> OrientedBox {
        OrientedBox::new(self.pose(), EGO_LENGTH, EGO_WIDTH)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgentState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub length: f64,
    pub width: f64,
}

impl AgentState {
    pub fn pose(&self) -> Pose {
        Pose::new(self.x, self.y, self.heading)
    }

    pub fn footprint(&self) -> OrientedBox {
        OrientedBox::new(self.pose(), self.length, self.width)
    }

    /// Constant-velocity state after `dt` seconds.
    pub fn advanced(&self, dt: f64) -> Self {
        let d = self.speed * dt;
        Self {
            x: self.x + d * libm::cos(self.heading),
            y: self.y + d * libm::sin(self.heading),
            ..*self
        }
    }

    fn quantized(&self) -> Self {
        Self {
            x: quantize(self.x),
            y: quantize(self.y),
            heading: quantize_heading(self.heading),
            speed: quantize(self.speed),
            length: quantize(self.length),
            width: quantize(self.width),
        }
    }

    fn mirrored(&self) -> Self {
        Self {
            y: -self.y,
            heading: wrap_angle(-self.heading),
            ..*self
        }
    }
}

/// Ego-frame waypoints in meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<[f64; 2]>,
}

impl Trajectory {
    pub fn new(points: Vec<[f64; 2]>) -> Self {
        Self { points }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            points: alloc::vec![[0.0; 2]; n],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().all(|p| p[0].is_finite() && p[1].is_finite())
    }

    /// `len×2` tensor.
    pub fn to_tensor(&self) -> crate::tensor::Tensor {
        crate::tensor::Tensor::from_vec(
            self.points.len(),
            2,
            self.points.iter().flat_map(|p| [p[0], p[1]]).collect(),
        )
    }

    pub fn from_tensor(t: &crate::tensor::Tensor) -> Self {
        debug_assert_eq!(t.cols, 2);
        Self {
            points: (0..t.rows).map(|r| [t.get(r, 0), t.get(r, 1)]).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub raster: SemanticRaster,
    pub ego: EgoState,
    pub agents: Vec<AgentState>,
    pub command: NavigationCommand,
    pub gt_future: Trajectory,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub scenario_id: String,
    pub scenario: Scenario,
    pub seed: u64,
    pub grid: GridSpec,
    pub frames: Vec<Frame>,
}

impl Episode {
    /// Raster of frame `t + 1` drawn in frame `t`'s ego frame.
    ///
    /// Road and route channels are static in the world, so only the agent
    /// occupancy channel differs from frame `t`'s raster.
    pub fn future_target_raster(&self, t: usize) -> Option<SemanticRaster> {
        let (cur, next) = (self.frames.get(t)?, self.frames.get(t + 1)?);
        let mut raster = cur.raster.clone();
        rasterize_agents(&mut raster, &cur.ego.pose(), &next.agents, &self.grid);
        Some(raster)
    }
}

/// Static layout of a scene.
#[derive(Clone, Debug, PartialEq)]
pub struct RoadGeometry {
    pub roads: Vec<Road>,
    pub route: Path,
}

/// Everything needed to replay an episode or run it closed loop.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub scenario: Scenario,
    pub seed: u64,
    pub geometry: RoadGeometry,
    /// Route arc length of the ego at step 0.
    pub start_s: f64,
    /// Agent states at step 0 (unquantized).
    pub agents: Vec<AgentState>,
}

pub fn generate_episode(seed: u64, scenario: Scenario, grid: &GridSpec) -> Episode {
    generate_scene(seed, scenario).episode(grid, FRAMES_PER_EPISODE)
}

pub fn generate_scene(seed: u64, scenario: Scenario) -> Scene {
    match scenario {
        Scenario::Straight => build_scene(seed, scenario, Layout::Straight),
        Scenario::LeftTurn => build_scene(seed, scenario, Layout::Turn),
        // A right turn is the exact reflection of the left turn with the same seed.
        Scenario::RightTurn => {
            let mut scene = build_scene(seed, Scenario::LeftTurn, Layout::Turn).mirrored();
            scene.scenario = Scenario::RightTurn;
            scene
        }
        Scenario::IntersectionMixed => build_scene(seed, scenario, Layout::Intersection),
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Layout {
    Straight,
    Turn,
    Intersection,
}

fn build_scene(seed: u64, scenario: Scenario, layout: Layout) -> Scene {
    let salt: u64 = match layout {
        Layout::Straight => 0x5354,
        Layout::Turn => 0x5455,
        Layout::Intersection => 0x494e,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt);
    let origin = Pose::new(-ROUTE_LEAD_IN, 0.0, 0.0);
    let mut crossing_x = None;

    let geometry = match layout {
        Layout::Straight => {
            let route = Path::starting_at(origin).line(ROUTE_LEAD_IN + 80.0);
            road_geometry(route, Vec::new())
        }
        Layout::Turn => {
            let before = rng.gen_range(2.0..8.0);
            let radius = rng.gen_range(5.0..8.0);
            let route = Path::starting_at(origin)
                .line(ROUTE_LEAD_IN + before)
                .arc(radius, FRAC_PI_2)
                .line(60.0);
            road_geometry(route, Vec::new())
        }
        Layout::Intersection => {
            let center = rng.gen_range(8.0..12.0);
            let radius = rng.gen_range(4.0..6.0);
            let choice = rng.gen_range(0..3u32);
            crossing_x = Some(center);
            let main = Path::starting_at(origin).line(ROUTE_LEAD_IN + 80.0);
            let crossing = Path::starting_at(Pose::new(center, -40.0, FRAC_PI_2)).line(80.0);
            let route = match choice {
                0 => Path::starting_at(origin)
                    .line(ROUTE_LEAD_IN + center - radius)
                    .arc(radius, FRAC_PI_2)
                    .line(60.0),
                1 => main.clone(),
                _ => Path::starting_at(origin)
                    .line(ROUTE_LEAD_IN + center - radius)
                    .arc(radius, -FRAC_PI_2)
                    .line(60.0),
            };
            let extra = alloc::vec![
                Road {
                    centerline: main,
                    half_width: ROAD_HALF_WIDTH,
                },
                Road {
                    centerline: crossing,
                    half_width: ROAD_HALF_WIDTH,
                },
            ];
            road_geometry(route, extra)
        }
    };

    let mut scene = Scene {
        scenario,
        seed,
        geometry,
        start_s: ROUTE_LEAD_IN,
        agents: Vec::new(),
    };
    let ego_boxes: Vec<OrientedBox> = (0..FRAMES_PER_EPISODE + HORIZON + 1)
        .map(|k| scene.reference_ego(k).footprint())
        .collect();

    let count = rng.gen_range(0..=MAX_AGENTS);
    for _ in 0..count {
        for _attempt in 0..64 {
            let cand = sample_agent(&mut rng, &scene, crossing_x);
            if agent_is_clear(&cand, &ego_boxes, &scene.agents) {
                scene.agents.push(cand);
                break;
            }
        }
    }
    scene
}

fn road_geometry(route: Path, mut roads: Vec<Road>) -> RoadGeometry {
    roads.push(Road {
        centerline: route.clone(),
        half_width: ROAD_HALF_WIDTH,
    });
    RoadGeometry { roads, route }
}

fn sample_agent(rng: &mut ChaCha8Rng, scene: &Scene, crossing_x: Option<f64>) -> AgentState {
    let length = rng.gen_range(3.5..4.5);
    let width = rng.gen_range(1.6..2.0);
    let kind = rng.gen_range(0..4u32);
    let route = &scene.geometry.route;
    let on_route = |s: f64, lateral: f64| {
        let p = route.pose_at(s);
        let (x, y) = p.to_world(0.0, lateral);
        (x, y, p.heading)
    };
    let ego_s = scene.start_s;
    match (kind, crossing_x) {
        // cross traffic
        (3, Some(cx)) => {
            let dir = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let lane = -dir * 2.0;
            AgentState {
                x: cx + lane,
                y: rng.gen_range(-15.0..15.0),
                heading: dir * FRAC_PI_2,
                speed: rng.gen_range(1.5..3.5),
                length,
                width,
            }
        }
        // oncoming
        (1, _) => {
            let (x, y, h) = on_route(ego_s + rng.gen_range(8.0..30.0), 3.0);
            AgentState {
                x,
                y,
                heading: wrap_angle(h + core::f64::consts::PI),
                speed: rng.gen_range(1.5..3.0),
                length,
                width,
            }
        }
        // lead vehicle
        (2, _) => {
            let (x, y, h) = on_route(ego_s + rng.gen_range(7.0..12.0), 0.0);
            AgentState {
                x,
                y,
                heading: h,
                speed: EGO_SPEED,
                length,
                width,
            }
        }
        // parked at the curb
        _ => {
            let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let (x, y, h) = on_route(ego_s + rng.gen_range(-5.0..25.0), side * 3.2);
            AgentState {
                x,
                y,
                heading: h,
                speed: 0.0,
                length,
                width,
            }
        }
    }
}

fn agent_is_clear(cand: &AgentState, ego_boxes: &[OrientedBox], others: &[AgentState]) -> bool {
    for (k, ego) in ego_boxes.iter().enumerate() {
        let a = cand.advanced(k as f64 * FRAME_DT).footprint().inflated(AGENT_CLEARANCE);
        if a.overlaps(ego) {
            return false;
        }
    }
    let me = cand.footprint();
    others.iter().all(|o| !o.footprint().overlaps(&me))
}

impl Scene {
    /// Reference ego state `step` frames after the start.
    pub fn reference_ego(&self, step: usize) -> EgoState {
        let s = self.start_s + EGO_SPEED * FRAME_DT * step as f64;
        let p = self.geometry.route.pose_at(s);
        EgoState {
            x: quantize(p.x),
            y: quantize(p.y),
            heading: quantize_heading(p.heading),
            speed: EGO_SPEED,
        }
    }

    pub fn agents_at(&self, step: usize) -> Vec<AgentState> {
        self.agents
            .iter()
            .map(|a| a.advanced(step as f64 * FRAME_DT).quantized())
            .collect()
    }

    /// Route arc length of the reference ego at `step`.
    pub fn reference_s(&self, step: usize) -> f64 {
        self.start_s + EGO_SPEED * FRAME_DT * step as f64
    }

    /// Command for a route segment starting at arc length `s`.
    pub fn command_at(&self, s: f64) -> NavigationCommand {
        let headings: Vec<f64> = (0..=HORIZON)
            .map(|k| {
                quantize_heading(
                    self.geometry
                        .route
                        .pose_at(s + EGO_SPEED * FRAME_DT * k as f64)
                        .heading,
                )
            })
            .collect();
        command_for_route(&headings).unwrap_or(NavigationCommand::Straight)
    }

    pub fn episode(&self, grid: &GridSpec, frames: usize) -> Episode {
        let egos: Vec<EgoState> = (0..frames + HORIZON).map(|k| self.reference_ego(k)).collect();
        let frames = (0..frames)
            .map(|k| {
                let ego = egos[k];
                let agents = self.agents_at(k);
                let pose = ego.pose();
                let gt_future = Trajectory::new(
                    (1..=HORIZON)
                        .map(|j| {
                            let (x, y) = pose.to_local(egos[k + j].x, egos[k + j].y);
                            [quantize(x), quantize(y)]
                        })
                        .collect(),
                );
                let headings: Vec<f64> = egos[k..=k + HORIZON].iter().map(|e| e.heading).collect();
                let command = command_for_route(&headings).unwrap_or(NavigationCommand::Straight);
                Frame {
                    raster: rasterize_frame(&ego, &agents, &self.geometry, grid),
                    ego,
                    agents,
                    command,
                    gt_future,
                }
            })
            .collect();
        Episode {
            scenario_id: format!("{}-{:06}", self.scenario.as_str().to_ascii_lowercase(), self.seed),
            scenario: self.scenario,
            seed: self.seed,
            grid: *grid,
            frames,
        }
    }

    /// Reflection of the whole scene about the world x-axis.
    pub fn mirrored(&self) -> Self {
        let roads = self
            .geometry
            .roads
            .iter()
            .map(|r| Road {
                centerline: r.centerline.mirrored(),
                half_width: r.half_width,
            })
            .collect();
        Scene {
            scenario: self.scenario,
            seed: self.seed,
            geometry: RoadGeometry {
                roads,
                route: self.geometry.route.mirrored(),
            },
            start_s: self.start_s,
            agents: self.agents.iter().map(AgentState::mirrored).collect(),
        }
    }
}
