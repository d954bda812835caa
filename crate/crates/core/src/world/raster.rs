//! Ego-frame semantic rasters.
//!
//! Cell `(r, c)` of an `h×w` grid has its center at
//! `x = (r + ½ − h/2)·cell_size` (forward) and `y = (c + ½ − w/2)·cell_size`
//! (left) in the ego frame, so the ego sits at the grid center facing +x.

use alloc::vec;
use alloc::vec::Vec;

use super::road::Road;
use super::{AgentState, EgoState, GridSpec, RoadGeometry, EGO_LENGTH, EGO_WIDTH, SEM_CHANNELS};
use crate::geometry::{wrap_angle, OrientedBox, Pose};
use crate::tensor::Tensor;

pub const DRIVABLE: usize = 0;
pub const AGENT_OCCUPANCY: usize = 1;
pub const LANE_SIN: usize = 2;
pub const LANE_COS: usize = 3;
pub const ROUTE_HINT: usize = 4;

/// Half width of the corridor marked in the route channel, meters.
pub const ROUTE_HALF_WIDTH: f64 = 1.0;

#[derive(Clone, Debug, PartialEq)]
pub struct SemanticRaster {
    pub h: usize,
    pub w: usize,
    /// `h·w·5` values, cell-major then channel.
    pub values: Vec<f32>,
}

impl SemanticRaster {
    pub fn zeros(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            values: vec![0.0; h * w * SEM_CHANNELS],
        }
    }

    #[inline]
    pub fn index(&self, r: usize, c: usize, ch: usize) -> usize {
        (r * self.w + c) * SEM_CHANNELS + ch
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize, ch: usize) -> f32 {
        self.values[self.index(r, c, ch)]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, ch: usize, v: f32) {
        let i = self.index(r, c, ch);
        self.values[i] = v;
    }

    pub fn channel(&self, ch: usize) -> Vec<f32> {
        self.values.iter().skip(ch).step_by(SEM_CHANNELS).copied().collect()
    }

    /// One row per cell, one column per semantic channel.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(
            self.h * self.w,
            SEM_CHANNELS,
            self.values.iter().map(|v| *v as f64).collect(),
        )
    }

    /// Reflection about the ego x-axis.
    pub fn mirrored(&self) -> Self {
        let mut out = Self::zeros(self.h, self.w);
        for r in 0..self.h {
            for c in 0..self.w {
                for ch in 0..SEM_CHANNELS {
                    let v = self.get(r, self.w - 1 - c, ch);
                    out.set(r, c, ch, if ch == LANE_SIN { -v } else { v });
                }
            }
        }
        out
    }

    /// Checks the per-channel value ranges; returns the first offending cell.
    pub fn check_bounds(&self) -> Result<(), (usize, usize, usize)> {
        for r in 0..self.h {
            for c in 0..self.w {
                for ch in [DRIVABLE, AGENT_OCCUPANCY, ROUTE_HINT] {
                    let v = self.get(r, c, ch);
                    if !(0.0..=1.0).contains(&v) {
                        return Err((r, c, ch));
                    }
                }
                let (s, co) = (self.get(r, c, LANE_SIN) as f64, self.get(r, c, LANE_COS) as f64);
                if !(-1.0..=1.0).contains(&s) || !(-1.0..=1.0).contains(&co) {
                    return Err((r, c, LANE_SIN));
                }
                let n = s * s + co * co;
                if n != 0.0 && (n - 1.0).abs() > 1e-6 {
                    return Err((r, c, LANE_COS));
                }
            }
        }
        Ok(())
    }
}

/// Ego-frame center of cell `(r, c)`.
#[inline]
pub fn cell_center(grid: &GridSpec, r: usize, c: usize) -> (f64, f64) {
    (
        (r as f64 + 0.5 - grid.h as f64 / 2.0) * grid.cell_size,
        (c as f64 + 0.5 - grid.w as f64 / 2.0) * grid.cell_size,
    )
}

/// Precomputed point-in-rectangle test.
#[derive(Clone, Copy, Debug)]
pub(crate) struct BoxTest {
    cx: f64,
    cy: f64,
    cos: f64,
    sin: f64,
    hl: f64,
    hw: f64,
}

impl BoxTest {
    pub(crate) fn new(b: &OrientedBox) -> Self {
        Self {
            cx: b.center.x,
            cy: b.center.y,
            cos: libm::cos(b.center.heading),
            sin: libm::sin(b.center.heading),
            hl: 0.5 * b.length,
            hw: 0.5 * b.width,
        }
    }

    #[inline]
    pub(crate) fn contains(&self, px: f64, py: f64) -> bool {
        let (dx, dy) = (px - self.cx, py - self.cy);
        let lx = self.cos * dx + self.sin * dy;
        let ly = -self.sin * dx + self.cos * dy;
        lx.abs() <= self.hl && ly.abs() <= self.hw
    }
}

/// Writes agent footprints, expressed relative to `ego`, into the occupancy
/// channel. Existing occupancy is cleared first.
pub fn rasterize_agents(raster: &mut SemanticRaster, ego: &Pose, agents: &[AgentState], grid: &GridSpec) {
    let tests: Vec<BoxTest> = agents
        .iter()
        .map(|a| {
            let local = ego.relative(&a.pose());
            BoxTest::new(&OrientedBox::new(local, a.length, a.width))
        })
        .collect();
    for r in 0..grid.h {
        for c in 0..grid.w {
            let (x, y) = cell_center(grid, r, c);
            let hit = tests.iter().any(|t| t.contains(x, y));
            raster.set(r, c, AGENT_OCCUPANCY, if hit { 1.0 } else { 0.0 });
        }
    }
}

pub fn rasterize_frame(
    ego: &EgoState,
    agents: &[AgentState],
    geometry: &RoadGeometry,
    grid: &GridSpec,
) -> SemanticRaster {
    let pose = ego.pose();
    let mut raster = SemanticRaster::zeros(grid.h, grid.w);
    for r in 0..grid.h {
        for c in 0..grid.w {
            let (lx, ly) = cell_center(grid, r, c);
            let (wx, wy) = pose.to_world(lx, ly);
            if let Some(lane_heading) = nearest_lane(&geometry.roads, wx, wy) {
                let rel = wrap_angle(lane_heading - pose.heading);
                raster.set(r, c, DRIVABLE, 1.0);
                raster.set(r, c, LANE_SIN, libm::sin(rel) as f32);
                raster.set(r, c, LANE_COS, libm::cos(rel) as f32);
            }
            if geometry.route.project(wx, wy).distance <= ROUTE_HALF_WIDTH {
                raster.set(r, c, ROUTE_HINT, 1.0);
            }
        }
    }
    rasterize_agents(&mut raster, &pose, agents, grid);
    raster
}

/// Heading of the closest road whose strip contains the point.
fn nearest_lane(roads: &[Road], x: f64, y: f64) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for road in roads {
        let p = road.centerline.project(x, y);
        if p.distance <= road.half_width && best.map_or(true, |(d, _)| p.distance < d) {
            best = Some((p.distance, p.heading));
        }
    }
    best.map(|(_, h)| h)
}

/// Raster cells covered by the ego footprint; the same for every frame.
pub fn ego_footprint_cells(grid: &GridSpec) -> Vec<(usize, usize)> {
    let test = BoxTest::new(&OrientedBox::new(Pose::new(0.0, 0.0, 0.0), EGO_LENGTH, EGO_WIDTH));
    let mut cells = Vec::new();
    for r in 0..grid.h {
        for c in 0..grid.w {
            let (x, y) = cell_center(grid, r, c);
            if test.contains(x, y) {
                cells.push((r, c));
            }
        }
    }
    cells
}
