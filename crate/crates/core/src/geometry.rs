//! Planar poses, oriented rectangles and the cell lattice used for
//! occupancy and collision tests.

use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = libm::remainder(a, 2.0 * PI);
    if w <= -PI {
        w += 2.0 * PI;
    }
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Rounds to the nearest `f32` value.
pub fn quantize(v: f64) -> f64 {
    v as f32 as f64
}

/// Wraps then rounds to `f32`, keeping the result inside `(−π, π]`.
pub fn quantize_heading(h: f64) -> f64 {
    let w = wrap_angle(h);
    let mut q = w as f32;
    if (q as f64) > PI {
        q = next_down_f32(q);
    }
    if (q as f64) <= -PI {
        q = -next_down_f32(PI as f32);
    }
    q as f64
}

fn next_down_f32(v: f32) -> f32 {
    // v is positive and finite here
    f32::from_bits(v.to_bits() - 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub const fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading }
    }

    /// World point expressed in this pose's frame.
    pub fn to_local(&self, px: f64, py: f64) -> (f64, f64) {
        let (s, c) = (libm::sin(self.heading), libm::cos(self.heading));
        let (dx, dy) = (px - self.x, py - self.y);
        (c * dx + s * dy, -s * dx + c * dy)
    }

    /// Local point of this frame expressed in the world.
    pub fn to_world(&self, lx: f64, ly: f64) -> (f64, f64) {
        let (s, c) = (libm::sin(self.heading), libm::cos(self.heading));
        (self.x + c * lx - s * ly, self.y + s * lx + c * ly)
    }

    /// `other` re-expressed in this pose's frame.
    pub fn relative(&self, other: &Pose) -> Pose {
        let (x, y) = self.to_local(other.x, other.y);
        Pose::new(x, y, wrap_angle(other.heading - self.heading))
    }
}

/// Rectangle centered on `center`, long axis along `center.heading`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrientedBox {
    pub center: Pose,
    pub length: f64,
    pub width: f64,
}

impl OrientedBox {
    pub fn new(center: Pose, length: f64, width: f64) -> Self {
        Self {
            center,
            length,
            width,
        }
    }

    pub fn inflated(&self, margin: f64) -> Self {
        Self::new(self.center, self.length + 2.0 * margin, self.width + 2.0 * margin)
    }

    pub fn corners(&self) -> [(f64, f64); 4] {
        let (hl, hw) = (0.5 * self.length, 0.5 * self.width);
        [
            self.center.to_world(hl, hw),
            self.center.to_world(-hl, hw),
            self.center.to_world(-hl, -hw),
            self.center.to_world(hl, -hw),
        ]
    }

    /// Closed containment test.
    pub fn contains(&self, px: f64, py: f64) -> bool {
        let (lx, ly) = self.center.to_local(px, py);
        lx.abs() <= 0.5 * self.length && ly.abs() <= 0.5 * self.width
    }

    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        let c = self.corners();
        let mut b = (c[0].0, c[0].1, c[0].0, c[0].1);
        for (x, y) in &c[1..] {
            b.0 = b.0.min(*x);
            b.1 = b.1.min(*y);
            b.2 = b.2.max(*x);
            b.3 = b.3.max(*y);
        }
        b
    }

    /// Separating-axis overlap test (touching counts as overlap).
    pub fn overlaps(&self, other: &OrientedBox) -> bool {
        let (ca, cb) = (self.corners(), other.corners());
        for heading in [self.center.heading, other.center.heading] {
            for axis in [
                (libm::cos(heading), libm::sin(heading)),
                (-libm::sin(heading), libm::cos(heading)),
            ] {
                let (amin, amax) = project(&ca, axis);
                let (bmin, bmax) = project(&cb, axis);
                if amax < bmin || bmax < amin {
                    return false;
                }
            }
        }
        true
    }
}

fn project(corners: &[(f64, f64); 4], axis: (f64, f64)) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (x, y) in corners {
        let p = x * axis.0 + y * axis.1;
        lo = lo.min(p);
        hi = hi.max(p);
    }
    (lo, hi)
}

/// Integer lattice with cell `(i, j)` centered at `((i+½)·size, (j+½)·size)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lattice {
    pub cell_size: f64,
}

impl Lattice {
    pub fn center(&self, i: i64, j: i64) -> (f64, f64) {
        (
            (i as f64 + 0.5) * self.cell_size,
            (j as f64 + 0.5) * self.cell_size,
        )
    }

    /// Inclusive index range of cells whose centers may fall in `[lo, hi]`.
    pub fn index_range(&self, lo: f64, hi: f64) -> (i64, i64) {
        let a = libm::floor(lo / self.cell_size - 0.5) as i64;
        let b = libm::ceil(hi / self.cell_size - 0.5) as i64;
        (a, b)
    }

    /// True when some cell center lies inside both boxes.
    pub fn boxes_share_cell(&self, a: &OrientedBox, b: &OrientedBox) -> bool {
        let (ax0, ay0, ax1, ay1) = a.bounds();
        let (bx0, by0, bx1, by1) = b.bounds();
        let (x0, x1) = (ax0.max(bx0), ax1.min(bx1));
        let (y0, y1) = (ay0.max(by0), ay1.min(by1));
        if x0 > x1 || y0 > y1 {
            return false;
        }
        let (i0, i1) = self.index_range(x0, x1);
        let (j0, j1) = self.index_range(y0, y1);
        for i in i0..=i1 {
            for j in j0..=j1 {
                let (cx, cy) = self.center(i, j);
                if a.contains(cx, cy) && b.contains(cx, cy) {
                    return true;
                }
            }
        }
        false
    }
}
