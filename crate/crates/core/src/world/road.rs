//! Road centerlines built from straight and circular-arc pieces.

use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

use crate::geometry::{wrap_angle, Pose};

#[derive(Clone, Copy, Debug, PartialEq)]
enum Piece {
    Line {
        start: Pose,
        length: f64,
    },
    /// `sweep > 0` turns left.
    Arc {
        start: Pose,
        radius: f64,
        sweep: f64,
    },
}

impl Piece {
    fn length(&self) -> f64 {
        match *self {
            Piece::Line { length, .. } => length,
            Piece::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    fn start(&self) -> Pose {
        match *self {
            Piece::Line { start, .. } | Piece::Arc { start, .. } => start,
        }
    }

    fn pose_at(&self, u: f64) -> Pose {
        match *self {
            Piece::Line { start, .. } => {
                let (x, y) = start.to_world(u, 0.0);
                Pose::new(x, y, start.heading)
            }
            Piece::Arc {
                start,
                radius,
                sweep,
            } => {
                let sign = sweep.signum();
                let (cx, cy) = arc_center(&start, radius, sign);
                let h = start.heading + sign * u / radius;
                Pose::new(
                    cx + sign * radius * libm::sin(h),
                    cy - sign * radius * libm::cos(h),
                    wrap_angle(h),
                )
            }
        }
    }

    /// `(u, distance)` of the closest point on this piece to `(px, py)`.
    fn closest(&self, px: f64, py: f64) -> (f64, f64) {
        let len = self.length();
        match *self {
            Piece::Line { start, .. } => {
                let (lx, ly) = start.to_local(px, py);
                let u = lx.clamp(0.0, len);
                let dx = lx - u;
                (u, libm::sqrt(dx * dx + ly * ly))
            }
            Piece::Arc {
                start,
                radius,
                sweep,
            } => {
                let sign = sweep.signum();
                let (cx, cy) = arc_center(&start, radius, sign);
                let (dx, dy) = (px - cx, py - cy);
                let h = libm::atan2(dy, dx) + sign * FRAC_PI_2;
                let turned = sign * wrap_angle(h - start.heading);
                let mut best = (0.0, dist(&self.pose_at(0.0), px, py));
                let end = dist(&self.pose_at(len), px, py);
                if end < best.1 {
                    best = (len, end);
                }
                if (0.0..=sweep.abs()).contains(&turned) {
                    let d = (libm::sqrt(dx * dx + dy * dy) - radius).abs();
                    if d < best.1 {
                        best = (turned * radius, d);
                    }
                }
                best
            }
        }
    }
}

fn arc_center(start: &Pose, radius: f64, sign: f64) -> (f64, f64) {
    (
        start.x - sign * radius * libm::sin(start.heading),
        start.y + sign * radius * libm::cos(start.heading),
    )
}

fn dist(p: &Pose, x: f64, y: f64) -> f64 {
    libm::sqrt((p.x - x) * (p.x - x) + (p.y - y) * (p.y - y))
}

/// Arc-length parameterized centerline.
#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    pieces: Vec<Piece>,
    offsets: Vec<f64>,
    end: Pose,
}

/// Closest-point query result.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub s: f64,
    pub distance: f64,
    pub heading: f64,
}

impl Path {
    pub fn starting_at(start: Pose) -> Self {
        Self {
            pieces: Vec::new(),
            offsets: Vec::new(),
            end: start,
        }
    }

    pub fn line(mut self, length: f64) -> Self {
        self.push(Piece::Line {
            start: self.end,
            length,
        });
        self
    }

    /// Positive `sweep` turns left.
    pub fn arc(mut self, radius: f64, sweep: f64) -> Self {
        self.push(Piece::Arc {
            start: self.end,
            radius,
            sweep,
        });
        self
    }

    fn push(&mut self, piece: Piece) {
        self.offsets.push(self.length());
        self.end = piece.pose_at(piece.length());
        self.pieces.push(piece);
    }

    pub fn length(&self) -> f64 {
        match (self.pieces.last(), self.offsets.last()) {
            (Some(p), Some(o)) => o + p.length(),
            _ => 0.0,
        }
    }

    /// Pose at arc length `s`; beyond either end the path continues straight.
    pub fn pose_at(&self, s: f64) -> Pose {
        let Some(first) = self.pieces.first() else {
            return self.end;
        };
        if s <= 0.0 {
            let start = first.start();
            let (x, y) = start.to_world(s, 0.0);
            return Pose::new(x, y, start.heading);
        }
        let total = self.length();
        if s >= total {
            let (x, y) = self.end.to_world(s - total, 0.0);
            return Pose::new(x, y, self.end.heading);
        }
        let idx = match self.offsets.iter().rposition(|o| *o <= s) {
            Some(i) => i,
            None => 0,
        };
        self.pieces[idx].pose_at(s - self.offsets[idx])
    }

    /// Reflection about the world x-axis, rebuilt piece by piece.
    pub fn mirrored(&self) -> Self {
        let start = match self.pieces.first() {
            Some(p) => p.start(),
            None => self.end,
        };
        let mut out = Path::starting_at(Pose::new(start.x, -start.y, wrap_angle(-start.heading)));
        for piece in &self.pieces {
            out = match *piece {
                Piece::Line { length, .. } => out.line(length),
                Piece::Arc { radius, sweep, .. } => out.arc(radius, -sweep),
            };
        }
        out
    }

    /// `(start_s, radius, sweep)` of every arc piece, in path order.
    pub fn arcs(&self) -> Vec<(f64, f64, f64)> {
        self.pieces
            .iter()
            .zip(&self.offsets)
            .filter_map(|(p, off)| match *p {
                Piece::Arc { radius, sweep, .. } => Some((*off, radius, sweep)),
                Piece::Line { .. } => None,
            })
            .collect()
    }

    pub fn project(&self, px: f64, py: f64) -> Projection {
        let mut best = Projection {
            s: 0.0,
            distance: f64::INFINITY,
            heading: 0.0,
        };
        for (piece, off) in self.pieces.iter().zip(&self.offsets) {
            let (u, d) = piece.closest(px, py);
            if d < best.distance {
                best = Projection {
                    s: off + u,
                    distance: d,
                    heading: piece.pose_at(u).heading,
                };
            }
        }
        best
    }
}

/// A drivable strip around a centerline.
#[derive(Clone, Debug, PartialEq)]
pub struct Road {
    pub centerline: Path,
    pub half_width: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    #[test]
    fn arc_endpoints() {
        let p = Path::starting_at(Pose::new(0.0, 0.0, 0.0))
            .line(5.0)
            .arc(4.0, FRAC_PI_2)
            .line(3.0);
        let end_arc = p.pose_at(5.0 + 4.0 * FRAC_PI_2);
        assert!((end_arc.x - 9.0).abs() < 1e-12);
        assert!((end_arc.y - 4.0).abs() < 1e-12);
        assert!((end_arc.heading - FRAC_PI_2).abs() < 1e-12);
        let end = p.pose_at(p.length());
        assert!((end.x - 9.0).abs() < 1e-12 && (end.y - 7.0).abs() < 1e-12);
    }

    #[test]
    fn right_arc_mirrors_left() {
        let l = Path::starting_at(Pose::new(0.0, 0.0, 0.0)).line(2.0).arc(5.0, PI / 2.0);
        let r = Path::starting_at(Pose::new(0.0, 0.0, 0.0)).line(2.0).arc(5.0, -PI / 2.0);
        for k in 0..20 {
            let s = k as f64 * 0.5;
            let (a, b) = (l.pose_at(s), r.pose_at(s));
            assert!((a.x - b.x).abs() < 1e-12);
            assert!((a.y + b.y).abs() < 1e-12);
            assert!((a.heading + b.heading).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_on_arc() {
        let p = Path::starting_at(Pose::new(0.0, 0.0, 0.0)).arc(5.0, FRAC_PI_2);
        // center (0, 5); a point at radius 4 on the 45 degree ray
        let a = PI / 4.0;
        let (px, py) = (4.0 * libm::sin(a), 5.0 - 4.0 * libm::cos(a));
        let proj = p.project(px, py);
        assert!((proj.distance - 1.0).abs() < 1e-12);
        assert!((proj.s - 5.0 * a).abs() < 1e-12);
        assert!((proj.heading - a).abs() < 1e-12);
    }
}
