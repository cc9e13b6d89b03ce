//! Pixel-space primitives: axis-aligned rectangles, binary masks, and the
//! 3-vector used for light directions.
//!
//! Pixel `(col, row)` has its center at `(col + 0.5, row + 0.5)`. Raster
//! coordinates grow rightward and downward; conversion to the y-up math frame
//! happens at the point of use.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::math;

/// Axis-aligned rectangle in pixels, `(x, y)` top-left, half-open extents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> u64 {
        u64::from(self.w) * u64::from(self.h)
    }

    pub fn is_empty(&self) -> bool {
        self.w == 0 || self.h == 0
    }

    pub fn right(&self) -> u32 {
        self.x + self.w
    }

    pub fn bottom(&self) -> u32 {
        self.y + self.h
    }

    pub fn contains(&self, col: u32, row: u32) -> bool {
        col >= self.x && col < self.right() && row >= self.y && row < self.bottom()
    }

    /// Rectangle intersection; `None` when disjoint or degenerate.
    pub fn intersection(&self, other: &Rect) -> Option<Rect> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        if x0 < x1 && y0 < y1 {
            Some(Rect::new(x0, y0, x1 - x0, y1 - y0))
        } else {
            None
        }
    }

    /// Intersection-over-union of two rectangles.
    pub fn iou(&self, other: &Rect) -> f64 {
        let inter = self.intersection(other).map_or(0, |r| r.area());
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Center of the bottom edge at pixel-center precision: the point an
    /// object "stands on".
    pub fn base_point(&self) -> (f64, f64) {
        (
            f64::from(self.x) + f64::from(self.w) / 2.0,
            f64::from(self.y) + f64::from(self.h) - 0.5,
        )
    }
}

/// Binary raster the size of the source image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl Mask {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; (width as usize) * (height as usize)],
        }
    }

    /// Mask with exactly the pixels of `rect` set (clipped to the raster).
    pub fn from_rect(width: u32, height: u32, rect: Rect) -> Self {
        let mut m = Self::empty(width, height);
        for row in rect.y..rect.bottom().min(height) {
            for col in rect.x..rect.right().min(width) {
                m.set(col, row, true);
            }
        }
        m
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    fn idx(&self, col: u32, row: u32) -> usize {
        row as usize * self.width as usize + col as usize
    }

    pub fn get(&self, col: u32, row: u32) -> bool {
        col < self.width && row < self.height && self.bits[self.idx(col, row)]
    }

    pub fn set(&mut self, col: u32, row: u32, value: bool) {
        if col < self.width && row < self.height {
            let i = self.idx(col, row);
            self.bits[i] = value;
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&b| !b)
    }

    /// Iterator over set pixel coordinates in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| ((i as u32) % w, (i as u32) / w))
    }

    /// Tight bounding box of the set pixels; `None` for an empty mask.
    pub fn tight_bbox(&self) -> Option<Rect> {
        let mut min_c = u32::MAX;
        let mut min_r = u32::MAX;
        let mut max_c = 0u32;
        let mut max_r = 0u32;
        let mut any = false;
        for (c, r) in self.pixels() {
            any = true;
            min_c = min_c.min(c);
            min_r = min_r.min(r);
            max_c = max_c.max(c);
            max_r = max_r.max(r);
        }
        any.then(|| Rect::new(min_c, min_r, max_c - min_c + 1, max_r - min_r + 1))
    }

    /// Centroid of the set pixels at pixel-center precision.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let mut sx = 0.0;
        let mut sy = 0.0;
        let mut n = 0usize;
        for (c, r) in self.pixels() {
            sx += f64::from(c) + 0.5;
            sy += f64::from(r) + 0.5;
            n += 1;
        }
        (n > 0).then(|| (sx / n as f64, sy / n as f64))
    }

    pub fn count_in_rect(&self, rect: &Rect) -> usize {
        self.pixels().filter(|&(c, r)| rect.contains(c, r)).count()
    }
}

/// 3-vector in the y-up math frame: x right, y up, z toward the viewer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(&self, other: &Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(&self) -> f64 {
        math::sqrt(self.dot(self))
    }

    /// Unit-length copy; `None` when the norm is (numerically) zero.
    pub fn normalized(&self) -> Option<Vec3> {
        let n = self.norm();
        (n > 1e-12).then(|| Vec3::new(self.x / n, self.y / n, self.z / n))
    }

    pub fn is_unit(&self, tol: f64) -> bool {
        math::abs(self.norm() - 1.0) <= tol
    }

    /// Angle to another vector in radians, with the dot product clamped
    /// against rounding drift.
    pub fn angle_to(&self, other: &Vec3) -> f64 {
        let d = self.dot(other).clamp(-1.0, 1.0);
        math::acos(d)
    }
}

impl fmt::Display for Vec3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.6}, {:.6}, {:.6})", self.x, self.y, self.z)
    }
}
