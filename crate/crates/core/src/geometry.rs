//! Axis-aligned boxes in continuous image coordinates and their pixel rasterization.
//!
//! A pixel `(x, y)` belongs to a box iff its center `(x + 0.5, y + 0.5)` lies inside
//! the closed box. Zero-area boxes rasterize to nothing.

use crate::error::{Error, Result};

/// Box corners in pixel coordinates, origin top-left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        if ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidBox(format!(
                "non-finite coordinate in [{x1}, {y1}, {x2}, {y2}]"
            )));
        }
        if x1 > x2 || y1 > y2 {
            return Err(Error::InvalidBox(format!(
                "corners out of order in [{x1}, {y1}, {x2}, {y2}]"
            )));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    pub fn y1(&self) -> f64 {
        self.y1
    }

    pub fn x2(&self) -> f64 {
        self.x2
    }

    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn corners(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))
    }

    /// Closed-box containment of a continuous point.
    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x1 && x <= self.x2 && y >= self.y1 && y <= self.y2
    }

    pub fn contains_pixel(&self, pixel: Pixel) -> bool {
        self.area() > 0.0 && self.contains_point(pixel.x as f64 + 0.5, pixel.y as f64 + 0.5)
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Clamps the box to `[0, width] x [0, height]`.
    pub fn clamp_to(&self, width: u32, height: u32) -> BoundingBox {
        let (w, h) = (width as f64, height as f64);
        BoundingBox {
            x1: self.x1.clamp(0.0, w),
            y1: self.y1.clamp(0.0, h),
            x2: self.x2.clamp(0.0, w),
            y2: self.y2.clamp(0.0, h),
        }
    }

    pub fn within(&self, width: u32, height: u32) -> bool {
        self.x1 >= 0.0 && self.y1 >= 0.0 && self.x2 <= width as f64 && self.y2 <= height as f64
    }

    /// Pixels whose centers lie inside the closed box.
    pub fn pixel_rect(&self) -> PixelRect {
        if self.area() <= 0.0 {
            return PixelRect::EMPTY;
        }
        PixelRect::spanning(self.x1, self.y1, self.x2, self.y2)
    }
}

/// Intersection over union; zero when the union has zero area.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pixel {
    pub x: u32,
    pub y: u32,
}

impl Pixel {
    pub fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }
}

/// Half-open integer pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl PixelRect {
    pub const EMPTY: PixelRect = PixelRect {
        x0: 0,
        y0: 0,
        x1: 0,
        y1: 0,
    };

    pub fn image(width: u32, height: u32) -> Self {
        Self {
            x0: 0,
            y0: 0,
            x1: width,
            y1: height,
        }
    }

    /// Pixels whose centers fall in the closed continuous range.
    pub(crate) fn spanning(lx: f64, ly: f64, hx: f64, hy: f64) -> Self {
        let lo = |v: f64| (v - 0.5).ceil().max(0.0);
        let hi = |v: f64| ((v - 0.5).floor() + 1.0).max(0.0);
        let (x0, x1) = (lo(lx), hi(hx));
        let (y0, y1) = (lo(ly), hi(hy));
        if x0 >= x1 || y0 >= y1 {
            return Self::EMPTY;
        }
        let cap = |v: f64| v.min(u32::MAX as f64) as u32;
        Self {
            x0: cap(x0),
            y0: cap(y0),
            x1: cap(x1),
            y1: cap(y1),
        }
    }

    pub fn width(&self) -> u32 {
        self.x1.saturating_sub(self.x0)
    }

    pub fn height(&self) -> u32 {
        self.y1.saturating_sub(self.y0)
    }

    pub fn len(&self) -> usize {
        self.width() as usize * self.height() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, pixel: Pixel) -> bool {
        pixel.x >= self.x0 && pixel.x < self.x1 && pixel.y >= self.y0 && pixel.y < self.y1
    }

    pub fn intersect(&self, other: &PixelRect) -> PixelRect {
        let r = PixelRect {
            x0: self.x0.max(other.x0),
            y0: self.y0.max(other.y0),
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
        };
        if r.x0 >= r.x1 || r.y0 >= r.y1 {
            PixelRect::EMPTY
        } else {
            r
        }
    }

    /// Row-major pixel iteration.
    pub fn pixels(&self) -> impl Iterator<Item = Pixel> + '_ {
        let (x0, x1) = (self.x0, self.x1);
        (self.y0..self.y1).flat_map(move |y| (x0..x1).map(move |x| Pixel { x, y }))
    }
}
