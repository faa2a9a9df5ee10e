//! Per-pixel membership probabilities of a probabilistic box and the spatial
//! quality of a (ground truth, detection) pair.
//!
//! Each corner coordinate is an independent univariate Gaussian, so the
//! probability that a pixel center `(u, v)` lies inside the box factorizes as
//!
//! ```text
//! P(u, v) = [P(x1 <= u) * P(x2 >= u)] * [P(y1 <= v) * P(y2 >= v)]
//! ```
//!
//! and the field is stored alongside its two 1D factors.

use std::sync::OnceLock;

use crate::detection::{GroundTruthObject, ProbabilisticBox};
use crate::geometry::{Pixel, PixelRect};

/// Floor applied to every log argument.
pub const PROB_EPSILON: f64 = 1e-14;

/// `P(X <= value)` for `X ~ N(mean, variance)`; a step at `mean` when the variance is zero.
pub fn gaussian_corner_cdf(value: f64, mean: f64, variance: f64) -> f64 {
    if variance <= 0.0 {
        return if value >= mean { 1.0 } else { 0.0 };
    }
    let z = (value - mean) / variance.sqrt();
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// `P(X >= value)`, computed without cancellation.
fn gaussian_corner_sf(value: f64, mean: f64, variance: f64) -> f64 {
    gaussian_corner_cdf(-value, -mean, variance)
}

/// Standard-normal quantile of `1 - PROB_EPSILON`.
fn tail_sigmas() -> f64 {
    static Z: OnceLock<f64> = OnceLock::new();
    *Z.get_or_init(|| {
        let (mut lo, mut hi) = (0.0f64, 40.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if gaussian_corner_cdf(-mid, 0.0, 1.0) > PROB_EPSILON {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    })
}

/// Membership probabilities over a rectangular support; zero outside it.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelProbabilityField {
    region: PixelRect,
    col_factors: Vec<f64>,
    row_factors: Vec<f64>,
    probs: Vec<f64>,
}

impl PixelProbabilityField {
    pub fn region(&self) -> PixelRect {
        self.region
    }

    /// Row-major probabilities over `region`.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, pixel: Pixel) -> f64 {
        if !self.region.contains(pixel) {
            return 0.0;
        }
        let (cx, cy) = (
            (pixel.x - self.region.x0) as usize,
            (pixel.y - self.region.y0) as usize,
        );
        self.probs[cy * self.region.width() as usize + cx]
    }

    #[inline]
    fn row(&self, y: u32) -> &[f64] {
        let w = self.region.width() as usize;
        let start = (y - self.region.y0) as usize * w;
        &self.probs[start..start + w]
    }

    /// Separable factors along x (length `region.width()`) and y (length `region.height()`).
    pub fn factors(&self) -> (&[f64], &[f64]) {
        (&self.col_factors, &self.row_factors)
    }
}

/// Rasterizes the membership probabilities of `pbox` over the image.
///
/// The support is the box inflated by `Phi^-1(1 - eps) * sigma` on each side (plus one
/// pixel), clipped to the image; beyond it every factor is below the clamp floor.
pub fn pixel_field(pbox: &ProbabilisticBox, image_w: u32, image_h: u32) -> PixelProbabilityField {
    let b = pbox.bbox();
    let (tl, br) = (pbox.cov_top_left(), pbox.cov_bottom_right());
    let z = tail_sigmas();
    let support = PixelRect::spanning(
        b.x1() - z * tl.cxx().sqrt() - 1.0,
        b.y1() - z * tl.cyy().sqrt() - 1.0,
        b.x2() + z * br.cxx().sqrt() + 1.0,
        b.y2() + z * br.cyy().sqrt() + 1.0,
    );
    let region = support.intersect(&PixelRect::image(image_w, image_h));

    let col_factors: Vec<f64> = (region.x0..region.x1)
        .map(|x| {
            let u = x as f64 + 0.5;
            gaussian_corner_cdf(u, b.x1(), tl.cxx()) * gaussian_corner_sf(u, b.x2(), br.cxx())
        })
        .collect();
    let row_factors: Vec<f64> = (region.y0..region.y1)
        .map(|y| {
            let v = y as f64 + 0.5;
            gaussian_corner_cdf(v, b.y1(), tl.cyy()) * gaussian_corner_sf(v, b.y2(), br.cyy())
        })
        .collect();

    let mut probs = Vec::with_capacity(region.len());
    for &fy in &row_factors {
        probs.extend(col_factors.iter().map(|&fx| fx * fy));
    }

    PixelProbabilityField {
        region,
        col_factors,
        row_factors,
        probs,
    }
}

#[inline]
fn ln_floor(p: f64) -> f64 {
    if p > PROB_EPSILON {
        p.ln()
    } else {
        PROB_EPSILON.ln()
    }
}

#[inline]
fn ln_complement(p: f64) -> f64 {
    if p < 1e-9 {
        // ln(1 - p) = -p - p^2/2 - ...; the remainder is below f64 resolution here.
        -p - 0.5 * p * p
    } else if 1.0 - p > PROB_EPSILON {
        (-p).ln_1p()
    } else {
        PROB_EPSILON.ln()
    }
}

/// Spatial quality of the detection field against `gt`:
///
/// `exp((1/N) sum_{x in S} ln P(x) + (1/N) sum_{x in BG} ln(1 - P(x)))`
///
/// with `N` the pixel count of the true box, `S` its foreground mask, and `BG` the
/// support pixels outside the true box that carry probability above the floor.
/// Log arguments are floored at [`PROB_EPSILON`]. A detection placing no
/// foreground pixel above the floor has quality zero, as does a ground truth
/// whose box holds no pixels.
pub fn spatial_quality(gt: &GroundTruthObject, field: &PixelProbabilityField) -> f64 {
    let n = gt.box_pixel_count();
    if n == 0 {
        return 0.0;
    }
    let gt_rect = gt.bbox().pixel_rect();
    let region = field.region();
    if region.intersect(&gt_rect).is_empty() {
        return 0.0;
    }

    let mut overlap = false;
    let mut fg = 0.0;
    let mut fg_term = |p: f64| {
        overlap |= p > PROB_EPSILON;
        fg += ln_floor(p);
    };
    match gt.mask() {
        Some(mask) => mask.pixels().iter().for_each(|&px| fg_term(field.prob(px))),
        None => {
            let inside = gt_rect.intersect(&region);
            for y in inside.y0..inside.y1 {
                let row = field.row(y);
                let lo = (inside.x0 - region.x0) as usize;
                let hi = (inside.x1 - region.x0) as usize;
                row[lo..hi].iter().for_each(|&p| fg_term(p));
            }
            let outside = n - inside.len();
            fg += outside as f64 * PROB_EPSILON.ln();
        }
    }
    if !overlap {
        return 0.0;
    }

    let mut bg = 0.0;
    let mut bg_row = |row: &[f64]| {
        for &p in row {
            if p > PROB_EPSILON {
                bg += ln_complement(p);
            }
        }
    };
    for y in region.y0..region.y1 {
        let row = field.row(y);
        if y >= gt_rect.y0 && y < gt_rect.y1 {
            let cut_lo = gt_rect.x0.clamp(region.x0, region.x1) - region.x0;
            let cut_hi = gt_rect.x1.clamp(region.x0, region.x1) - region.x0;
            bg_row(&row[..cut_lo as usize]);
            bg_row(&row[cut_hi as usize..]);
        } else {
            bg_row(row);
        }
    }

    ((fg + bg) / n as f64).exp().clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::{CornerCovariance, PixelMask};
    use crate::geometry::BoundingBox;

    fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
        BoundingBox::new(x1, y1, x2, y2).unwrap()
    }

    fn gaussian_box(b: BoundingBox, var: f64) -> ProbabilisticBox {
        let c = CornerCovariance::diagonal(var, var).unwrap();
        ProbabilisticBox::new(b, c, c).unwrap()
    }

    #[test]
    fn corner_cdf_basics() {
        assert_eq!(gaussian_corner_cdf(3.0, 3.0, 2.0), 0.5);
        assert_eq!(gaussian_corner_cdf(3.1, 3.0, 0.0), 1.0);
        assert_eq!(gaussian_corner_cdf(3.0, 3.0, 0.0), 1.0);
        assert_eq!(gaussian_corner_cdf(2.9, 3.0, 0.0), 0.0);
        assert!((gaussian_corner_cdf(1.0 + 2.0, 1.0, 4.0) - 0.841_344_746_068_543).abs() < 1e-12);
    }

    #[test]
    fn tail_quantile_hits_the_floor() {
        let z = tail_sigmas();
        assert!((7.6..7.7).contains(&z), "{z}");
        assert!(gaussian_corner_cdf(-z, 0.0, 1.0) <= PROB_EPSILON);
    }

    #[test]
    fn crisp_field_is_the_box_indicator() {
        let b = bb(2.0, 3.0, 7.5, 6.0);
        let field = pixel_field(&ProbabilisticBox::crisp(b), 12, 12);
        let inside = b.pixel_rect();
        for y in 0..12 {
            for x in 0..12 {
                let px = Pixel::new(x, y);
                let want = if inside.contains(px) { 1.0 } else { 0.0 };
                assert_eq!(field.prob(px).to_bits(), f64::to_bits(want), "{px:?}");
            }
        }
    }

    #[test]
    fn corner_pixel_gets_a_quarter() {
        // pixel (10, 10) has center (10.5, 10.5) sitting on the top-left corner
        let field = pixel_field(&gaussian_box(bb(10.5, 10.5, 60.5, 60.5), 4.0), 80, 80);
        assert!((field.prob(Pixel::new(10, 10)) - 0.25).abs() < 1e-9);
    }

    #[test]
    fn field_is_clipped_to_image() {
        let field = pixel_field(&gaussian_box(bb(0.0, 0.0, 5.0, 5.0), 9.0), 8, 6);
        let r = field.region();
        assert_eq!((r.x0, r.y0, r.x1, r.y1), (0, 0, 8, 6));
        assert!(field.probs().iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn perfect_field_scores_one() {
        let b = bb(2.0, 2.0, 6.0, 6.0);
        let gt = GroundTruthObject::new(0, b, None).unwrap();
        let field = pixel_field(&ProbabilisticBox::crisp(b), 10, 10);
        assert_eq!(spatial_quality(&gt, &field), 1.0);
    }

    #[test]
    fn background_pixels_at_one_hit_the_floor() {
        // 4x4 true box; the detection covers it plus a 4-pixel column on the right.
        let gt = GroundTruthObject::new(0, bb(0.0, 0.0, 4.0, 4.0), None).unwrap();
        let field = pixel_field(&ProbabilisticBox::crisp(bb(0.0, 0.0, 5.0, 4.0)), 10, 10);
        let want = ((4.0 / 16.0) * PROB_EPSILON.ln()).exp();
        let got = spatial_quality(&gt, &field);
        assert!(((got - want) / want).abs() < 1e-6, "{got} vs {want}");
        assert!((got - 3.16e-4).abs() < 1e-5);
    }

    #[test]
    fn uniform_foreground_gives_that_probability() {
        // image == box, so there is no background
        let gt = GroundTruthObject::new(0, bb(0.0, 0.0, 4.0, 4.0), None).unwrap();
        let mut field = pixel_field(&ProbabilisticBox::crisp(bb(0.0, 0.0, 4.0, 4.0)), 4, 4);
        field.probs.iter_mut().for_each(|p| *p *= 0.3);
        assert!((spatial_quality(&gt, &field) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn disjoint_detection_scores_zero() {
        let gt = GroundTruthObject::new(0, bb(0.0, 0.0, 4.0, 4.0), None).unwrap();
        let field = pixel_field(&ProbabilisticBox::crisp(bb(10.0, 10.0, 14.0, 14.0)), 20, 20);
        assert_eq!(spatial_quality(&gt, &field), 0.0);
        let degenerate = GroundTruthObject::new(0, bb(1.0, 1.0, 1.0, 3.0), None).unwrap();
        let field = pixel_field(&ProbabilisticBox::crisp(bb(0.0, 0.0, 4.0, 4.0)), 20, 20);
        assert_eq!(spatial_quality(&degenerate, &field), 0.0);
    }

    #[test]
    fn mask_interior_background_is_not_penalized() {
        let b = bb(0.0, 0.0, 4.0, 4.0);
        let mask = PixelMask::new(vec![Pixel::new(1, 1), Pixel::new(2, 1), Pixel::new(1, 2)]);
        let gt = GroundTruthObject::new(0, b, Some(mask)).unwrap();
        let field = pixel_field(&ProbabilisticBox::crisp(b), 8, 8);
        assert_eq!(spatial_quality(&gt, &field), 1.0);
    }

    #[test]
    fn field_decays_outside_the_box() {
        let field = pixel_field(&gaussian_box(bb(20.0, 20.0, 30.0, 30.0), 6.0), 60, 60);
        let row: Vec<f64> = (30..60).map(|x| field.prob(Pixel::new(x, 25))).collect();
        assert!(row.windows(2).all(|w| w[1] <= w[0]));
        let col: Vec<f64> = (0..20).rev().map(|y| field.prob(Pixel::new(25, y))).collect();
        assert!(col.windows(2).all(|w| w[1] <= w[0]));
    }
}
