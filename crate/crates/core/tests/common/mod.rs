//! Independent reference implementations used by the integration tests.
//! Nothing here calls into the library's numerics.

#![allow(dead_code)]

use probdet::{BoundingBox, CornerCovariance, Detection, GroundTruthObject, LabelVector, PixelMask, ProbabilisticBox};
use probdet::geometry::Pixel;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-14;

/// erfc from the Maclaurin series of erf for |x| < 2.5 and a Lentz continued
/// fraction beyond.
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < 2.5 {
        let mut term = x;
        let mut sum = x;
        let mut n = 0.0;
        loop {
            n += 1.0;
            term *= -x * x / n;
            let add = term / (2.0 * n + 1.0);
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        return 1.0 - 2.0 / std::f64::consts::PI.sqrt() * sum;
    }
    // erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + 1/2/(x + 1/(x + 3/2/(x + ...))))
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64 / 2.0;
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / std::f64::consts::PI.sqrt() / f
}

/// P(corner <= value) for a Gaussian corner coordinate.
pub fn below(value: f64, mean: f64, var: f64) -> f64 {
    if var <= 0.0 {
        return if value >= mean { 1.0 } else { 0.0 };
    }
    0.5 * erfc(-(value - mean) / (2.0 * var).sqrt())
}

/// P(corner >= value).
pub fn above(value: f64, mean: f64, var: f64) -> f64 {
    if var <= 0.0 {
        return if value <= mean { 1.0 } else { 0.0 };
    }
    0.5 * erfc((value - mean) / (2.0 * var).sqrt())
}

/// Membership probability of the pixel whose center is (u, v).
pub fn pixel_prob(d: &ProbabilisticBox, u: f64, v: f64) -> f64 {
    let b = d.bbox();
    let (tl, br) = (d.cov_top_left(), d.cov_bottom_right());
    below(u, b.x1(), tl.cxx()) * above(u, b.x2(), br.cxx()) * below(v, b.y1(), tl.cyy()) * above(v, b.y2(), br.cyy())
}

fn in_box(b: &BoundingBox, x: u32, y: u32) -> bool {
    let (u, v) = (x as f64 + 0.5, y as f64 + 0.5);
    b.area() > 0.0 && u >= b.x1() && u <= b.x2() && v >= b.y1() && v <= b.y2()
}

/// Spatial quality by visiting every pixel of the image.
pub fn naive_spatial_quality(gt: &GroundTruthObject, det: &ProbabilisticBox, w: u32, h: u32) -> f64 {
    let gb = gt.bbox();
    let mut n = 0usize;
    let mut fg = 0.0;
    let mut bg = 0.0;
    let mut overlap = false;
    for y in 0..h {
        for x in 0..w {
            let p = if det.bbox().area() > 0.0 {
                pixel_prob(det, x as f64 + 0.5, y as f64 + 0.5)
            } else {
                0.0
            };
            let inside = in_box(gb, x, y);
            n += inside as usize;
            let foreground = match gt.mask() {
                Some(m) => m.pixels().contains(&Pixel::new(x, y)),
                None => inside,
            };
            if foreground {
                overlap |= p > EPS;
                fg += p.max(EPS).ln();
            }
            if !inside && p > EPS {
                bg += (1.0 - p).max(EPS).ln();
            }
        }
    }
    if n == 0 || !overlap {
        return 0.0;
    }
    ((fg + bg) / n as f64).exp()
}

/// `1 - P` loses everything below 1e-16; compare in log space instead when needed.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Maximum-weight matching by trying every injection of rows into columns.
/// Zero-weight pairs are not matches. Ties on the total go to the
/// lexicographically smallest sorted pair list.
pub fn brute_force_matching(w: &[Vec<f64>]) -> (Vec<(usize, usize)>, f64) {
    let rows = w.len();
    let cols = w.first().map_or(0, |r| r.len());
    let mut best: Option<(Vec<(usize, usize)>, f64)> = None;
    let mut current = Vec::new();
    fn rec(
        w: &[Vec<f64>],
        row: usize,
        cols: usize,
        used: &mut Vec<bool>,
        current: &mut Vec<(usize, usize)>,
        best: &mut Option<(Vec<(usize, usize)>, f64)>,
    ) {
        if row == w.len() {
            let total: f64 = current.iter().map(|&(r, c)| w[r][c]).sum();
            let better = match best {
                None => true,
                Some((pairs, t)) => total > *t || (total == *t && current < pairs),
            };
            if better {
                *best = Some((current.clone(), total));
            }
            return;
        }
        rec(w, row + 1, cols, used, current, best);
        for c in 0..cols {
            if !used[c] && w[row][c] > 0.0 {
                used[c] = true;
                current.push((row, c));
                rec(w, row + 1, cols, used, current, best);
                current.pop();
                used[c] = false;
            }
        }
    }
    rec(w, 0, cols, &mut vec![false; cols], &mut current, &mut best);
    let _ = rows;
    best.unwrap_or_default()
}

pub fn random_box(rng: &mut ChaCha8Rng, w: u32, h: u32, max_side: f64) -> BoundingBox {
    let bw = rng.gen_range(0.5..=max_side.min(w as f64));
    let bh = rng.gen_range(0.5..=max_side.min(h as f64));
    let x1 = rng.gen_range(0.0..=(w as f64 - bw));
    let y1 = rng.gen_range(0.0..=(h as f64 - bh));
    BoundingBox::new(x1, y1, x1 + bw, y1 + bh).unwrap()
}

pub fn random_pbox(rng: &mut ChaCha8Rng, b: BoundingBox) -> ProbabilisticBox {
    let mut var = || if rng.gen_bool(0.15) { 0.0 } else { rng.gen_range(0.01..25.0) };
    let tl = CornerCovariance::diagonal(var(), var()).unwrap();
    let br = CornerCovariance::diagonal(var(), var()).unwrap();
    ProbabilisticBox::new(b, tl, br).unwrap()
}

/// Random sub-mask of the box pixels, never empty when the box has pixels.
pub fn random_mask(rng: &mut ChaCha8Rng, b: &BoundingBox) -> Option<PixelMask> {
    let px: Vec<Pixel> = b.pixel_rect().pixels().collect();
    if px.is_empty() {
        return None;
    }
    let mut keep: Vec<Pixel> = px.iter().copied().filter(|_| rng.gen_bool(0.7)).collect();
    if keep.is_empty() {
        keep.push(px[0]);
    }
    Some(PixelMask::new(keep))
}

pub fn random_labels(rng: &mut ChaCha8Rng, k: usize) -> LabelVector {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
    let total: f64 = raw.iter().sum::<f64>() * rng.gen_range(1.0..1.5);
    LabelVector::new(raw.iter().map(|v| v / total).collect()).unwrap()
}

pub fn random_detection(rng: &mut ChaCha8Rng, w: u32, h: u32, k: usize, source: &str) -> Detection {
    let b = random_box(rng, w, h, 30.0);
    Detection::new(random_pbox(rng, b), random_labels(rng, k), source)
}
