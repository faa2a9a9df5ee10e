//! Run-length encoding of binary masks over a full image.
//!
//! Pixels are visited row-major (`index = y * width + x`); `counts` alternates
//! background and foreground run lengths, starting with background (possibly 0).

use serde::{Deserialize, Serialize};

use crate::geometry::Pixel;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rle {
    /// `[height, width]`
    pub size: [u32; 2],
    pub counts: Vec<u64>,
}

impl Rle {
    /// Encodes a set of pixels; pixels outside the image are ignored.
    pub fn encode(pixels: &[Pixel], width: u32, height: u32) -> Rle {
        let mut idx: Vec<u64> = pixels
            .iter()
            .filter(|p| p.x < width && p.y < height)
            .map(|p| p.y as u64 * width as u64 + p.x as u64)
            .collect();
        idx.sort_unstable();
        idx.dedup();

        let total = width as u64 * height as u64;
        let mut counts = Vec::new();
        let mut cursor = 0u64;
        let mut i = 0;
        while i < idx.len() {
            let start = idx[i];
            let mut end = start + 1;
            while i + 1 < idx.len() && idx[i + 1] == end {
                end += 1;
                i += 1;
            }
            counts.push(start - cursor);
            counts.push(end - start);
            cursor = end;
            i += 1;
        }
        if cursor < total || counts.is_empty() {
            counts.push(total - cursor);
        }
        Rle {
            size: [height, width],
            counts,
        }
    }

    /// Decodes to foreground pixels in row-major order.
    pub fn decode(&self) -> Result<Vec<Pixel>, String> {
        let [height, width] = self.size;
        let total = width as u64 * height as u64;
        let sum: u64 = self.counts.iter().sum();
        if sum != total {
            return Err(format!("run lengths sum to {sum}, expected {height}x{width} = {total}"));
        }
        let mut pixels = Vec::new();
        let mut cursor = 0u64;
        for (k, &run) in self.counts.iter().enumerate() {
            if k % 2 == 1 {
                for i in cursor..cursor + run {
                    pixels.push(Pixel::new((i % width as u64) as u32, (i / width as u64) as u32));
                }
            }
            cursor += run;
        }
        Ok(pixels)
    }
}
