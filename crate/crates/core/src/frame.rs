//! Image, mask and rectangle primitives shared by every stage of the pipeline.
//!
//! Frames are stored as interleaved RGB `f32` in row-major order with values in
//! the unit interval. All geometry uses `(row, col)` pixel indices.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// Default observation height.
pub const HEIGHT: usize = 64;
/// Default observation width.
pub const WIDTH: usize = 64;
/// Colour channels per pixel.
pub const CHANNELS: usize = 3;

pub type Rgb = [f32; 3];

/// Euclidean distance between two colours.
pub fn color_distance(a: Rgb, b: Rgb) -> f64 {
    let mut s = 0.0;
    for c in 0..3 {
        let d = a[c] as f64 - b[c] as f64;
        s += d * d;
    }
    libm::sqrt(s)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Frame {
    pub fn filled(height: usize, width: usize, color: Rgb) -> Self {
        let mut data = Vec::with_capacity(height * width * CHANNELS);
        for _ in 0..height * width {
            data.extend_from_slice(&color);
        }
        Self { height, width, data }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![0.0; height * width * CHANNELS] }
    }

    /// Wraps raw interleaved RGB data. Returns `None` if the length does not match.
    pub fn from_raw(height: usize, width: usize, data: Vec<f32>) -> Option<Self> {
        (data.len() == height * width * CHANNELS).then_some(Self { height, width, data })
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_raw(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Rgb {
        let i = (r * self.width + c) * CHANNELS;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Rgb) {
        let i = (r * self.width + c) * CHANNELS;
        self.data[i..i + CHANNELS].copy_from_slice(&v);
    }

    #[inline]
    pub fn channel(&self, r: usize, c: usize, ch: usize) -> f32 {
        self.data[(r * self.width + c) * CHANNELS + ch]
    }

    /// Mean of the three channels at a pixel.
    #[inline]
    pub fn luminance(&self, r: usize, c: usize) -> f32 {
        let p = self.get(r, c);
        (p[0] + p[1] + p[2]) / 3.0
    }

    /// Mean colour over the pixels of `mask`, or `None` for an empty mask.
    pub fn mean_color(&self, mask: &Mask) -> Option<Rgb> {
        let mut acc = [0.0f64; 3];
        let mut n = 0usize;
        for (r, c) in mask.iter_set() {
            let p = self.get(r, c);
            for k in 0..3 {
                acc[k] += p[k] as f64;
            }
            n += 1;
        }
        if n == 0 {
            return None;
        }
        Some([(acc[0] / n as f64) as f32, (acc[1] / n as f64) as f32, (acc[2] / n as f64) as f32])
    }

    /// Copies pixels from `src` wherever `mask` is set.
    pub fn paint_from(&mut self, src: &Frame, mask: &Mask) {
        for (r, c) in mask.iter_set() {
            self.set(r, c, src.get(r, c));
        }
    }
}

/// Axis-aligned pixel rectangle, `[r0, r1) x [c0, c1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub r0: usize,
    pub c0: usize,
    pub r1: usize,
    pub c1: usize,
}

impl Rect {
    pub fn new(r0: usize, c0: usize, r1: usize, c1: usize) -> Self {
        Self { r0, c0, r1, c1 }
    }

    #[inline]
    pub fn contains(&self, r: usize, c: usize) -> bool {
        r >= self.r0 && r < self.r1 && c >= self.c0 && c < self.c1
    }

    /// Containment test for a continuous point given as `(row, col)`.
    pub fn contains_point(&self, row: f64, col: f64) -> bool {
        row >= self.r0 as f64 && row < self.r1 as f64 && col >= self.c0 as f64 && col < self.c1 as f64
    }

    pub fn area(&self) -> usize {
        self.r1.saturating_sub(self.r0) * self.c1.saturating_sub(self.c0)
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    /// Grows the rectangle by `by` pixels on every side, clipped to `height x width`.
    pub fn dilate(&self, by: usize, height: usize, width: usize) -> Rect {
        Rect {
            r0: self.r0.saturating_sub(by),
            c0: self.c0.saturating_sub(by),
            r1: (self.r1 + by).min(height),
            c1: (self.c1 + by).min(width),
        }
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.r0 + self.r1) as f64 / 2.0, (self.c0 + self.c1) as f64 / 2.0)
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.r0 < other.r1 && other.r0 < self.r1 && self.c0 < other.c1 && other.c0 < self.c1
    }
}

/// Boolean per-pixel mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize) -> Self {
        Self { height, width, bits: vec![false; height * width] }
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self { height, width, bits: vec![true; height * width] }
    }

    pub fn from_bits(height: usize, width: usize, bits: Vec<bool>) -> Option<Self> {
        (bits.len() == height * width).then_some(Self { height, width, bits })
    }

    pub fn from_rect(height: usize, width: usize, rect: &Rect) -> Self {
        let mut m = Self::new(height, width);
        for r in rect.r0..rect.r1.min(height) {
            for c in rect.c0..rect.c1.min(width) {
                m.set(r, c, true);
            }
        }
        m
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.width + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.bits[r * self.width + c] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    pub fn is_full(&self) -> bool {
        self.bits.iter().all(|b| *b)
    }

    pub fn iter_set(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits.iter().enumerate().filter(|(_, b)| **b).map(move |(i, _)| (i / w, i % w))
    }

    pub fn union_with(&mut self, other: &Mask) {
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= *b;
        }
    }

    pub fn intersects(&self, other: &Mask) -> bool {
        self.bits.iter().zip(&other.bits).any(|(a, b)| *a && *b)
    }

    pub fn intersection_count(&self, other: &Mask) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(a, b)| **a && **b).count()
    }

    /// Tight bounding box of the set pixels.
    pub fn bbox(&self) -> Option<Rect> {
        let mut r0 = usize::MAX;
        let mut c0 = usize::MAX;
        let mut r1 = 0;
        let mut c1 = 0;
        for (r, c) in self.iter_set() {
            r0 = r0.min(r);
            c0 = c0.min(c);
            r1 = r1.max(r + 1);
            c1 = c1.max(c + 1);
        }
        (r0 != usize::MAX).then_some(Rect { r0, c0, r1, c1 })
    }

    /// Square (Chebyshev) dilation by `radius` pixels.
    pub fn dilate(&self, radius: usize) -> Mask {
        if radius == 0 {
            return self.clone();
        }
        // separable: rows then columns
        let (h, w) = (self.height, self.width);
        let mut tmp = Mask::new(h, w);
        for r in 0..h {
            for c in 0..w {
                if self.get(r, c) {
                    let lo = c.saturating_sub(radius);
                    let hi = (c + radius).min(w - 1);
                    for cc in lo..=hi {
                        tmp.set(r, cc, true);
                    }
                }
            }
        }
        let mut out = Mask::new(h, w);
        for r in 0..h {
            for c in 0..w {
                if tmp.get(r, c) {
                    let lo = r.saturating_sub(radius);
                    let hi = (r + radius).min(h - 1);
                    for rr in lo..=hi {
                        out.set(rr, c, true);
                    }
                }
            }
        }
        out
    }

    /// Pixels outside the mask that are 4-adjacent to it.
    pub fn outer_boundary(&self) -> Mask {
        let (h, w) = (self.height, self.width);
        let mut out = Mask::new(h, w);
        for (r, c) in self.iter_set() {
            let mut mark = |rr: usize, cc: usize| {
                if !self.get(rr, cc) {
                    out.set(rr, cc, true);
                }
            };
            if r > 0 {
                mark(r - 1, c);
            }
            if r + 1 < h {
                mark(r + 1, c);
            }
            if c > 0 {
                mark(r, c - 1);
            }
            if c + 1 < w {
                mark(r, c + 1);
            }
        }
        out
    }
}
