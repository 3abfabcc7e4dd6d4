//! 8-bit RGB image buffer with the few drawing and resampling primitives the
//! generator, augmentation and renderers need.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::Result;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Image {
    width: usize,
    height: usize,
    /// Row-major interleaved RGB.
    data: Vec<u8>,
}

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: i64,
    pub y: i64,
    pub width: i64,
    pub height: i64,
}

impl Rect {
    pub fn new(x: i64, y: i64, width: i64, height: i64) -> Self {
        Self { x, y, width, height }
    }

    /// Whether the continuous point lies inside the pixels the rect covers.
    pub fn contains(&self, px: f64, py: f64) -> bool {
        px >= self.x as f64 - 0.5
            && py >= self.y as f64 - 0.5
            && px < (self.x + self.width) as f64 - 0.5
            && py < (self.y + self.height) as f64 - 0.5
    }

    pub fn inside(&self, width: usize, height: usize) -> bool {
        self.x >= 0
            && self.y >= 0
            && self.width > 0
            && self.height > 0
            && self.x + self.width <= width as i64
            && self.y + self.height <= height as i64
    }

    pub fn area(&self) -> i64 {
        self.width * self.height
    }
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Option<Self> {
        (data.len() == width * height * 3).then_some(Self { width, height, data })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn raw(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Alpha-blends `rgb` over pixel `(x, y)`; out-of-range pixels are ignored.
    pub fn blend(&mut self, x: i64, y: i64, rgb: [f32; 3], alpha: f32) {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 || alpha <= 0.0 {
            return;
        }
        let a = alpha.min(1.0);
        let i = (y as usize * self.width + x as usize) * 3;
        for c in 0..3 {
            let v = self.data[i + c] as f32 * (1.0 - a) + rgb[c] * a;
            self.data[i + c] = v.round().clamp(0.0, 255.0) as u8;
        }
    }

    /// Copy of the pixels under `r`, which must lie inside the image.
    pub fn crop(&self, r: Rect) -> Image {
        debug_assert!(r.inside(self.width, self.height));
        let mut out = Image::new(r.width as usize, r.height as usize);
        for y in 0..r.height as usize {
            let src = ((r.y as usize + y) * self.width + r.x as usize) * 3;
            let dst = y * r.width as usize * 3;
            out.data[dst..dst + r.width as usize * 3].copy_from_slice(&self.data[src..src + r.width as usize * 3]);
        }
        out
    }

    /// Pastes `patch` with its top-left corner at `(x, y)`; must fit.
    pub fn paste(&mut self, patch: &Image, x: usize, y: usize) {
        debug_assert!(x + patch.width <= self.width && y + patch.height <= self.height);
        for row in 0..patch.height {
            let dst = ((y + row) * self.width + x) * 3;
            let src = row * patch.width * 3;
            self.data[dst..dst + patch.width * 3].copy_from_slice(&patch.data[src..src + patch.width * 3]);
        }
    }

    /// Planar CHW floats in `[0, 1]`.
    pub fn to_chw(&self) -> Vec<f32> {
        let hw = self.width * self.height;
        let mut out = vec![0.0f32; 3 * hw];
        for (i, px) in self.data.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * hw + i] = px[c] as f32 / 255.0;
            }
        }
        out
    }

    /// Bilinear sample at continuous pixel coordinates, clamping at edges.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> [f32; 3] {
        let xc = x.clamp(0.0, (self.width - 1) as f64);
        let yc = y.clamp(0.0, (self.height - 1) as f64);
        let (x0, y0) = (xc.floor() as usize, yc.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (tx, ty) = ((xc - x0 as f64) as f32, (yc - y0 as f64) as f32);
        let (a, b, c, d) = (self.get(x0, y0), self.get(x1, y0), self.get(x0, y1), self.get(x1, y1));
        std::array::from_fn(|k| {
            let top = a[k] as f32 * (1.0 - tx) + b[k] as f32 * tx;
            let bot = c[k] as f32 * (1.0 - tx) + d[k] as f32 * tx;
            top * (1.0 - ty) + bot * ty
        })
    }

    /// Integer translation: output pixel `p` shows input pixel `p + (dx, dy)`,
    /// with edge pixels replicated.
    pub fn translated(&self, dx: i64, dy: i64) -> Image {
        let mut out = Image::new(self.width, self.height);
        for y in 0..self.height {
            let sy = (y as i64 + dy).clamp(0, self.height as i64 - 1) as usize;
            for x in 0..self.width {
                let sx = (x as i64 + dx).clamp(0, self.width as i64 - 1) as usize;
                out.set(x, y, self.get(sx, sy));
            }
        }
        out
    }

    /// Anti-aliased thick segment from `a` to `b`.
    pub fn draw_segment(&mut self, a: (f64, f64), b: (f64, f64), thickness: f64, rgb: [f32; 3]) {
        let r = thickness / 2.0;
        let (minx, maxx) = (a.0.min(b.0) - r - 1.0, a.0.max(b.0) + r + 1.0);
        let (miny, maxy) = (a.1.min(b.1) - r - 1.0, a.1.max(b.1) + r + 1.0);
        let (vx, vy) = (b.0 - a.0, b.1 - a.1);
        let len2 = vx * vx + vy * vy;
        for y in miny.floor() as i64..=maxy.ceil() as i64 {
            for x in minx.floor() as i64..=maxx.ceil() as i64 {
                let (px, py) = (x as f64 - a.0, y as f64 - a.1);
                let t = if len2 > 0.0 { ((px * vx + py * vy) / len2).clamp(0.0, 1.0) } else { 0.0 };
                let d = (px - t * vx).hypot(py - t * vy);
                let cover = (r + 0.5 - d).clamp(0.0, 1.0);
                self.blend(x, y, rgb, cover as f32);
            }
        }
    }

    /// Anti-aliased filled disc.
    pub fn draw_disc(&mut self, c: (f64, f64), radius: f64, rgb: [f32; 3]) {
        for y in (c.1 - radius - 1.0).floor() as i64..=(c.1 + radius + 1.0).ceil() as i64 {
            for x in (c.0 - radius - 1.0).floor() as i64..=(c.0 + radius + 1.0).ceil() as i64 {
                let d = (x as f64 - c.0).hypot(y as f64 - c.1);
                self.blend(x, y, rgb, (radius + 0.5 - d).clamp(0.0, 1.0) as f32);
            }
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf = image::RgbImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .expect("buffer length matches dimensions");
        buf.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<Image> {
        let img = image::open(path)?.to_rgb8();
        let (w, h) = img.dimensions();
        Ok(Image {
            width: w as usize,
            height: h as usize,
            data: img.into_raw(),
        })
    }
}
