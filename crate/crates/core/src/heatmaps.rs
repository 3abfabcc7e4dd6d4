//! Ground-truth heatmap synthesis, multi-scale pyramids and argmax decoding.

use std::io::{Read, Write};

use crate::skeleton::{Keypoint, KeypointSet, Visibility, NUM_KEYPOINTS};
use crate::{Error, Result};

const HMS_MAGIC: &[u8; 4] = b"HMS1";

/// `N = 16` confidence maps of `height × width` at one pyramid level.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapStack {
    height: usize,
    width: usize,
    /// 0 is full heatmap resolution, level `i` is downsampled by `2^i`.
    pub scale_id: usize,
    values: Vec<f64>,
}

impl HeatmapStack {
    pub fn zeros(height: usize, width: usize, scale_id: usize) -> Self {
        Self {
            height,
            width,
            scale_id,
            values: vec![0.0; NUM_KEYPOINTS * height * width],
        }
    }

    pub fn from_values(height: usize, width: usize, scale_id: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Shape(format!("empty heatmap {height}x{width}")));
        }
        if values.len() != NUM_KEYPOINTS * height * width {
            return Err(Error::Shape(format!(
                "{} values do not form {NUM_KEYPOINTS}x{height}x{width}",
                values.len()
            )));
        }
        Ok(Self {
            height,
            width,
            scale_id,
            values,
        })
    }

    /// Builds a stack from one `[16, h, w]` item of `f32` network output.
    pub fn from_f32(height: usize, width: usize, scale_id: usize, values: &[f32]) -> Result<Self> {
        Self::from_values(height, width, scale_id, values.iter().map(|&v| v as f64).collect())
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.values.iter().map(|&v| v as f32).collect()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (NUM_KEYPOINTS, self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn map(&self, n: usize) -> &[f64] {
        let hw = self.height * self.width;
        &self.values[n * hw..(n + 1) * hw]
    }

    pub fn map_mut(&mut self, n: usize) -> &mut [f64] {
        let hw = self.height * self.width;
        &mut self.values[n * hw..(n + 1) * hw]
    }

    #[inline]
    pub fn at(&self, n: usize, y: usize, x: usize) -> f64 {
        self.values[(n * self.height + y) * self.width + x]
    }

    pub fn same_shape(&self, other: &HeatmapStack) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// Translates every map by `(dx, dy)` cells, zero-filling uncovered cells.
    pub fn shifted(&self, dx: i64, dy: i64) -> HeatmapStack {
        let mut out = HeatmapStack::zeros(self.height, self.width, self.scale_id);
        let (h, w) = (self.height as i64, self.width as i64);
        for n in 0..NUM_KEYPOINTS {
            let src = self.map(n);
            let dst = out.map_mut(n);
            for y in 0..h {
                let sy = y - dy;
                if sy < 0 || sy >= h {
                    continue;
                }
                for x in 0..w {
                    let sx = x - dx;
                    if sx >= 0 && sx < w {
                        dst[(y * w + x) as usize] = src[(sy * w + sx) as usize];
                    }
                }
            }
        }
        out
    }

    /// Writes the `HMS1` little-endian tensor format.
    pub fn write_hms<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(HMS_MAGIC)?;
        for d in [NUM_KEYPOINTS, self.height, self.width] {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads the `HMS1` format. The result is at scale 0.
    pub fn read_hms<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != HMS_MAGIC {
            return Err(Error::Format(format!(
                "unknown heatmap file magic {:?}",
                String::from_utf8_lossy(&magic)
            )));
        }
        let mut dims = [0usize; 3];
        for d in dims.iter_mut() {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            *d = u32::from_le_bytes(b) as usize;
        }
        if dims[0] != NUM_KEYPOINTS {
            return Err(Error::Format(format!(
                "heatmap file holds {} maps, expected {NUM_KEYPOINTS}",
                dims[0]
            )));
        }
        let mut bytes = vec![0u8; dims.iter().product::<usize>() * 4];
        r.read_exact(&mut bytes)?;
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Self::from_values(dims[1], dims[2], 0, values)
    }
}

/// Ordered per-level heatmap stacks; level `i` is `(H / 2^i, W / 2^i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapPyramid {
    pub stacks: Vec<HeatmapStack>,
    pub base_resolution: (usize, usize),
    /// Which keypoints carry an annotation; predictions mark all true.
    pub annotated: [bool; NUM_KEYPOINTS],
}

impl HeatmapPyramid {
    pub fn depth(&self) -> usize {
        self.stacks.len()
    }

    pub fn level(&self, i: usize) -> &HeatmapStack {
        &self.stacks[i]
    }

    /// Wraps predicted stacks, validating the halving shape contract.
    pub fn from_predictions(stacks: Vec<HeatmapStack>) -> Result<Self> {
        let base = stacks
            .first()
            .map(|s| (s.height, s.width))
            .ok_or_else(|| Error::Shape("empty pyramid".into()))?;
        for (i, s) in stacks.iter().enumerate() {
            if (s.height, s.width) != level_resolution(base, i) || s.scale_id != i {
                return Err(Error::Shape(format!(
                    "pyramid level {i} is {}x{} (scale {}), expected {:?}",
                    s.height,
                    s.width,
                    s.scale_id,
                    level_resolution(base, i)
                )));
            }
        }
        Ok(Self {
            stacks,
            base_resolution: base,
            annotated: [true; NUM_KEYPOINTS],
        })
    }
}

/// Resolution of pyramid level `i` for a `base` resolution.
pub fn level_resolution(base: (usize, usize), level: usize) -> (usize, usize) {
    (base.0 >> level, base.1 >> level)
}

/// Gaussian ground-truth renderer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtRenderer {
    pub sigma: f64,
    /// Evaluate only within this many sigmas of the keypoint; `None` covers
    /// the whole map.
    pub cutoff_sigmas: Option<f64>,
}

impl Default for GtRenderer {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            cutoff_sigmas: None,
        }
    }
}

impl GtRenderer {
    pub fn new(sigma: f64) -> Self {
        Self {
            sigma,
            cutoff_sigmas: None,
        }
    }

    pub fn render(&self, k: &KeypointSet, resolution: (usize, usize), scale_id: usize) -> Result<HeatmapStack> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!("sigma must be positive, got {}", self.sigma)));
        }
        let (h, w) = resolution;
        let mut out = HeatmapStack::from_values(h, w, scale_id, vec![0.0; NUM_KEYPOINTS * h * w])?;
        let inv = 1.0 / (2.0 * self.sigma * self.sigma);
        for (id, kp) in k.iter() {
            if !kp.is_annotated() {
                continue;
            }
            if !(kp.x.is_finite() && kp.y.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "keypoint {id} has non-finite position ({}, {})",
                    kp.x, kp.y
                )));
            }
            let (x0, x1, y0, y1) = match self.cutoff_sigmas {
                Some(c) => {
                    let r = c * self.sigma;
                    (
                        (kp.x - r).floor().max(0.0) as usize,
                        ((kp.x + r).ceil().max(-1.0) + 1.0).min(w as f64) as usize,
                        (kp.y - r).floor().max(0.0) as usize,
                        ((kp.y + r).ceil().max(-1.0) + 1.0).min(h as f64) as usize,
                    )
                }
                None => (0, w, 0, h),
            };
            let map = out.map_mut(id.index());
            for y in y0..y1 {
                let dy = y as f64 - kp.y;
                for x in x0..x1 {
                    let dx = x as f64 - kp.x;
                    map[y * w + x] = (-(dx * dx + dy * dy) * inv).exp();
                }
            }
        }
        Ok(out)
    }
}

/// Peak-1 Gaussian maps at `resolution`; unannotated keypoints get all-zero
/// maps. Keypoints must already be in heatmap-grid coordinates.
pub fn render_gt_heatmaps(k: &KeypointSet, resolution: (usize, usize), sigma: f64) -> Result<HeatmapStack> {
    GtRenderer::new(sigma).render(k, resolution, 0)
}

/// Renders one map per level at `(H / 2^i, W / 2^i)`, with keypoints
/// rescaled by `1 / 2^i` and the same sigma in each level's own pixels.
pub fn build_gt_pyramid(
    k: &KeypointSet,
    base_resolution: (usize, usize),
    depth: usize,
    sigma: f64,
) -> Result<HeatmapPyramid> {
    build_gt_pyramid_with(k, base_resolution, depth, &GtRenderer::new(sigma))
}

pub fn build_gt_pyramid_with(
    k: &KeypointSet,
    base_resolution: (usize, usize),
    depth: usize,
    renderer: &GtRenderer,
) -> Result<HeatmapPyramid> {
    check_pyramid_geometry(base_resolution, depth)?;
    let stacks = (0..depth)
        .map(|i| {
            let f = (1u64 << i) as f64;
            let scaled = k.map_positions(|x, y| (x / f, y / f));
            renderer.render(&scaled, level_resolution(base_resolution, i), i)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HeatmapPyramid {
        stacks,
        base_resolution,
        annotated: k.annotated_mask(),
    })
}

/// Rejects depths that leave a level smaller than 2×2 or do not divide the
/// base resolution.
pub fn check_pyramid_geometry(base: (usize, usize), depth: usize) -> Result<()> {
    if depth == 0 {
        return Err(Error::InvalidConfig("pyramid depth must be at least 1".into()));
    }
    let f = 1usize << (depth - 1);
    let (h, w) = base;
    if h % f != 0 || w % f != 0 {
        return Err(Error::InvalidConfig(format!(
            "base resolution {h}x{w} is not divisible by 2^{}",
            depth - 1
        )));
    }
    if h / f < 2 || w / f < 2 {
        return Err(Error::InvalidConfig(format!(
            "depth {depth} makes the coarsest level of {h}x{w} smaller than 2x2"
        )));
    }
    Ok(())
}

/// Argmax decoding. Ties resolve to the first maximum in row-major order.
pub fn decode_keypoints(h: &HeatmapStack) -> (KeypointSet, [f64; NUM_KEYPOINTS]) {
    let mut set = KeypointSet::default();
    let mut conf = [0.0; NUM_KEYPOINTS];
    for n in 0..NUM_KEYPOINTS {
        let (idx, best) = h
            .map(n)
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
        conf[n] = best;
        set.0[n] = Keypoint {
            x: (idx % h.width) as f64,
            y: (idx / h.width) as f64,
            visibility: if best >= 0.0 {
                Visibility::Visible
            } else {
                Visibility::Unannotated
            },
        };
    }
    (set, conf)
}

/// Crop-pixel to heatmap-cell coordinates for an output stride, pixel
/// centres aligned.
pub fn to_heatmap_coords(k: &KeypointSet, stride: usize) -> KeypointSet {
    let s = stride as f64;
    k.map_positions(|x, y| ((x + 0.5) / s - 0.5, (y + 0.5) / s - 0.5))
}

/// Inverse of [`to_heatmap_coords`].
pub fn from_heatmap_coords(k: &KeypointSet, stride: usize) -> KeypointSet {
    let s = stride as f64;
    k.map_positions(|x, y| ((x + 0.5) * s - 0.5, (y + 0.5) * s - 0.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::KeypointId;

    fn single(id: KeypointId, x: f64, y: f64) -> KeypointSet {
        let mut k = KeypointSet::default();
        *k.get_mut(id) = Keypoint::visible(x, y);
        k
    }

    #[test]
    fn peak_is_one_and_unit_offset_is_exp_minus_half() {
        let h = render_gt_heatmaps(&single(KeypointId::Thorax, 8.0, 8.0), (17, 17), 1.0).unwrap();
        let n = KeypointId::Thorax.index();
        assert_eq!(h.at(n, 8, 8), 1.0);
        assert!((h.at(n, 8, 9) - (-0.5f64).exp()).abs() < 1e-12);
        assert!((h.at(n, 8, 9) - 0.60653).abs() < 1e-5);
    }

    #[test]
    fn unannotated_maps_are_zero() {
        let h = render_gt_heatmaps(&single(KeypointId::Thorax, 3.0, 3.0), (8, 8), 1.0).unwrap();
        for n in (0..NUM_KEYPOINTS).filter(|&n| n != KeypointId::Thorax.index()) {
            assert_eq!(h.map(n).iter().sum::<f64>(), 0.0);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(render_gt_heatmaps(&single(KeypointId::Pelvis, f64::NAN, 1.0), (4, 4), 1.0).is_err());
        assert!(render_gt_heatmaps(&single(KeypointId::Pelvis, 1.0, 1.0), (4, 4), 0.0).is_err());
        // Non-finite coordinates of unannotated keypoints are irrelevant.
        let mut k = KeypointSet::default();
        k.get_mut(KeypointId::Pelvis).x = f64::INFINITY;
        assert!(render_gt_heatmaps(&k, (4, 4), 1.0).is_ok());
    }

    #[test]
    fn cutoff_zeroes_far_field_only() {
        let k = single(KeypointId::RKnee, 10.0, 10.0);
        let full = render_gt_heatmaps(&k, (21, 21), 1.0).unwrap();
        let cut = GtRenderer {
            sigma: 1.0,
            cutoff_sigmas: Some(3.0),
        }
        .render(&k, (21, 21), 0)
        .unwrap();
        let n = KeypointId::RKnee.index();
        assert_eq!(cut.at(n, 10, 13), full.at(n, 10, 13));
        assert_eq!(cut.at(n, 10, 15), 0.0);
        assert!(full.at(n, 10, 15) > 0.0);
    }

    #[test]
    fn pyramid_shapes_and_rescaled_peaks() {
        let k = single(KeypointId::HeadTop, 32.0, 32.0);
        let p = build_gt_pyramid(&k, (64, 64), 3, 1.0).unwrap();
        let shapes: Vec<_> = p.stacks.iter().map(|s| (s.height(), s.width())).collect();
        assert_eq!(shapes, vec![(64, 64), (32, 32), (16, 16)]);
        let (dec, _) = decode_keypoints(p.level(1));
        assert_eq!((dec.0[0].x, dec.0[0].y), (16.0, 16.0));
        let one = build_gt_pyramid(&k, (64, 64), 1, 1.0).unwrap();
        assert_eq!(one.stacks, vec![render_gt_heatmaps(&k, (64, 64), 1.0).unwrap()]);
    }

    #[test]
    fn pyramid_rejects_tiny_levels() {
        let k = KeypointSet::default();
        assert!(build_gt_pyramid(&k, (8, 8), 3, 1.0).is_ok());
        assert!(build_gt_pyramid(&k, (8, 8), 4, 1.0).is_err());
        assert!(build_gt_pyramid(&k, (12, 12), 4, 1.0).is_err());
        assert!(build_gt_pyramid(&k, (8, 8), 0, 1.0).is_err());
    }

    #[test]
    fn decode_tie_break_and_zero_map() {
        let mut h = HeatmapStack::zeros(4, 4, 0);
        let (k, c) = decode_keypoints(&h);
        assert_eq!((k.0[0].x, k.0[0].y, c[0]), (0.0, 0.0, 0.0));
        h.map_mut(3)[4 + 1] = 0.9;
        h.map_mut(3)[2 * 4 + 2] = 0.9;
        // Brute-force scan in row-major order confirms (1,1) comes first.
        let first = (0..4)
            .flat_map(|y| (0..4).map(move |x| (x, y)))
            .find(|&(x, y)| h.at(3, y, x) == 0.9)
            .unwrap();
        let (k, c) = decode_keypoints(&h);
        assert_eq!((k.0[3].x as usize, k.0[3].y as usize), first);
        assert_eq!(first, (1, 1));
        assert_eq!(c[3], 0.9);
    }

    #[test]
    fn negative_peak_decodes_as_unannotated() {
        let mut h = HeatmapStack::zeros(2, 2, 0);
        h.map_mut(5).fill(-0.3);
        let (k, _) = decode_keypoints(&h);
        assert!(!k.0[5].is_annotated());
        assert!(k.0[4].is_annotated());
    }

    #[test]
    fn hms_round_trip_and_magic() {
        let h = render_gt_heatmaps(&single(KeypointId::LAnkle, 2.0, 1.0), (3, 5), 1.0).unwrap();
        let mut buf = Vec::new();
        h.write_hms(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"HMS1");
        assert_eq!(buf.len(), 16 + 16 * 15 * 4);
        let back = HeatmapStack::read_hms(buf.as_slice()).unwrap();
        for (a, b) in back.values().iter().zip(h.values()) {
            assert_eq!(*a, *b as f32 as f64);
        }
        buf[0] = b'X';
        assert!(matches!(HeatmapStack::read_hms(buf.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn coordinate_conversions_invert() {
        let k = single(KeypointId::RWrist, 13.25, 40.0);
        let back = from_heatmap_coords(&to_heatmap_coords(&k, 4), 4);
        assert!((back.0[8].x - 13.25).abs() < 1e-12 && (back.0[8].y - 40.0).abs() < 1e-12);
        // Cell 0 covers crop pixels 0..4, centred at 1.5.
        assert_eq!(to_heatmap_coords(&single(KeypointId::RWrist, 1.5, 1.5), 4).0[8].x, 0.0);
    }

    #[test]
    fn shift_moves_peak() {
        let h = render_gt_heatmaps(&single(KeypointId::Pelvis, 3.0, 3.0), (8, 8), 1.0).unwrap();
        let (k, _) = decode_keypoints(&h.shifted(2, -1));
        assert_eq!((k.0[3].x, k.0[3].y), (5.0, 2.0));
    }
}
