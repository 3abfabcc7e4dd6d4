//! Heatmap grids and skeleton overlays as RGB images.

use crate::heatmaps::{decode_keypoints, HeatmapStack};
use crate::raster::Image;
use crate::skeleton::{KeypointId, KeypointSet, SkeletalGraph, NUM_KEYPOINTS};

/// Tiles per row in [`heatmap_grid`].
pub const GRID_COLUMNS: usize = 4;
pub const PEAK_COLOR: [u8; 3] = [0, 255, 0];

const RIGHT: [f32; 3] = [230.0, 60.0, 40.0];
const LEFT: [f32; 3] = [40.0, 110.0, 230.0];
const MIDLINE: [f32; 3] = [240.0, 200.0, 40.0];

/// Top-left pixel of map `n`'s tile in a grid with `scale`-times enlarged
/// cells.
pub fn grid_cell_origin(n: usize, height: usize, width: usize, scale: usize) -> (usize, usize) {
    ((n % GRID_COLUMNS) * width * scale, (n / GRID_COLUMNS) * height * scale)
}

/// Lays the 16 maps out 4×4, each normalized to its own maximum and shown
/// in grayscale. The argmax cell of every map with a positive peak is
/// painted [`PEAK_COLOR`].
pub fn heatmap_grid(h: &HeatmapStack, scale: usize) -> Image {
    let scale = scale.max(1);
    let (_, hh, ww) = h.shape();
    let rows = NUM_KEYPOINTS.div_ceil(GRID_COLUMNS);
    let mut img = Image::new(GRID_COLUMNS * ww * scale, rows * hh * scale);
    let (peaks, conf) = decode_keypoints(h);
    for n in 0..NUM_KEYPOINTS {
        let map = h.map(n);
        let max = map.iter().cloned().fold(0.0, f64::max);
        let (ox, oy) = grid_cell_origin(n, hh, ww, scale);
        for y in 0..hh {
            for x in 0..ww {
                let v = if max > 0.0 { (map[y * ww + x] / max).clamp(0.0, 1.0) } else { 0.0 };
                let g = (v * 255.0).round() as u8;
                fill_block(&mut img, ox + x * scale, oy + y * scale, scale, [g, g, g]);
            }
        }
        if conf[n] > 0.0 {
            let p = peaks.0[n];
            fill_block(&mut img, ox + p.x as usize * scale, oy + p.y as usize * scale, scale, PEAK_COLOR);
        }
    }
    img
}

fn fill_block(img: &mut Image, x0: usize, y0: usize, size: usize, rgb: [u8; 3]) {
    for y in y0..y0 + size {
        for x in x0..x0 + size {
            img.set(x, y, rgb);
        }
    }
}

/// Edges of `g` whose endpoints are both annotated, in graph order.
pub fn overlay_lines(k: &KeypointSet, g: &SkeletalGraph) -> Vec<(KeypointId, KeypointId)> {
    g.pair_edges
        .iter()
        .copied()
        .filter(|(a, b)| k.get(*a).is_annotated() && k.get(*b).is_annotated())
        .collect()
}

fn side_color(k: KeypointId) -> [f32; 3] {
    match k.name().as_bytes().first() {
        Some(b'r') => RIGHT,
        Some(b'l') => LEFT,
        _ => MIDLINE,
    }
}

/// Draws `k` over a copy of `img`: one segment per [`overlay_lines`] edge,
/// coloured by body side, and a dot per annotated keypoint.
pub fn skeleton_overlay(img: &Image, k: &KeypointSet, g: &SkeletalGraph) -> Image {
    let mut out = img.clone();
    let thickness = (img.width().min(img.height()) as f64 / 64.0).max(1.0);
    for (a, b) in overlay_lines(k, g) {
        let (pa, pb) = (k.get(a), k.get(b));
        let color = if side_color(a) == side_color(b) { side_color(a) } else { MIDLINE };
        out.draw_segment((pa.x, pa.y), (pb.x, pb.y), thickness, color);
    }
    for (id, p) in k.iter() {
        if p.is_annotated() {
            out.draw_disc((p.x, p.y), thickness, side_color(id));
        }
    }
    out
}

/// Nearest-neighbour enlargement, for viewing small crops.
pub fn upscale(img: &Image, factor: usize) -> Image {
    let f = factor.max(1);
    let mut out = Image::new(img.width() * f, img.height() * f);
    for y in 0..out.height() {
        for x in 0..out.width() {
            out.set(x, y, img.get(x / f, y / f));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heatmaps::render_gt_heatmaps;
    use crate::skeleton::{default_skeletal_graph, Keypoint};

    #[test]
    fn grid_marks_peaks_at_annotations() {
        let mut k = KeypointSet::default();
        for (i, id) in KeypointId::ALL.into_iter().enumerate() {
            *k.get_mut(id) = Keypoint::visible((i % 8) as f64, (i / 2) as f64);
        }
        let h = render_gt_heatmaps(&k, (8, 8), 1.0).unwrap();
        let img = heatmap_grid(&h, 3);
        assert_eq!((img.width(), img.height()), (4 * 8 * 3, 4 * 8 * 3));
        for (i, id) in KeypointId::ALL.into_iter().enumerate() {
            let p = k.get(id);
            let (ox, oy) = grid_cell_origin(i, 8, 8, 3);
            let (px, py) = (ox + p.x as usize * 3, oy + p.y as usize * 3);
            assert_eq!(img.get(px + 1, py + 1), PEAK_COLOR, "{id}");
        }
        let greens = img.raw().chunks(3).filter(|c| *c == PEAK_COLOR).count();
        assert_eq!(greens, 16 * 9);
    }

    #[test]
    fn empty_maps_stay_black() {
        let img = heatmap_grid(&HeatmapStack::zeros(4, 4, 0), 1);
        assert!(img.raw().iter().all(|&v| v == 0));
    }

    #[test]
    fn overlay_skips_unannotated_endpoints() {
        let g = default_skeletal_graph();
        let mut k = KeypointSet::default();
        for id in KeypointId::ALL {
            *k.get_mut(id) = Keypoint::visible(5.0, 5.0);
        }
        assert_eq!(overlay_lines(&k, &g), g.pair_edges);
        *k.get_mut(KeypointId::LWrist) = Keypoint::default();
        let lines = overlay_lines(&k, &g);
        assert_eq!(lines.len(), g.pair_edges.len() - 1);
        assert!(lines.iter().all(|(a, b)| *a != KeypointId::LWrist && *b != KeypointId::LWrist));
    }
}
