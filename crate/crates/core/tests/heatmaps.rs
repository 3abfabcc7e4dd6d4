use poseforge::heatmaps::{
    build_gt_pyramid, decode_keypoints, from_heatmap_coords, render_gt_heatmaps, to_heatmap_coords, HeatmapStack,
};
use poseforge::skeleton::{Keypoint, KeypointSet, NUM_KEYPOINTS};
use proptest::prelude::*;

const RES: usize = 32;

fn arb_integer_set() -> impl Strategy<Value = KeypointSet> {
    prop::array::uniform16((0..RES, 0..RES)).prop_map(|pts| {
        let mut k = KeypointSet::default();
        for (p, (x, y)) in k.0.iter_mut().zip(pts) {
            *p = Keypoint::visible(x as f64, y as f64);
        }
        k
    })
}

proptest! {
    #[test]
    fn render_then_decode_round_trips(k in arb_integer_set()) {
        let (d, conf) = decode_keypoints(&render_gt_heatmaps(&k, (RES, RES), 1.0).unwrap());
        for n in 0..NUM_KEYPOINTS {
            prop_assert_eq!((d.0[n].x, d.0[n].y), (k.0[n].x, k.0[n].y));
            prop_assert_eq!(conf[n], 1.0);
        }
    }

    #[test]
    fn values_decay_with_distance(x in 0.0..RES as f64, y in 0.0..RES as f64, sigma in 0.5..3.0f64) {
        let mut k = KeypointSet::default();
        k.0[0] = Keypoint::visible(x, y);
        let h = render_gt_heatmaps(&k, (RES, RES), sigma).unwrap();
        let mut cells: Vec<(f64, f64)> = (0..RES * RES)
            .map(|i| {
                let (cx, cy) = ((i % RES) as f64, (i / RES) as f64);
                ((cx - x).powi(2) + (cy - y).powi(2), h.map(0)[i])
            })
            .collect();
        cells.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in cells.windows(2) {
            prop_assert!(w[1].1 <= w[0].1, "value rises from d²={} to d²={}", w[0].0, w[1].0);
            prop_assert!(w[0].1 <= 1.0 && w[1].1 >= 0.0);
        }
    }

    #[test]
    fn integer_peaks_are_mirror_symmetric(x in 4usize..RES - 4, y in 4usize..RES - 4, d in 1usize..4) {
        let mut k = KeypointSet::default();
        k.0[3] = Keypoint::visible(x as f64, y as f64);
        let h = render_gt_heatmaps(&k, (RES, RES), 1.5).unwrap();
        prop_assert_eq!(h.at(3, y, x + d), h.at(3, y, x - d));
        prop_assert_eq!(h.at(3, y + d, x), h.at(3, y - d, x));
        prop_assert_eq!(h.at(3, y + d, x), h.at(3, y, x + d));
    }

    #[test]
    fn pyramid_levels_peak_at_rescaled_keypoints(k in arb_integer_set(), depth in 1usize..4) {
        let p = build_gt_pyramid(&k, (RES, RES), depth, 1.0).unwrap();
        prop_assert_eq!(p.depth(), depth);
        for i in 0..depth {
            let f = (1 << i) as f64;
            let level = p.level(i);
            prop_assert_eq!(level.shape(), (NUM_KEYPOINTS, RES >> i, RES >> i));
            let (d, _) = decode_keypoints(level);
            for n in 0..NUM_KEYPOINTS {
                prop_assert!((d.0[n].x - k.0[n].x / f).abs() <= 1.0);
                prop_assert!((d.0[n].y - k.0[n].y / f).abs() <= 1.0);
            }
        }
    }

    #[test]
    fn stride_conversion_inverts(x in 0.0..256.0f64, y in 0.0..256.0f64, stride in prop::sample::select(vec![1usize, 2, 4, 8])) {
        let mut k = KeypointSet::default();
        k.0[5] = Keypoint::visible(x, y);
        let back = from_heatmap_coords(&to_heatmap_coords(&k, stride), stride);
        prop_assert!((back.0[5].x - x).abs() < 1e-9 && (back.0[5].y - y).abs() < 1e-9);
    }

    #[test]
    fn hms_files_round_trip(v in prop::collection::vec(-2.0..2.0f64, NUM_KEYPOINTS * 12)) {
        let h = HeatmapStack::from_values(3, 4, 1, v).unwrap();
        let mut buf = Vec::new();
        h.write_hms(&mut buf).unwrap();
        let back = HeatmapStack::read_hms(&buf[..]).unwrap();
        let stored: Vec<f64> = h.values().iter().map(|&v| v as f32 as f64).collect();
        prop_assert_eq!(back.shape(), h.shape());
        prop_assert_eq!(back.values(), &stored[..]);
    }
}
