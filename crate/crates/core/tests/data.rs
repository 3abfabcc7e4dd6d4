use std::collections::HashSet;

use poseforge::data::{
    generate_dataset, generate_samples, load_dataset, synthesize, DatasetManifest, Split, SpecRanges,
};
use poseforge::heatmaps::{decode_keypoints, render_gt_heatmaps};
use poseforge::skeleton::NUM_KEYPOINTS;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn labels_are_renderable_pixel_positions(seed: u64, index in 0usize..500, hard: bool) {
        let m = DatasetManifest {
            seed,
            count: 500,
            ranges: if hard { SpecRanges::hard() } else { SpecRanges::default() },
            ..DatasetManifest::default()
        };
        let s = synthesize(&m, index);
        let (h, w) = m.resolution;
        let k = &s.record.keypoints;
        let (decoded, _) = decode_keypoints(&render_gt_heatmaps(k, (h, w), 1.0).unwrap());
        for n in 0..NUM_KEYPOINTS {
            let p = &k.0[n];
            if p.is_annotated() {
                prop_assert!(p.x >= 0.0 && p.y >= 0.0 && p.x <= (w - 1) as f64 && p.y <= (h - 1) as f64);
                prop_assert_eq!((decoded.0[n].x, decoded.0[n].y), (p.x, p.y));
            }
        }
        prop_assert_eq!(s.image.width(), w);
    }

    #[test]
    fn synthesis_is_a_pure_function_of_seed_and_index(seed: u64, index in 0usize..500) {
        let m = DatasetManifest { seed, count: 500, ..DatasetManifest::default() };
        prop_assert_eq!(synthesize(&m, index), synthesize(&m, index));
    }

    #[test]
    fn splits_partition_the_indices(count in 1usize..300, val in 0.0..0.5f64, test in 0.0..0.5f64) {
        let m = DatasetManifest { count, val_fraction: val, test_fraction: test, ..DatasetManifest::default() };
        let mut seen: [HashSet<usize>; 3] = Default::default();
        for i in 0..count {
            let slot = match m.split_of(i) {
                Split::Train => 0,
                Split::Val => 1,
                Split::Test => 2,
            };
            seen[slot].insert(i);
        }
        prop_assert_eq!(seen.iter().map(|s| s.len()).sum::<usize>(), count);
        prop_assert!(seen[0].is_disjoint(&seen[1]) && seen[1].is_disjoint(&seen[2]) && seen[0].is_disjoint(&seen[2]));
    }
}

#[test]
fn disk_round_trip_matches_memory() {
    let dir = tempfile::tempdir().unwrap();
    let m = DatasetManifest { count: 12, seed: 5, ..DatasetManifest::default() };
    generate_dataset(&m, dir.path()).unwrap();
    let ds = load_dataset(dir.path()).unwrap();
    let mem = generate_samples(&m).unwrap();
    let train = ds.load_split(Split::Train).unwrap();
    let want: Vec<_> = mem.into_iter().filter(|s| s.record.split == Split::Train).collect();
    assert_eq!(train, want);
}
