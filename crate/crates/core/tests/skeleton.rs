use poseforge::skeleton::{default_skeletal_graph, validate_graph, KeypointId, SkeletalGraph, NUM_KEYPOINTS};
use proptest::prelude::*;

fn arb_graph() -> impl Strategy<Value = SkeletalGraph> {
    let id = (0..NUM_KEYPOINTS).prop_map(|i| KeypointId::ALL[i]);
    (
        prop::collection::vec((id.clone(), id.clone()), 0..24),
        prop::collection::vec((id.clone(), id.clone(), id), 0..6),
    )
        .prop_map(|(pair_edges, triplet_groups)| SkeletalGraph { pair_edges, triplet_groups })
}

proptest! {
    #[test]
    fn neighbourhoods_are_symmetric(g in arb_graph()) {
        for a in KeypointId::ALL {
            for b in g.neighbors(a) {
                prop_assert!(g.neighbors(b).contains(&a), "{a} lists {b} but not the reverse");
                prop_assert_ne!(a, b);
            }
        }
    }

    #[test]
    fn triplet_middles_reach_both_ends(g in arb_graph()) {
        for &(a, m, c) in &g.triplet_groups {
            let n = g.neighbors(m);
            prop_assert!(a == m || n.contains(&a));
            prop_assert!(c == m || n.contains(&c));
        }
    }

    #[test]
    fn permutation_relabels_neighbourhoods(perm in Just((0..NUM_KEYPOINTS).collect::<Vec<_>>()).prop_shuffle()) {
        let perm: [usize; NUM_KEYPOINTS] = perm.try_into().unwrap();
        let g = default_skeletal_graph();
        let p = g.permuted(&perm);
        for k in KeypointId::ALL {
            let mut want: Vec<usize> = g.neighbors(k).iter().map(|n| perm[n.index()]).collect();
            let mut got: Vec<usize> = p.neighbors(KeypointId::ALL[perm[k.index()]]).iter().map(|n| n.index()).collect();
            want.sort();
            got.sort();
            prop_assert_eq!(want, got);
        }
    }
}

#[test]
fn default_graph_is_deterministic_and_valid() {
    assert_eq!(default_skeletal_graph(), default_skeletal_graph());
    assert!(validate_graph(&default_skeletal_graph()).is_empty());
    assert_eq!(SkeletalGraph::from_json(&default_skeletal_graph().to_json()).unwrap(), default_skeletal_graph());
}
