use poseforge::augmentation::AugmentConfig;
use poseforge::data::{generate_samples, DatasetManifest};
use poseforge::heatmaps::build_gt_pyramid;
use poseforge::losses::LossConfig;
use poseforge::model::training::{
    batch_gradients, prepare_sample, staged_training, OptimizerKind, RunControl, Schedule, StepLoss, TrainSettings,
};
use poseforge::model::{ForwardMode, ModelConfig, PoseNet};
use poseforge::nn::Tensor;
use poseforge::rng::stream_rng;
use poseforge::skeleton::{KeypointSet, SkeletalGraph};
use proptest::prelude::*;

fn cfg(stacks: usize, depth: usize, side: usize) -> ModelConfig {
    ModelConfig {
        num_stacks: stacks,
        hourglass_depth: depth,
        base_channels: 4,
        msr_channels: 4,
        input_resolution: (side, side),
        ..ModelConfig::default()
    }
}

fn settings(seed: u64) -> TrainSettings {
    TrainSettings {
        loss: LossConfig::default(),
        augment: AugmentConfig { geometric: false, mask_probability: 0.0, ..AugmentConfig::default() },
        schedule: Schedule {
            stage_epochs: [200, 1, 1],
            learning_rate: 2e-3,
            optimizer: OptimizerKind::Adam,
            batch_size: 4,
            ..Schedule::default()
        },
        graph: SkeletalGraph::default(),
        sigma: 1.0,
        seed,
        ablations: Default::default(),
        config_hash: String::new(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn outputs_follow_the_pyramid_contract(stacks in 1usize..3, depth in 1usize..4, side in prop::sample::select(vec![32usize, 48, 64]), seed in 0u64..1000) {
        let c = cfg(stacks, depth, side);
        let net = PoseNet::new(c.clone(), seed).unwrap();
        let mut rng = stream_rng(seed, 0);
        let data: Vec<f32> = (0..2 * 3 * side * side).map(|_| rand::Rng::random_range(&mut rng, 0.0..1.0)).collect();
        let out = net.forward(&Tensor::from_vec([2, 3, side, side], data).unwrap(), true).unwrap();
        let gt = build_gt_pyramid(&KeypointSet::default(), c.heatmap_resolution(), depth, 1.0).unwrap();
        prop_assert_eq!(out.len(), 2);
        for o in &out {
            prop_assert_eq!(o.per_stack.len(), stacks);
            for p in &o.per_stack {
                for i in 0..depth {
                    prop_assert_eq!(p.level(i).shape(), gt.level(i).shape());
                }
            }
            prop_assert_eq!(o.prediction().shape(), gt.level(0).shape());
            prop_assert!(o.prediction().values().iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn gradients_are_finite(stacks in 1usize..3, depth in 1usize..3, seed in 0u64..1000, full: bool) {
        let net = PoseNet::new(cfg(stacks, depth, 32), seed).unwrap();
        let samples = generate_samples(&DatasetManifest { count: 2, resolution: (32, 32), seed, ..DatasetManifest::default() }).unwrap();
        let s = settings(seed);
        let batch: Vec<_> = samples.iter().map(|x| prepare_sample(x, &net, &s, false, &mut stream_rng(seed, 1)).unwrap()).collect();
        let mode = if full { ForwardMode::Full } else { ForwardMode::Mss };
        let (loss, grads) = batch_gradients(&net, &batch, mode, &s.loss, &s.graph).unwrap();
        prop_assert!(loss.total.is_finite() && loss.total > 0.0);
        prop_assert!(grads.all_finite());
    }

    #[test]
    fn same_seed_same_network(seed: u64) {
        let a = PoseNet::new(cfg(2, 2, 32), seed).unwrap();
        let b = PoseNet::new(cfg(2, 2, 32), seed).unwrap();
        let c = PoseNet::new(cfg(2, 2, 32), seed.wrapping_add(1)).unwrap();
        let ids: Vec<_> = a.params().ids().collect();
        prop_assert!(ids.iter().all(|&i| a.params().get(i) == b.params().get(i)));
        prop_assert!(ids.iter().any(|&i| a.params().get(i) != c.params().get(i)));
    }
}

#[test]
fn four_samples_overfit_within_two_hundred_steps() {
    let mut net = PoseNet::new(cfg(1, 2, 32), 4).unwrap();
    let s = settings(4);
    let samples = generate_samples(&DatasetManifest { count: 4, resolution: (32, 32), seed: 4, ..DatasetManifest::default() }).unwrap();
    let loss = |net: &PoseNet| -> StepLoss {
        let batch: Vec<_> = samples.iter().map(|x| prepare_sample(x, net, &s, false, &mut stream_rng(0, 0)).unwrap()).collect();
        batch_gradients(net, &batch, ForwardMode::Mss, &s.loss, &s.graph).unwrap().0
    };
    let before = loss(&net).total;
    staged_training(&mut net, &samples, &[], &s, &RunControl { stages: vec![1], ..RunControl::default() }).unwrap();
    let after = loss(&net).total;
    assert!(after < 0.1 * before, "loss {before} -> {after}");
}
