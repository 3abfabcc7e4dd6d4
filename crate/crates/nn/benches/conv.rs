use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use poseforge_nn::{par, Graph, ParamStore, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn conv_forward_backward(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let (w, b) = store.add_conv("c", 32, 32, 3, 1.0, &mut rng);
    let x = Tensor::full([8, 32, 16, 16], 0.25);
    let mut group = c.benchmark_group("conv3x3_32ch_16px_batch8");
    for parallel in [false, true] {
        let label = if parallel { "rayon" } else { "sequential" };
        group.bench_with_input(BenchmarkId::from_parameter(label), &parallel, |bench, &p| {
            par::set_parallel(p);
            bench.iter(|| {
                let mut g = Graph::new(&store);
                let xi = g.input(x.clone());
                let y = g.conv(xi, w, b, 1, 1).unwrap();
                let seed = g.value(y).clone();
                g.backward(&[(y, seed)]).unwrap()
            });
        });
    }
    par::set_parallel(true);
    group.finish();
}

criterion_group!(benches, conv_forward_backward);
criterion_main!(benches);
