use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use elosslab_core::energy::{batch_loss, CoefficientScheme, PointLoss};
use elosslab_core::geometry::PointCloud;
use elosslab_core::par::Exec;
use elosslab_core::rigidity::edge_pool;
use elosslab_core::rng;
use elosslab_core::spin::{ground_state_exhaustive, sample_hamiltonian};

const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn batched_energy(c: &mut Criterion) {
    let mut r = rng::seeded(1);
    let preds: Vec<PointCloud> = (0..256).map(|_| PointCloud::gaussian(32, 3, &mut r).unwrap()).collect();
    let targets: Vec<PointCloud> = (0..256).map(|_| PointCloud::gaussian(32, 3, &mut r).unwrap()).collect();
    let loss = PointLoss::Energy(CoefficientScheme::exponential());
    let mut g = c.benchmark_group("batch_energy_256x32");
    for (name, exec) in POLICIES {
        g.bench_function(name, |b| b.iter(|| batch_loss(exec, &loss, &preds, &targets).unwrap()));
    }
    g.finish();
}

fn ground_state(c: &mut Criterion) {
    let h = sample_hamiltonian(4, 7).unwrap();
    let mut g = c.benchmark_group("ground_state_4x4");
    for (name, exec) in POLICIES {
        g.bench_function(name, |b| b.iter(|| ground_state_exhaustive(&h, exec).unwrap()));
    }
    g.finish();
}

fn rigid_pool(c: &mut Criterion) {
    let mut g = c.benchmark_group("edge_pool_n50");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        g.bench_with_input(BenchmarkId::new(name, 16), &16, |b, &size| {
            b.iter(|| edge_pool(50, 2, size, 3, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, batched_energy, ground_state, rigid_pool);
criterion_main!(benches);
