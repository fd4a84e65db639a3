//! Benchmarks of the data-parallel entry points. Run once with the
//! default features and once with `--no-default-features` to compare the
//! rayon path against the sequential fallback:
//!
//! ```text
//! cargo bench -p qac
//! cargo bench -p qac --no-default-features
//! ```

use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qac::assignment::{Assignment, ReplicaChain};
use qac::energy::{EnergyModel, ModelKind, MogNiwPrior};
use qac::oracle::{ring_marginal, ring_marginal_bruteforce, Similarity, StateSpace};
use qac::sampler::{compare_equal_budget, qast_sweep, sa_sweep, Mode, SamplerConfig};
use qac::schedule::ScheduleParams;
use qac::synth::generate_blobs;

fn bench_ring_marginal(c: &mut Criterion) {
    let space = StateSpace::new(4, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let energies: Vec<f64> = (0..space.count())
        .map(|_| rng.random_range(0.0..1.0))
        .collect();

    c.bench_function("ring_marginal_transfer_m32", |b| {
        b.iter(|| {
            ring_marginal(
                black_box(&energies),
                space,
                1.0,
                0.5,
                32,
                Similarity::Overlap,
            )
            .unwrap()
        })
    });

    // The brute-force route is the feature-sensitive one: the joint sum is
    // partitioned by the first replica's state. 16^5 configurations.
    c.bench_function("ring_marginal_bruteforce_m5", |b| {
        b.iter(|| {
            ring_marginal_bruteforce(black_box(&energies), space, 1.0, 0.5, 5, Similarity::Purity)
                .unwrap()
        })
    });
}

fn bench_sweeps(c: &mut Criterion) {
    let data = Arc::new(generate_blobs(4, 50, 8.0, 7).unwrap());
    let kind = ModelKind::MogNiw(MogNiwPrior::weakly_informative(&data));
    let k = 4;
    let m = 8;

    c.bench_function("sa_sweep_200pts_k4", |b| {
        let mut model = kind.build(data.clone(), k).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut a = Assignment::random(data.n(), k, &mut rng);
        model.bind(&a);
        b.iter(|| sa_sweep(model.as_mut(), &mut a, black_box(1.5), &mut rng));
    });

    c.bench_function("qast_sweep_200pts_k4_m8", |b| {
        let mut models: Vec<Box<dyn EnergyModel>> = Vec::new();
        let mut rngs = Vec::new();
        let mut replicas = Vec::new();
        for j in 0..m {
            let mut model = kind.build(data.clone(), k).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            rng.set_stream(j as u64);
            let a = Assignment::random(data.n(), k, &mut rng);
            model.bind(&a);
            models.push(model);
            rngs.push(rng);
            replicas.push(a);
        }
        let mut chain = ReplicaChain::new(replicas).unwrap();
        b.iter(|| qast_sweep(&mut models, &mut chain, black_box(8.0), 0.4, &mut rngs));
    });
}

fn bench_compare(c: &mut Criterion) {
    let data = Arc::new(generate_blobs(3, 30, 7.0, 11).unwrap());
    let kind = ModelKind::SqLoss;
    let k = 3;
    let m = 4;
    let factory = {
        let data = data.clone();
        let kind = kind.clone();
        move || kind.build(data.clone(), k)
    };
    let qa = ScheduleParams::crossover_defaults(data.n(), k, m, 1.05, None).unwrap();
    let sa = ScheduleParams::single_chain_defaults(data.n(), k, 1.05).unwrap();
    let cfg = SamplerConfig {
        seed: 0,
        max_iters: 60,
        convergence_window: 61,
        convergence_tol: 1e-9,
        mode: Mode::Qast,
        m,
    };

    // Seeds run in parallel under the `parallel` feature.
    c.bench_function("compare_equal_budget_6seeds", |b| {
        b.iter(|| {
            compare_equal_budget(
                &factory,
                &qa,
                &sa,
                &cfg,
                black_box(&[1, 2, 3, 4, 5, 6]),
                None,
            )
            .unwrap()
        })
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench_ring_marginal, bench_sweeps, bench_compare
}
criterion_main!(benches);
