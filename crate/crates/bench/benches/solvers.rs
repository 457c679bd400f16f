//! Solver timings on the toy instance, small random instances, and a
//! three-cell layout the size of the timeline simulation.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gridcomp_core::duality::uplink_fixed_point;
use gridcomp_core::fixtures::{random_instance, toy_instance, RandomInstanceSpec};
use gridcomp_core::scenario::{db_to_linear, generate_channels, LayoutSpec, NOISE_POWER_W};
use gridcomp_core::{
    check_feasible, conventional_optimal, solve_joint, solve_zf, ClusterConfig, EnergyInputs, FeasibilityOptions,
    FixedPointOptions, ProblemInstance, QosTargets, SolverOptions, WeightedNoise,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn layout_instance() -> ProblemInstance {
    let cluster = ClusterConfig {
        n_bs: 3,
        n_ant: 4,
        n_mt: 8,
        pa_efficiency: 0.1,
        p_max: vec![100.0; 3],
        p_circuit: vec![500.0; 3],
    };
    let channels = generate_channels(&LayoutSpec::new(1000.0, 2024), &cluster, 0).expect("layout channels");
    ProblemInstance::new(
        cluster,
        EnergyInputs {
            harvest: vec![900.0, 300.0, 50.0],
            price_buy: vec![1.0; 3],
            price_sell: vec![0.1; 3],
            price_floor: 0.1,
            price_cap: 1.0,
        },
        channels,
        QosTargets {
            sinr_min: vec![db_to_linear(10.0); 8],
            noise_power: vec![NOISE_POWER_W; 8],
        },
    )
    .expect("valid instance")
}

fn random(n_bs: usize, n_ant: usize, n_mt: usize) -> ProblemInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    random_instance(&mut rng, RandomInstanceSpec::new(n_bs, n_ant, n_mt))
}

fn bench_solvers(c: &mut Criterion) {
    let opts = SolverOptions::default();
    let cases = [
        ("toy", toy_instance()),
        ("random-3x2x4", random(3, 2, 4)),
        ("layout-3x4x8", layout_instance()),
    ];
    let mut group = c.benchmark_group("solve");
    group.sample_size(10);
    for (name, inst) in &cases {
        group.bench_with_input(BenchmarkId::new("joint", name), inst, |b, inst| {
            b.iter(|| solve_joint(black_box(inst), &opts).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("zf", name), inst, |b, inst| {
            b.iter(|| solve_zf(black_box(inst), &opts).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("conv-optimal", name), inst, |b, inst| {
            b.iter(|| conventional_optimal(black_box(inst), &opts).unwrap())
        });
    }
    group.finish();
}

fn bench_inner(c: &mut Criterion) {
    let inst = layout_instance();
    let noise = WeightedNoise::new(vec![10.0, 12.0, 15.0]).unwrap();
    let fp = FixedPointOptions::default();
    c.bench_function("uplink fixed point 3x4x8", |b| {
        b.iter(|| uplink_fixed_point(&inst.channels, &inst.qos, black_box(&noise), &fp).unwrap())
    });
    let feas = FeasibilityOptions::default();
    c.bench_function("feasibility 3x4x8", |b| {
        b.iter(|| check_feasible(black_box(&inst), &feas).unwrap())
    });
}

criterion_group!(benches, bench_solvers, bench_inner);
criterion_main!(benches);
