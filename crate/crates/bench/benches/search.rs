//! PSO and fitness-term costs.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use mtgen_bench::{desk_classifier, desk_stage_pair};
use mtgen_core::search::{o1, o2, pso_run, FitnessConfig, FitnessEvaluator, SwarmConfig};
use mtgen_core::seeds;
use mtgen_core::Real;

fn sphere(c: &mut Criterion) {
    let config = SwarmConfig {
        particles: 40,
        iterations: 200,
        ..SwarmConfig::default()
    };
    c.bench_function("pso_sphere_k8_40x200", |b| {
        b.iter(|| {
            let result = pso_run(
                8,
                |u, _| Ok(-u.iter().map(|v| v * v).sum::<Real>()),
                &config,
                black_box(7),
            )
            .unwrap();
            black_box(result.best_fitness)
        })
    });
}

fn fitness_terms(c: &mut Criterion) {
    let u: Vec<Real> = (0..32).map(|i| (i as Real * 0.37).sin()).collect();
    c.bench_function("o1_o2_terms", |b| {
        b.iter(|| black_box(o1(black_box(1.3)).unwrap() + o2(black_box(&u)).unwrap()))
    });

    let model = desk_classifier();
    let (stage1, stage2) = desk_stage_pair();
    let config = FitnessConfig {
        mc_passes: 32,
        ..FitnessConfig::default()
    };
    let evaluator = FitnessEvaluator::new(&model, &stage1, &stage2, config).unwrap();
    let candidate: Vec<Real> = (0..8).map(|i| (i as Real * 0.61).cos()).collect();
    c.bench_function("fitness_evaluation_t32", |b| {
        let mut rng = seeds::rng(9);
        b.iter(|| {
            black_box(
                evaluator
                    .evaluate(black_box(&candidate), 2, &mut rng)
                    .unwrap()
                    .total,
            )
        })
    });
}

criterion_group!(benches, sphere, fitness_terms);
criterion_main!(benches);
