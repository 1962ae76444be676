//! Sequential against rayon execution on the three heaviest loops.
//! Without the `parallel` feature both variants run sequentially.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lcstim_core::classify::{train_forest_with, ForestConfig, LabeledSet};
use lcstim_core::detect::detect_recording;
use lcstim_core::exec::Exec;
use lcstim_core::ingest::{generate_synthetic, SyntheticSpec, TrafficPlan};
use lcstim_core::logit::{PlantedModel, Problem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn likelihood(c: &mut Criterion) {
    let model = PlantedModel::reference();
    let data = model.simulate(2000, 1);
    let problem = Problem::new(&data, &model.spec()).unwrap();
    let theta = model.truth();
    let mut g = c.benchmark_group("loglik_grad_n2000_r200");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| problem.loglik_grad(black_box(&theta), exec).unwrap())
        });
    }
    g.finish();
}

fn forest(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x: Vec<Vec<f64>> = (0..500).map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let y: Vec<u8> = x.iter().map(|r| u8::from(r[0] * r[0] + r[1] * r[1] < 0.5)).collect();
    let data = LabeledSet::new((0..8).map(|k| format!("x{k}")).collect(), x, y).unwrap();
    let config = ForestConfig::default();
    let mut g = c.benchmark_group("forest_100_trees_n500");
    g.sample_size(20);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| train_forest_with(black_box(&data), &config, exec).unwrap())
        });
    }
    g.finish();
}

fn detection(c: &mut Criterion) {
    let spec = SyntheticSpec { recordings: vec![], traffic: Some(TrafficPlan::new(1)) };
    // one recording with many vehicles: stack the episode's tracks under fresh ids
    let scripts = spec.scripts(3);
    let mut rec = generate_synthetic(&scripts[0], 3).unwrap().recording;
    let base: Vec<_> = rec.tracks.values().cloned().collect();
    for k in 1..200u32 {
        for t in &base {
            let mut t = t.clone();
            t.vehicle_id += 10 * k;
            rec.tracks.insert(t.vehicle_id, t);
        }
    }
    let mut g = c.benchmark_group("detect_1200_tracks");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| detect_recording(black_box(&rec), exec)));
    }
    g.finish();
}

criterion_group!(benches, likelihood, forest, detection);
criterion_main!(benches);
