use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use moldloop::control::inverse_adjust;
use moldloop::doe::{fisher_screen_single, pb_design};
use moldloop::metrology::average_trace;
use moldloop::nnet::backprop_gradients;
use moldloop::plant::{nominal_quality, DisturbanceState, Plant, PlantConfig, ProcessParams};
use moldloop_bench::{random_net, trained_inverse};

fn plant(c: &mut Criterion) {
    let p = Plant::new(PlantConfig::default());
    c.bench_function("plant_cycle", |b| {
        b.iter(|| p.run_cycle(0, black_box(&ProcessParams::NOMINAL), &DisturbanceState::NONE, 1).unwrap())
    });
    let rec = p.run_cycle(0, &ProcessParams::NOMINAL, &DisturbanceState::NONE, 1).unwrap();
    c.bench_function("average_trace_w20", |b| b.iter(|| average_trace(black_box(&rec.trace), 20).unwrap()));
}

fn nnet(c: &mut Criterion) {
    let net = random_net(&[9, 21, 2], 1);
    let x = vec![0.3; 9];
    c.bench_function("forward_9_21_2", |b| b.iter(|| net.forward(black_box(&x)).unwrap()));
    let xs: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64 / 64.0; 9]).collect();
    let ys: Vec<Vec<f64>> = (0..64).map(|i| vec![(i as f64 / 64.0).sin(); 2]).collect();
    c.bench_function("backprop_9_21_2_batch64", |b| {
        b.iter(|| backprop_gradients(&net, black_box(&xs), &ys).unwrap())
    });
}

fn control(c: &mut Criterion) {
    let inv = trained_inverse(1);
    let plant = Plant::noiseless();
    let target = nominal_quality(&plant);
    let start = ProcessParams::NOMINAL.with(moldloop::plant::ParamKind::HoldPressure, 360.0).unwrap();
    let measured = plant.quality(&start, &DisturbanceState::NONE).unwrap();
    c.bench_function("inverse_adjust", |b| {
        b.iter(|| inverse_adjust(&inv, black_box(&measured), &target, &start, 0.7).unwrap())
    });
}

fn doe(c: &mut Criterion) {
    let d = pb_design(7).unwrap();
    let y: Vec<f64> = (0..d.n_runs()).map(|i| (i as f64).sin()).collect();
    c.bench_function("pb_design_23", |b| b.iter(|| pb_design(black_box(23)).unwrap()));
    c.bench_function("fisher_screen_pb8", |b| b.iter(|| fisher_screen_single(&d, black_box(&y), 0.05).unwrap()));
}

criterion_group!(benches, plant, nnet, control, doe);
criterion_main!(benches);
