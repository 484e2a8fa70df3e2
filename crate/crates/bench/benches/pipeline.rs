use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};

use eprb_bench::{config, logs};
use eprb_core::oracle::{model_e_first_order, model_finite_window, weight_w};
use eprb_core::pairing::{count_binned, count_index_window, count_relative_window, count_shifted};
use eprb_core::ttio::{read_log, write_log};
use eprb_core::{Angle, Simulation};

const PAIRS: u64 = 100_000;

fn simulation(c: &mut Criterion) {
    let mut g = c.benchmark_group("simulate");
    g.throughput(Throughput::Elements(PAIRS));
    g.sample_size(20);
    let sim = Simulation::new(config(PAIRS)).unwrap();
    g.bench_function("pair_statistics", |b| b.iter(|| black_box(sim.pair_statistics(None))));
    g.bench_function("generate_logs", |b| b.iter(|| black_box(sim.generate_logs())));
    g.finish();
}

fn pairing(c: &mut Criterion) {
    let (l1, l2) = logs(PAIRS);
    let mut g = c.benchmark_group("pairing");
    g.throughput(Throughput::Elements(PAIRS));
    g.bench_function("index", |b| b.iter(|| count_index_window(&l1, &l2, 1).unwrap()));
    g.bench_function("binned", |b| b.iter(|| count_binned(&l1, &l2, 0.02).unwrap()));
    g.bench_function("relative", |b| {
        b.iter(|| count_relative_window(&l1, &l2, 0.01, 0.0).unwrap())
    });
    g.bench_function("shifted", |b| b.iter(|| count_shifted(&l1, &l2, 0.01, 0.25).unwrap()));
    g.finish();
}

fn ttag(c: &mut Criterion) {
    let (l1, _) = logs(PAIRS);
    let bytes = write_log(&l1, l1.tick_resolution);
    let mut g = c.benchmark_group("ttag");
    g.throughput(Throughput::Bytes(bytes.len() as u64));
    g.bench_function("write", |b| b.iter(|| black_box(write_log(&l1, l1.tick_resolution))));
    g.bench_function("read", |b| {
        b.iter_batched(|| bytes.clone(), |v| read_log(&v).unwrap(), BatchSize::LargeInput)
    });
    g.finish();
}

fn oracle(c: &mut Criterion) {
    let mut g = c.benchmark_group("oracle");
    g.bench_function("weight_w", |b| {
        b.iter(|| weight_w(black_box(0.3), black_box(0.7), black_box(0.05)))
    });
    g.bench_function("first_order_closed_d4", |b| {
        b.iter(|| model_e_first_order(black_box(Angle::new(0.3)), 4.0).unwrap())
    });
    g.bench_function("first_order_quadrature_d3", |b| {
        b.iter(|| model_e_first_order(black_box(Angle::new(0.3)), 3.0).unwrap())
    });
    g.sample_size(10);
    g.bench_function("finite_window_d4", |b| {
        b.iter(|| model_finite_window(black_box(Angle::new(0.3)), 4.0, 0.01).unwrap())
    });
    g.finish();
}

criterion_group!(benches, simulation, pairing, ttag, oracle);
criterion_main!(benches);
