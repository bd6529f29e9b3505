use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nl2milp::amdl::{compile_program, emit_lp, oracle_solve, parse_lp, parse_program};
use nl2milp_bench::production;

fn front_end(c: &mut Criterion) {
    let mut group = c.benchmark_group("compile");
    for products in [10, 100, 1000] {
        let (src, data) = production(products, 20);
        group.bench_with_input(BenchmarkId::from_parameter(products), &products, |b, _| {
            b.iter(|| compile_program(black_box(&src), black_box(&data)).unwrap())
        });
    }
    group.finish();

    let (src, _) = production(10, 20);
    c.bench_function("parse_program", |b| b.iter(|| parse_program(black_box(&src)).unwrap()));
}

fn lp_files(c: &mut Criterion) {
    let (src, data) = production(200, 20);
    let model = compile_program(&src, &data).unwrap();
    let text = emit_lp(&model).unwrap();
    c.bench_function("emit_lp/200x20", |b| b.iter(|| emit_lp(black_box(&model)).unwrap()));
    c.bench_function("parse_lp/200x20", |b| b.iter(|| parse_lp(black_box(&text)).unwrap()));
}

fn oracle(c: &mut Criterion) {
    let (src, data) = production(3, 2);
    let model = compile_program(&src, &data).unwrap();
    c.bench_function("oracle/3x2", |b| b.iter(|| oracle_solve(black_box(&model)).unwrap()));
}

criterion_group!(benches, front_end, lp_files, oracle);
criterion_main!(benches);
