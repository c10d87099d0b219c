//! Benchmarks for the four kernels that dominate every experiment: the
//! segmented divisor sieve, the streaming window mean square, the quadrature
//! cells of the continuous mean square, and the Euler-Maclaurin zeta sum.
//! Sizes are chosen so one iteration stays in the low milliseconds; the
//! point is tracking regressions, not saturating the machine.

use criterion::{criterion_group, criterion_main, Criterion};
use delta_lab_core::dd::Dd;
use delta_lab_core::{delta, sieve, zeta};
use std::hint::black_box;

fn sieve_block(c: &mut Criterion) {
    c.bench_function("sieve_d2_block_64k_at_1e9", |b| {
        b.iter(|| sieve::sieve_dk_block(2, 1_000_000_000, 1_000_065_535).unwrap())
    });
    c.bench_function("sieve_d4_block_64k_at_1e8", |b| {
        b.iter(|| sieve::sieve_dk_block(4, 100_000_000, 100_065_535).unwrap())
    });
}

fn window_stream(c: &mut Criterion) {
    c.bench_function("discrete_mean_square_k2_X2e4_h10", |b| {
        b.iter(|| delta::discrete_mean_square(2, 20_000, 10, 1).unwrap())
    });
}

fn quadrature_cells(c: &mut Criterion) {
    c.bench_function("continuous_mean_square_k2_X1e4_h10_gl16", |b| {
        b.iter(|| delta::continuous_mean_square(2, 10_000, 10, 16, 1).unwrap())
    });
}

fn zeta_eval(c: &mut Criterion) {
    // Reusing one evaluator matches how the moment and E(T) loops call it:
    // the n^{-s} tables are built once, then every eval is table-driven.
    let mut ev = zeta::ZetaEvaluator::new(0.5).unwrap();
    ev.eval(1000.0).unwrap();
    c.bench_function("zeta_eval_half_line_t1e3_warm", |b| {
        let mut t = 1000.0;
        b.iter(|| {
            t = if t >= 1010.0 { 1000.0 } else { t + 0.125 };
            ev.eval(black_box(t)).unwrap()
        })
    });
    c.bench_function("zeta_em_sigma2_cold", |b| {
        b.iter(|| zeta::zeta_em(2.0, black_box(10.0)).unwrap())
    });
}

fn dd_ops(c: &mut Criterion) {
    let x = Dd::from_f64(123_456.789);
    c.bench_function("dd_ln", |b| b.iter(|| black_box(x).ln()));
}

criterion_group!(
    kernels,
    sieve_block,
    window_stream,
    quadrature_cells,
    zeta_eval,
    dd_ops
);
criterion_main!(kernels);
