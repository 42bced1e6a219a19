use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::{DMatrix, DVector};
use policysim_core::numerics::{absorb_two_way, simplex_weights, two_way_effects};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn numerics(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n_units, n_years) = (50, 18);
    let units: Vec<usize> = (0..n_units * n_years).map(|i| i / n_years).collect();
    let times: Vec<usize> = (0..n_units * n_years).map(|i| i % n_years).collect();
    let y: Vec<f64> = units.iter().map(|_| rng.random::<f64>()).collect();
    let x = DMatrix::from_fn(y.len(), 6, |_, _| rng.random::<f64>());

    c.bench_function("two_way_effects 50x18", |b| b.iter(|| two_way_effects(&y, &units, &times).unwrap()));
    c.bench_function("absorb_two_way 50x18x6", |b| {
        b.iter(|| absorb_two_way(&x, &units, &times).unwrap())
    });

    let donors = DMatrix::from_fn(12, 25, |_, _| rng.random::<f64>());
    let target = DVector::from_fn(12, |_, _| rng.random::<f64>());
    c.bench_function("simplex_weights 12x25", |b| b.iter(|| simplex_weights(&donors, &target, 1e-8).unwrap()));
}

criterion_group!(benches, numerics);
criterion_main!(benches);
