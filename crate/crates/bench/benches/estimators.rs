use criterion::{criterion_group, criterion_main, Criterion};
use policysim_core::dgp::{apply_effects, draw_treatment, effect_profile, reference_panel};
use policysim_core::estimators::run_estimator;
use policysim_core::harness::run_replicate;
use policysim_core::{EstimatorId, Scenario, SimulationConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn estimators(c: &mut Criterion) {
    let base = reference_panel(20_240_501);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let schedule = draw_treatment(&base, 25, 2002..=2011, &mut rng).unwrap();
    let (data, _) = apply_effects(&base, &schedule, &effect_profile(Scenario::RampDown)).unwrap();
    let config = SimulationConfig::new("reference.csv", 1);
    let options = config.estimator_options();

    let mut group = c.benchmark_group("estimator");
    group.sample_size(10);
    for id in EstimatorId::ALL {
        group.bench_function(id.label(), |b| {
            b.iter(|| run_estimator(id, &data, &schedule, &options, 9))
        });
    }
    group.finish();

    let mut group = c.benchmark_group("replicate");
    group.sample_size(10);
    group.bench_function("all_estimators", |b| {
        b.iter(|| run_replicate(&config, &base, Scenario::RampDown, 25, 0).unwrap())
    });
    group.finish();
}

criterion_group!(benches, estimators);
criterion_main!(benches);
