//! Criterion benches: single-decision planning cost and the parallel vs
//! sequential replication batch.

use criterion::{criterion_group, criterion_main, Criterion};
use dispatch_core::baselines::HeuristicConfig;
use dispatch_core::experiment::{
    run_batch, run_batch_sequential, ConstraintFamily, PlannerKind, SweepSpec,
};
use dispatch_core::model::Scenario;
use dispatch_core::objective::DiscountSpec;
use dispatch_core::planner::{plan, SearchConfig};
use dispatch_core::scenario::reference_scenario;
use dispatch_core::sim::SimState;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bench_single_decision(c: &mut Criterion) {
    let mut config = reference_scenario();
    config.constraint_specs = ConstraintFamily::Battery.filter(&config.constraint_specs);
    let scenario = Scenario::compile(&config).unwrap();
    let mut state = SimState::new(scenario);
    let (truck, _) = state.next_decision_point().unwrap();
    let search = SearchConfig::new(DiscountSpec::from_factors(7.0 * 3600.0, 1.5, 1.0, 600.0))
        .with_iterations(500);

    c.bench_function("plan_battery_h10p5_500iters", |b| {
        let mut seed = 0u64;
        b.iter(|| {
            seed += 1;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            plan(&state, truck, &search, &mut rng).unwrap()
        })
    });
}

fn batch_sweep() -> SweepSpec {
    SweepSpec {
        d_r: 3600.0,
        f_hz: vec![1.0],
        f_hf: vec![1.0],
        replications: 4,
        base_seed: 11,
        duration: 2.0 * 3600.0,
        iterations: 120,
        dt: 600.0,
        exploration_scale: 1.0,
    }
}

fn bench_replication_batch(c: &mut Criterion) {
    let config = reference_scenario();
    let sweep = batch_sweep();
    let heuristics = HeuristicConfig::default();
    let mut group = c.benchmark_group("replication_batch");
    group.sample_size(10);
    group.bench_function("sequential", |b| {
        b.iter(|| {
            run_batch_sequential(
                &config,
                ConstraintFamily::None,
                PlannerKind::FastCon,
                &sweep,
                &heuristics,
            )
            .unwrap()
        })
    });
    group.bench_function("parallel", |b| {
        b.iter(|| {
            run_batch(
                &config,
                ConstraintFamily::None,
                PlannerKind::FastCon,
                &sweep,
                &heuristics,
                false,
                false,
            )
            .unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, bench_single_decision, bench_replication_batch);
criterion_main!(benches);
