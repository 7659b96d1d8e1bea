use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use shtp_core::model::Plan;
use shtp_core::scenario::{generate_scenario, ScenarioConfig};
use shtp_core::simulate::rollout_sequential;
use shtp_core::stochastic::{greedy_routes, ModelKind};

fn rollouts(c: &mut Criterion) {
    let inst = generate_scenario(&ScenarioConfig {
        n_vehicles: 10,
        n_tasks: 8,
        seed: 1,
        ..ScenarioConfig::default()
    })
    .expect("scenario");
    let routes = greedy_routes(&inst, ModelKind::Recourse).expect("greedy plan");
    let plan = Plan::from_routes(&inst, routes).expect("plan");

    let mut group = c.benchmark_group("rollout");
    group.sample_size(20);
    for n in [10_000usize, 100_000] {
        group.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, &n| {
            b.iter(|| rollout_sequential(&inst, &plan, n, 7).unwrap())
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, &n| {
            b.iter(|| shtp_core::simulate::rollout_parallel(&inst, &plan, n, 7).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, rollouts);
criterion_main!(benches);
