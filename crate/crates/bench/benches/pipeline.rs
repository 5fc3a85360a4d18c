use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use parplan::discussion::{run_full_pipeline, DiscussionConfig};
use parplan::metrics::{self, MetricsConfig};
use parplan::planners::{gsca_plan, local_search_plan, PlannerConfig, PlannerKind, SearchConfig};
use parplan::synth::GridSpec;
use parplan_bench::{rule_backend, setup};

fn bench_metrics(c: &mut Criterion) {
    let mut group = c.benchmark_group("metrics_report");
    for n in [1_000u32, 10_000] {
        let (region, pop) = setup(GridSpec::dhm_like(), n, 1);
        let plan = gsca_plan(&region, &pop, &PlannerConfig::default()).unwrap();
        let cfg = MetricsConfig::default();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| metrics::report(black_box(&region), black_box(&plan), &pop, &cfg).unwrap())
        });
    }
    group.finish();
}

fn bench_planners(c: &mut Criterion) {
    let (region, pop) = setup(GridSpec::hlg_like(), 1_000, 2);
    let cfg = PlannerConfig::default();
    c.bench_function("gsca_hlg_1000", |b| b.iter(|| gsca_plan(black_box(&region), &pop, &cfg).unwrap()));
    let search = PlannerConfig {
        search: SearchConfig {
            max_iters: 2_000,
            restarts: 1,
            ..SearchConfig::default()
        },
        ..PlannerConfig::default()
    };
    c.bench_function("local_search_hlg_1000_2k_iters", |b| {
        b.iter(|| local_search_plan(black_box(&region), &pop, &search).unwrap())
    });
}

fn bench_pipeline(c: &mut Criterion) {
    let (region, pop) = setup(GridSpec::hlg_like(), 1_000, 3);
    let planner = PlannerConfig::default().with_seed(3);
    let backend = rule_backend(&region, &pop, &planner);
    let config = DiscussionConfig {
        seed: 3,
        ..DiscussionConfig::default()
    };
    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    group.bench_function("rule_hlg_1000", |b| {
        b.iter(|| run_full_pipeline(&region, &pop, PlannerKind::Gsca, &planner, &backend, &config).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_metrics, bench_planners, bench_pipeline);
criterion_main!(benches);
