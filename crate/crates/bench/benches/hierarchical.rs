use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use pb_bench::{allocation, gamma_poisson, SEED};
use pb_core::hierarchical::{
    sample_dirichlet_allocation, sample_hier_large_k, sample_hier_penalized, HierarchicalSpec,
};
use pb_core::model::{GammaPoissonConditional, GammaPrior, GammaRateConditional, PoissonRate};
use pb_core::RunConfig;

fn spec(k: usize) -> HierarchicalSpec {
    HierarchicalSpec::new(
        gamma_poisson(k, 100),
        Arc::new(PoissonRate::new()),
        Arc::new(GammaRateConditional { alpha: 2.0 }),
    )
    .unwrap()
    .with_hyperprior(Arc::new(GammaPrior::scalar(9.0, 3.0).unwrap()))
    .unwrap()
    .with_conditional(Arc::new(GammaPoissonConditional {
        alpha0: 9.0,
        beta0: 3.0,
        alpha: 2.0,
    }))
}

fn gamma_poisson_bench(c: &mut Criterion) {
    let s = spec(20);
    let run = RunConfig::new(100, SEED).with_workers(1);
    c.bench_function("hier_cond_K20", |b| {
        b.iter(|| sample_hier_penalized(&s, None, &run).unwrap())
    });
    c.bench_function("hier_large_k_K20", |b| {
        b.iter(|| sample_hier_large_k(&s, None, None, &run).unwrap())
    });
}

fn allocation_bench(c: &mut Criterion) {
    let data = allocation(50, 1000);
    let run = RunConfig::new(10, SEED).with_workers(1);
    c.bench_function("dirichlet_alloc_K50_T100", |b| {
        b.iter(|| sample_dirichlet_allocation(&data, 10.0, 100, None, &run).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = gamma_poisson_bench, allocation_bench
}
criterion_main!(benches);
