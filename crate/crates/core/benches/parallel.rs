//! Rayon pool vs a single worker on the data-parallel hot paths.
//! Built without the `parallel` feature only the sequential variant runs.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kernel_aimc::analog::{build_backend, AnalogTileConfig, BackendKind};
use kernel_aimc::data::synthetic_clusters;
use kernel_aimc::exact::{gram, KernelId};
use kernel_aimc::features::{map_rows, sample, FeatureMapSpec, Sampler};

fn modes() -> Vec<(&'static str, Option<usize>)> {
    let mut m = vec![("sequential", Some(1))];
    if cfg!(feature = "parallel") {
        m.push(("parallel", None));
    }
    m
}

fn run<T>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T
where
    T: Send,
{
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        return rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap().install(f);
    }
    let _ = threads;
    f()
}

fn bench(c: &mut Criterion) {
    let data = synthetic_clusters(1000, 16, 0).unwrap();
    let x = data.features;
    let proj = sample(FeatureMapSpec::with_log2_ratio(KernelId::Rbf, Sampler::Orf, 16, 3, 0)).unwrap();
    let analog = build_backend(&proj, &BackendKind::Analog(AnalogTileConfig::default()), &x).unwrap();

    let mut g = c.benchmark_group("hot_paths");
    g.sample_size(10);
    for (name, threads) in modes() {
        g.bench_function(BenchmarkId::new("gram_rbf_1000", name), |b| b.iter(|| run(threads, || gram(KernelId::Rbf, black_box(&x), &x).unwrap())));
        g.bench_function(BenchmarkId::new("map_rows_analog_1000x128", name), |b| {
            b.iter(|| run(threads, || map_rows(black_box(&x), &proj, analog.as_ref(), 1).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
