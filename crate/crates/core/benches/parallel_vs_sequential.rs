//! Compares the rayon-backed hot paths against a single worker thread.
//!
//! Built without the `parallel` feature, both variants run the sequential
//! fallback and should time the same.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use spiral_unroll::features::pipeline::{extract_features, FeatureParams};
use spiral_unroll::fit::{FitConfig, Fitter};
use spiral_unroll::mesh::{default_steps, extract_mesh};
use spiral_unroll::metrics::{evaluate, MetricsOptions};
use spiral_unroll::phantom::raster::{rasterize, RasterConfig};
use spiral_unroll::phantom::{make_phantom, PhantomConfig};

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let all = rayon::ThreadPoolBuilder::new().build().unwrap();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    vec![("parallel", all), ("sequential", one)]
}

fn benches(c: &mut Criterion) {
    let ph = make_phantom(&PhantomConfig {
        windings: 4.0,
        spacing: 20.0,
        z_extent: 80.0,
        seed: 1,
        ..Default::default()
    })
    .unwrap();
    let raster = RasterConfig {
        dims: [96, 96, 48],
        ..Default::default()
    };
    let volume = rasterize(&ph, &raster).unwrap();
    let fparams = FeatureParams {
        prior_spacing: 20.0,
        ..Default::default()
    };
    let fit_cfg = FitConfig {
        total_steps: 5,
        ..Default::default()
    };
    let (dth, dz) = default_steps(&ph.truth.spiral);
    let gt = ph.gt_mesh(dth, dz).unwrap();
    let mesh = extract_mesh(&ph.truth, dth, dz).unwrap();
    let mopts = MetricsOptions {
        slices: 20,
        angles: 40,
        chamfer_samples: 4000,
        seed: 0,
    };

    let mut g = c.benchmark_group("pipeline");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::new("fit_5_steps", name), |b| {
            b.iter(|| {
                pool.install(|| {
                    let mut f = Fitter::new(&ph.features, fit_cfg.clone()).unwrap();
                    f.run_until(5).unwrap();
                    f.step()
                })
            })
        });
        g.bench_function(BenchmarkId::new("rasterize", name), |b| {
            b.iter(|| pool.install(|| rasterize(&ph, &raster).unwrap()))
        });
        g.bench_function(BenchmarkId::new("extract_features", name), |b| {
            b.iter(|| pool.install(|| extract_features(&volume, &fparams).unwrap()))
        });
        g.bench_function(BenchmarkId::new("metrics", name), |b| {
            b.iter(|| pool.install(|| evaluate(&gt, &ph.truth, &mesh, &mopts).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(pipeline, benches);
criterion_main!(pipeline);
