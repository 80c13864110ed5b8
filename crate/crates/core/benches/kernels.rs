//! Hot kernels on the rayon pool against a single worker. Build with
//! `--no-default-features` to bench the plain sequential fallback instead.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use retmap::interp::TemplateSampler;
use retmap::prf::predict_bold_batch;
use retmap::synth::{synth_bar_stimulus, synth_deformation, synth_template, SyntheticSpec};
use retmap::{canonical_hrf, compute_beltrami, linear_beltrami_solve, par, HrfParams, Point2};

fn kernels(c: &mut Criterion) {
    let spec = SyntheticSpec::default();
    let t = synth_template(&spec).unwrap();
    let d = synth_deformation(t.faces(), &t.param, 0.4, 1).unwrap();
    let faces = t.faces().to_vec();
    let uv = t.param.uv.clone();
    let pins: Vec<(usize, Point2)> = t.param.boundary_ids.iter().map(|&b| (b, uv[b])).collect();
    let stim = synth_bar_stimulus(4, 16, 80.0, 81, 1.0).unwrap();
    let hrf = canonical_hrf(&HrfParams::default(), 1.0, 32.0);
    let prfs: Vec<(f64, f64, f64)> =
        t.visual.iter().zip(&t.prf_size).take(500).map(|(v, &s)| (v[0], v[1], s)).collect();
    let sampler = TemplateSampler::new(&t);
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());

    for (label, n) in [("parallel", threads), ("single", 1)] {
        let mut g = c.benchmark_group(label);
        g.sample_size(10);
        g.bench_function(BenchmarkId::new("compute_beltrami", faces.len()), |b| {
            b.iter(|| par::with_threads(n, || compute_beltrami(&faces, &uv, &d.forward).unwrap()))
        });
        g.bench_function(BenchmarkId::new("linear_beltrami_solve", faces.len()), |b| {
            b.iter(|| par::with_threads(n, || linear_beltrami_solve(&faces, &uv, &d.realized, &pins).unwrap()))
        });
        g.bench_function(BenchmarkId::new("predict_bold_batch", prfs.len()), |b| {
            b.iter(|| par::with_threads(n, || predict_bold_batch(&stim, &prfs, &hrf).unwrap()))
        });
        g.bench_function(BenchmarkId::new("interpolate_template", uv.len()), |b| {
            b.iter(|| par::with_threads(n, || sampler.sample_all(&d.forward)))
        });
        g.finish();
    }
}

criterion_group!(benches, kernels);
criterion_main!(benches);
