use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion, Throughput};

use doclab::bounds::{mean_bad_volume, predicted_mean_error};
use doclab::data::gen_gaussian_balanced;
use doclab::doc::estimate_doc;
use doclab::nn::{BatchEvaluator, PackedDataset};
use doclab::sphere::fill_unit_sphere;
use doclab::{derive_stream, Arch, DocHistogram, DocSettings, GaussianProblem};

fn sphere(c: &mut Criterion) {
    let mut g = c.benchmark_group("sphere");
    for dim in [120usize, 1200] {
        let mut rng = derive_stream(1, 0);
        let mut buf = vec![0.0; dim];
        g.throughput(Throughput::Elements(dim as u64));
        g.bench_function(format!("fill_{dim}"), |b| {
            b.iter(|| {
                fill_unit_sphere(&mut buf, &mut rng);
                black_box(buf[0])
            })
        });
    }
    g.finish();
}

fn batch_eval(c: &mut Criterion) {
    let problem = GaussianProblem::default();
    let test = gen_gaussian_balanced(&problem, 2000, &mut derive_stream(1, 1));
    let packed = PackedDataset::new(&test);
    let mut g = c.benchmark_group("error_rate");
    g.throughput(Throughput::Elements(test.len() as u64));
    for widths in [vec![10, 10, 2], vec![10, 100, 2]] {
        let arch = Arch::with_widths(&widths).unwrap();
        let mut eval = BatchEvaluator::new(&arch);
        let mut rng = derive_stream(1, 2);
        let mut w = vec![0.0; arch.weight_count()];
        g.bench_function(format!("{widths:?}"), |b| {
            b.iter(|| {
                fill_unit_sphere(&mut w, &mut rng);
                black_box(eval.error_rate(&w, &packed))
            })
        });
    }
    g.finish();
}

fn doc_block(c: &mut Criterion) {
    let arch = Arch::with_widths(&[10, 10, 2]).unwrap();
    let test = gen_gaussian_balanced(&GaussianProblem::default(), 2000, &mut derive_stream(1, 1));
    let settings = DocSettings::new(4096, 3);
    let mut g = c.benchmark_group("estimate_doc");
    g.sample_size(10);
    g.throughput(Throughput::Elements(settings.samples));
    g.bench_function("one_block", |b| {
        b.iter(|| estimate_doc(&arch, &test, &settings).unwrap())
    });
    g.finish();
}

fn bounds(c: &mut Criterion) {
    let counts = (0..100u64).map(|k| (k * 37 % 11) * (k % 7)).collect();
    let doc = DocHistogram::from_counts(counts).unwrap();
    c.bench_function("bounds/mean_bad_volume_n0_200", |b| {
        b.iter(|| (0..=200).map(|n| mean_bad_volume(&doc, n, 0.2).unwrap()).sum::<f64>())
    });
    c.bench_function("bounds/predicted_mean_error_n0_200", |b| {
        b.iter(|| (0..=200).map(|n| predicted_mean_error(&doc, n).unwrap()).sum::<f64>())
    });
}

criterion_group!(benches, sphere, batch_eval, doc_block, bounds);
criterion_main!(benches);
