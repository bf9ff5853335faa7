use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dsd_core::channel::ChannelRealization;
use dsd_core::detect::{Constellation, DetectionMode, DetectorFamily, DetectorPlan, DetectorSpec};
use dsd_core::dsd::decouple_qr;
use dsd_core::flops::qr_flops;
use dsd_core::numerics::{ComplexMatrix, ComplexVector};
use dsd_core::rate::{coupled_sic_lower_bound, dsd_sum_rate};
use dsd_core::rng::{complex_normal, substream, SimRng};
use rand::Rng;

const SIGMA2: f64 = 0.1;

fn realization(rng: &mut SimRng, n_r: usize, class_sizes: &[usize]) -> ChannelRealization {
    let n_t = class_sizes.iter().sum();
    let h = ComplexMatrix::from_fn(n_r, n_t, |_, _| complex_normal(rng));
    ChannelRealization::from_matrix(h, class_sizes.to_vec()).expect("valid blocks")
}

fn received(rng: &mut SimRng, h: &ComplexMatrix, constellation: &Constellation) -> ComplexVector {
    let symbols: Vec<usize> = (0..h.ncols())
        .map(|_| rng.random_range(0..constellation.len()))
        .collect();
    let noise = ComplexVector::from_fn(h.nrows(), |_, _| complex_normal(rng) * SIGMA2.sqrt());
    h * constellation.map(&symbols) + noise
}

fn decoupling(c: &mut Criterion) {
    let mut group = c.benchmark_group("decouple_qr");
    for n_r in [32, 64, 128] {
        let real = realization(&mut substream(1, &[n_r as u64]), n_r, &[4; 6]);
        group.bench_with_input(BenchmarkId::from_parameter(n_r), &real, |b, real| {
            b.iter(|| decouple_qr(black_box(real), SIGMA2).unwrap())
        });
    }
    group.finish();
}

fn detection(c: &mut Criterion) {
    let constellation = Constellation::qpsk();
    let mut rng = substream(2, &[]);
    let real = realization(&mut rng, 36, &[6, 6]);
    let set = decouple_qr(&real, SIGMA2).unwrap();
    let y = received(&mut rng, real.h(), &constellation);
    let class = set.class(0);
    let projected = class.project(&y).unwrap();

    let mut group = c.benchmark_group("detect");
    for family in [
        DetectorFamily::Mmse,
        DetectorFamily::SicMmse,
        DetectorFamily::MbSic,
    ] {
        let decoupled = DetectorPlan::build(
            &DetectorSpec::new(family, DetectionMode::Decoupled),
            &class.equivalent_channel,
            SIGMA2,
        )
        .unwrap();
        group.bench_function(format!("{}/decoupled", family.label()), |b| {
            b.iter(|| decoupled.detect(black_box(&projected), &constellation))
        });
        let coupled = DetectorPlan::build(
            &DetectorSpec::new(family, DetectionMode::Coupled),
            real.h(),
            SIGMA2,
        )
        .unwrap();
        group.bench_function(format!("{}/coupled", family.label()), |b| {
            b.iter(|| coupled.detect(black_box(&y), &constellation))
        });
    }
    group.finish();
}

fn rates(c: &mut Criterion) {
    let real = realization(&mut substream(3, &[]), 64, &[8; 4]);
    let set = decouple_qr(&real, SIGMA2).unwrap();
    c.bench_function("dsd_sum_rate", |b| {
        b.iter(|| dsd_sum_rate(black_box(&real), &set, 1.0, SIGMA2).unwrap())
    });
    c.bench_function("coupled_sic_bound", |b| {
        b.iter(|| {
            coupled_sic_lower_bound(
                black_box(real.h()),
                dsd_core::detect::FilterKind::Mmse,
                1.0,
                SIGMA2,
            )
            .unwrap()
        })
    });
    c.bench_function("qr_flops", |b| {
        b.iter(|| qr_flops(black_box(12), black_box(36)).unwrap())
    });
}

criterion_group!(benches, decoupling, detection, rates);
criterion_main!(benches);
