use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use nfc_core::grid::gaussian_image;
use nfc_core::haar::{haar_forward, haar_inverse};
use nfc_core::spectral::{dft2, guided_loss_grad, GuidanceWeights};
use nfc_core::{LinearOperator, OperatorKind, SeededRng, Shape};

fn spectral(c: &mut Criterion) {
    let mut group = c.benchmark_group("dft2");
    for side in [16, 64, 256] {
        let x = gaussian_image(&mut SeededRng::new(1), Shape::new(1, side, side), 0.0, 1.0).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(side), &x, |b, x| {
            b.iter(|| dft2(black_box(x)))
        });
    }
    group.finish();
}

fn operators(c: &mut Criterion) {
    let s = Shape::new(1, 64, 64);
    let mut rng = SeededRng::new(2);
    let x = gaussian_image(&mut rng, s, 0.0, 1.0).unwrap();
    let mut group = c.benchmark_group("normal_64");
    for kind in [
        OperatorKind::GaussianBlur,
        OperatorKind::MotionBlur,
        OperatorKind::Downsample,
        OperatorKind::InpaintMask,
    ] {
        let op = LinearOperator::standard(kind, s, &mut rng).unwrap();
        group.bench_function(kind.name(), |b| b.iter(|| op.normal(black_box(&x)).unwrap()));
    }
    group.finish();

    let op = LinearOperator::standard(OperatorKind::GaussianBlur, s, &mut rng).unwrap();
    let y = op.apply(&x).unwrap();
    let w = GuidanceWeights::new(0.6, 0.2).unwrap();
    c.bench_function("guided_loss_grad_64", |b| {
        b.iter(|| guided_loss_grad(black_box(&x), &y, &op, w).unwrap())
    });
}

fn haar(c: &mut Criterion) {
    let x = gaussian_image(&mut SeededRng::new(3), Shape::new(3, 64, 64), 0.0, 1.0).unwrap();
    c.bench_function("haar_roundtrip_3x64", |b| {
        b.iter(|| haar_inverse(&haar_forward(black_box(&x)).unwrap()).unwrap())
    });
}

criterion_group!(benches, spectral, operators, haar);
criterion_main!(benches);
