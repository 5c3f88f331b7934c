use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use unroll_core::operators::{build_projector, Geometry, ImageGrid};
use unroll_core::par::Exec;
use unroll_core::rng;

fn modes() -> Vec<(&'static str, Exec)> {
    #[allow(unused_mut)]
    let mut v = vec![("sequential", Exec::Sequential)];
    #[cfg(feature = "parallel")]
    v.push(("parallel", Exec::Parallel));
    v
}

fn projector(c: &mut Criterion) {
    for size in [64, 128] {
        let grid = ImageGrid::square(size, 2.0 / size as f64);
        let geom = Geometry::covering(grid, size).expect("geometry");
        let p = build_projector(&geom, grid).expect("projector");
        let mut r = rng::stream(0, 0);
        let x = rng::normal_vec(&mut r, p.n_cols());
        let y = rng::normal_vec(&mut r, p.n_rows());

        let mut group = c.benchmark_group(format!("forward_{size}"));
        for (name, exec) in modes() {
            group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
                b.iter(|| black_box(p.apply_with(e, black_box(&x))))
            });
        }
        group.finish();

        let mut group = c.benchmark_group(format!("adjoint_{size}"));
        for (name, exec) in modes() {
            group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
                b.iter(|| black_box(p.apply_transpose_with(e, black_box(&y))))
            });
        }
        group.finish();
    }
}

criterion_group!(benches, projector);
criterion_main!(benches);
