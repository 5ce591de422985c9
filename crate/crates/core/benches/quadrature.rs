use std::sync::Arc;

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use nldiff::{sample, solve, Domain, Execution, Grid, KernelSpec, NonlocalContext, ProblemSpec, RecognitionSpec};

fn bench_apply(c: &mut Criterion) {
    let mut group = c.benchmark_group("apply_nonlocality");
    for h in [1.0 / 200.0, 1.0 / 800.0] {
        let grid = Arc::new(Grid::build(Domain::interval(-0.5, 0.5).unwrap(), h).unwrap());
        let w = sample(&grid, |x| 3.0 * x[0]).unwrap();
        let ctx = NonlocalContext::new(grid.clone(), KernelSpec::gaussian(0.5), RecognitionSpec::bump(0.2)).unwrap();
        for exec in [Execution::Serial, Execution::Parallel] {
            let ctx = ctx.clone().with_execution(exec);
            let mut out = vec![0.0; grid.len()];
            group.bench_with_input(BenchmarkId::new(format!("{exec:?}"), grid.len()), &w, |b, w| {
                b.iter(|| {
                    ctx.apply_values(black_box(w.values()), &mut out);
                    black_box(&out);
                })
            });
        }
    }
    group.finish();
}

fn bench_sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("slope_sweep");
    group.sample_size(10);
    let slopes: Vec<f64> = (0..8).map(|k| 0.5 * k as f64).collect();
    for exec in [Execution::Serial, Execution::Parallel] {
        group.bench_function(format!("{exec:?}"), |b| {
            b.iter(|| {
                exec.map(&slopes, |&l| {
                    let spec = ProblemSpec::new(
                        Domain::interval(-0.5, 0.5).unwrap(),
                        KernelSpec::gaussian(0.5),
                        RecognitionSpec::bump(0.2),
                        move |x| l * x[0],
                        0.5,
                        1.0 / 100.0,
                    )
                    .with_execution(Execution::Serial);
                    solve(&spec).unwrap().steps
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_apply, bench_sweep);
criterion_main!(benches);
