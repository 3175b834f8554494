use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use srhlab_bench::step_fixture;
use srhlab_core::{
    solve_equilibrium, Check, DiagnosticsRow, Stepper, StepperConfig, VerifyContext,
};

fn stepper(c: &mut Criterion) {
    let mut group = c.benchmark_group("advance");
    for eps in [0.1, 0.0] {
        let (params, start) = step_fixture(200, eps);
        let cfg = StepperConfig::new(1e-3, 20.0, 10).unwrap();
        let mut stepper = Stepper::new(&params, cfg).unwrap();
        let mut state = start.clone();
        group.bench_with_input(BenchmarkId::new("200_cells", eps), &eps, |b, _| {
            b.iter(|| {
                state = stepper.advance(black_box(&state)).unwrap();
                if state.t > 1.0 {
                    state = start.clone();
                }
            })
        });
    }
    group.finish();
}

fn diagnostics(c: &mut Criterion) {
    let (params, state) = step_fixture(200, 0.1);
    let eq = solve_equilibrium(&params, state.mass(&params)).unwrap();
    c.bench_function("diagnostics_row_200_cells", |b| {
        b.iter(|| DiagnosticsRow::evaluate(black_box(&state), &eq, &params).unwrap())
    });
}

fn verify(c: &mut Criterion) {
    let (params, state) = step_fixture(200, 0.1);
    let ctx = VerifyContext::new(&params, state.mass(&params), None, 1).unwrap();
    let mut group = c.benchmark_group("verify_sample");
    for check in [Check::Ckp, Check::Eep] {
        let mut index = 0u64;
        group.bench_function(check.name(), |b| {
            b.iter(|| {
                index += 1;
                ctx.evaluate(check, index).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, stepper, diagnostics, verify);
criterion_main!(benches);
