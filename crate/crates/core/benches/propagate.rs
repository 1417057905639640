use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use heisen::exec::{set_execution, Execution};
use heisen::heatkernel::{HeatPropagator, SplittingPlan};
use heisen::hgroup::{GridFn, GridSpec};
use heisen::poisson::{poisson_apply, subordination_rule};
use heisen::potential::PotentialModel;

fn datum(spec: GridSpec) -> GridFn {
    GridFn::from_fn(spec, |x, t| {
        let u = x.iter().map(|v| v * v).sum::<f64>() + 0.25 * t * t;
        if u < 1.0 {
            (1.0 - 1.0 / (1.0 - u)).exp()
        } else {
            0.0
        }
    })
}

fn modes() -> [(&'static str, Execution); 2] {
    [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)]
}

fn heat(c: &mut Criterion) {
    let spec = GridSpec::new(1, 4.0, 8.0, 25, 145).unwrap();
    let f = datum(spec);
    let prop = HeatPropagator::new(spec);
    let mut g = c.benchmark_group("heat_apply");
    g.sample_size(10);
    for (name, mode) in modes() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            set_execution(mode);
            b.iter(|| prop.apply(&f, 0.25).unwrap());
        });
    }
    g.finish();
    set_execution(Execution::Parallel);
}

fn poisson(c: &mut Criterion) {
    let spec = GridSpec::new(1, 2.0, 4.0, 13, 37).unwrap();
    let f = datum(spec);
    let rule = subordination_rule(24).unwrap();
    let v = PotentialModel::Constant { c: 1.0 };
    let plan = SplittingPlan::strang(1.0, 0.125).unwrap();
    let mut g = c.benchmark_group("poisson_apply");
    g.sample_size(10);
    for (name, mode) in modes() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            set_execution(mode);
            b.iter(|| poisson_apply(&f, &v, 0.5, &rule, &plan).unwrap());
        });
    }
    g.finish();
    set_execution(Execution::Parallel);
}

criterion_group!(benches, heat, poisson);
criterion_main!(benches);
