use criterion::{criterion_group, criterion_main, Criterion};
use modelcg::harness::regression::{build_linearization, generate_regression_data, RegressionParams, RegressionProblem};
use modelcg::inner::{pdhg_solve, PdhgSettings, PiecewiseLinearSubproblem};
use modelcg::{mcgm_solve, DenseVector, LineSearchParams, SolverConfig};
use std::hint::black_box;

fn pdhg(c: &mut Criterion) {
    let data = generate_regression_data(&RegressionParams::desk(1)).unwrap();
    let problem = RegressionProblem::new(&data).unwrap();
    let u = problem.default_start();
    let p = data.params.p;
    let (k, yd) = build_linearization(&data, &u).unwrap();
    let mut hi = vec![data.params.a_max; p];
    hi.extend(std::iter::repeat_n(data.params.b_max, p));
    let sub = PiecewiseLinearSubproblem::new(
        k,
        yd,
        data.params.mu,
        0..p,
        DenseVector::zeros(2 * p),
        DenseVector::from_vec(hi),
        None,
    )
    .unwrap();
    let settings = PdhgSettings { tolerance: 1e-6, ..PdhgSettings::default() };
    let mut group = c.benchmark_group("pdhg");
    group.sample_size(20);
    group.bench_function("desk_subproblem_cold", |b| b.iter(|| pdhg_solve(black_box(&sub), None, &settings).unwrap()));
    let warm = pdhg_solve(&sub, None, &settings).unwrap().state;
    group.bench_function("desk_subproblem_warm", |b| {
        b.iter(|| pdhg_solve(black_box(&sub), Some(&warm), &settings).unwrap())
    });
    group.finish();
}

fn mcgm(c: &mut Criterion) {
    let data = generate_regression_data(&RegressionParams::desk(2)).unwrap();
    let problem = RegressionProblem::new(&data).unwrap();
    let x0 = problem.default_start();
    let cfg = SolverConfig { max_iterations: 50, ..SolverConfig::default() };
    let mut group = c.benchmark_group("mcgm");
    group.sample_size(10);
    group.bench_function("desk_50_iterations", |b| {
        b.iter(|| mcgm_solve(&problem.oracle, &problem.set, black_box(&x0), &LineSearchParams::default(), &cfg).unwrap())
    });
    group.finish();
}

criterion_group!(benches, pdhg, mcgm);
criterion_main!(benches);
