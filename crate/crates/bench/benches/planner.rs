use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use overtake_bench::{scenario_qp, trained_gp};
use overtake_core::gp::sample_tv_trajectories;
use overtake_core::{run_scenario, solve_qp, QpSettings, ScenarioConfig};

fn qp_solve(c: &mut Criterion) {
    let qp = scenario_qp().qp;
    let settings = QpSettings::default();
    c.bench_function("solve_qp scenario horizon", |b| {
        b.iter(|| solve_qp(black_box(&qp), &settings))
    });
}

fn gp_sampling(c: &mut Criterion) {
    let cfg = ScenarioConfig::paper_scenario();
    let model = trained_gp(100);
    let plan = vec![cfg.ev_initial(); cfg.sim.horizon];
    let tv0 = cfg.tv_initial();
    c.bench_function("sample 20 TV trajectories (100 points)", |b| {
        b.iter(|| {
            sample_tv_trajectories(&model, &plan, &tv0, 20, cfg.sim.horizon, 7, false).unwrap()
        })
    });
}

fn closed_loop(c: &mut Criterion) {
    let mut cfg = ScenarioConfig::paper_scenario();
    cfg.sim.max_steps = 20;
    let mut group = c.benchmark_group("closed loop");
    group.sample_size(10);
    group.bench_function("20 steps", |b| {
        b.iter(|| run_scenario(black_box(&cfg), 0).unwrap())
    });
    group.finish();
}

criterion_group!(benches, qp_solve, gp_sampling, closed_loop);
criterion_main!(benches);
