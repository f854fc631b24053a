use criterion::{criterion_group, criterion_main, Criterion};
use hrflow::flow::{rhs, stability_bound, step};
use hrflow::scenario::{build_initial, parse_config};
use hrflow::{FlowState, Grid};

const SCENARIO: &str = r#"
n = 64
t_end = 1.0
alpha = 5.0

[u]
preset = "random_smooth"
amplitude = 0.3
seed = 1

[phi]
preset = "random_smooth"
seed = 2
"#;

fn initial() -> FlowState {
    build_initial(&parse_config(SCENARIO).expect("valid scenario")).expect("valid initial data")
}

fn bench_fft(c: &mut Criterion) {
    let grid = Grid::new(64).expect("grid");
    let f = grid.sample(|x, y| (6.0 * x).sin() * (4.0 * y).cos());
    c.bench_function("forward_inverse_64", |b| {
        b.iter(|| grid.inverse(&grid.forward(&f.values)))
    });
}

fn bench_rhs(c: &mut Criterion) {
    let state = initial();
    c.bench_function("rhs_64", |b| b.iter(|| rhs(&state).expect("rhs")));
}

fn bench_step(c: &mut Criterion) {
    let state = initial();
    let dt = stability_bound(&state, 0.4);
    c.bench_function("rk4_step_64", |b| b.iter(|| step(&state, dt).expect("step")));
}

criterion_group!(benches, bench_fft, bench_rhs, bench_step);
criterion_main!(benches);
