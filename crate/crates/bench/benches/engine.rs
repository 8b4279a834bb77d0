use aeroflex::analysis::{cantilever_model, eigen_modes_of, gust_state_indices, linearize, structural_basis};
use aeroflex::beam::{modal_frequencies, static_solve, BeamMesh, StaticOptions, UniformLoad};
use aeroflex::coupled::newmark_newton_step;
use aeroflex::rigid::RigidState;
use aeroflex::{RunConfig, SolverSettings};
use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::Vector3;
use std::hint::black_box;

fn baseline_mesh(cfg: &RunConfig) -> BeamMesh {
    let a = &cfg.aircraft;
    BeamMesh::cantilever(a.semi_span, a.elements_per_side + 1, &a.section()).unwrap()
}

fn modal(c: &mut Criterion) {
    let cfg = RunConfig::default();
    let mesh = baseline_mesh(&cfg);
    c.bench_function("modal_frequencies_50_elements", |b| {
        b.iter(|| modal_frequencies(black_box(&mesh), 1.0, 5).unwrap())
    });
}

fn static_nonlinear(c: &mut Criterion) {
    let cfg = RunConfig::default();
    let mesh = baseline_mesh(&cfg);
    let load = UniformLoad {
        force: Vector3::new(0.0, 0.0, -12.0),
        follower: false,
    };
    c.bench_function("static_solve_12_N_per_m", |b| {
        b.iter(|| static_solve(black_box(&mesh), &load, 1.0, &StaticOptions::default()).unwrap())
    });
}

fn flutter_point(c: &mut Criterion) {
    let cfg = RunConfig::default();
    let model = cantilever_model(&cfg, 1.0, 30.0, 0.0, false).unwrap();
    let rest = model.rest_snapshot(&RigidState::default());
    let eq = model.static_equilibrium(&rest, &Default::default()).unwrap();
    let (_, phi) = structural_basis(&model, &eq, cfg.analysis.flutter.n_modes).unwrap();
    let drop = gust_state_indices(&model);
    c.bench_function("flutter_stability_point", |b| {
        b.iter(|| {
            let lin = linearize(black_box(&model), &eq).unwrap();
            let ss = lin.state_space(Some(&phi), &drop).unwrap();
            eigen_modes_of(&ss).unwrap()
        })
    });
}

fn newmark_step(c: &mut Criterion) {
    let cfg = RunConfig::default();
    let mut model = cantilever_model(&cfg, 1.0, 25.0, 0.05, true).unwrap();
    model.gust = cfg.gust.clone();
    let rest = model.rest_snapshot(&RigidState::default());
    let mut eq = model.static_equilibrium(&rest, &Default::default()).unwrap();
    model.consistent_rates(&mut eq, 0.0).unwrap();
    let settings = SolverSettings::default();
    // inside the gust, where every step needs Newton iterations
    let t = cfg.gust.t0 + 0.3;
    c.bench_function("newmark_newton_step_in_gust", |b| {
        b.iter(|| newmark_newton_step(black_box(&model), &eq, t, &settings).unwrap())
    });
}

criterion_group!(benches, modal, static_nonlinear, flutter_point, newmark_step);
criterion_main!(benches);
