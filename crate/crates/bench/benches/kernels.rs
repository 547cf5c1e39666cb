use criterion::{black_box, criterion_group, criterion_main, Criterion};

use pilotwave_core::params::{PhysParams, RoundSettings, Sign};
use pilotwave_core::physics::{density, velocity_pair, wavefunction};
use pilotwave_core::protocol::{run_round, SessionConfig};
use pilotwave_core::trajectories::{integrate, InitialPositions};

fn physics_kernels(c: &mut Criterion) {
    let p = PhysParams::strong_field();
    c.bench_function("velocity_pair", |b| {
        b.iter(|| velocity_pair(black_box(0.3), black_box(-0.4), black_box(1.2), &p, Sign::Plus))
    });
    c.bench_function("density", |b| {
        b.iter(|| density(black_box(0.3), black_box(-0.4), black_box(1.2), &p, Sign::Plus))
    });
    c.bench_function("wavefunction", |b| {
        b.iter(|| wavefunction(black_box(0.3), black_box(-0.4), black_box(1.2), &p, Sign::Plus))
    });
}

fn trajectory_integration(c: &mut Criterion) {
    let p = PhysParams::strong_field();
    let initial = InitialPositions {
        z10: 0.31,
        z20: 0.4,
    };
    c.bench_function("rk4_trajectory_t5_dt1e-3", |b| {
        b.iter(|| {
            integrate(
                black_box(initial),
                RoundSettings::aligned(Sign::Plus),
                &p,
                5.0,
                1e-3,
            )
            .unwrap()
        })
    });
}

fn protocol_round(c: &mut Criterion) {
    let cfg = SessionConfig::default();
    c.bench_function("run_round_sign_law", |b| {
        let mut i = 0u64;
        b.iter(|| {
            i += 1;
            run_round(black_box(i), &cfg, 42).unwrap()
        })
    });
}

criterion_group!(benches, physics_kernels, trajectory_integration, protocol_round);
criterion_main!(benches);
