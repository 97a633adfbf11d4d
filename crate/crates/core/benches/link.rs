//! Sequential vs rayon Monte-Carlo execution of the link simulation and of
//! the IM3 correction sweep.
//!
//! Frames are shortened to two OFDM symbols so one iteration stays well
//! under a second; the frame count is what the parallel path spreads over.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use fdsic_core::blocks::AmpSpec;
use fdsic_core::chain::{run_full_link_with, run_im3_correction_experiment, ChainConfig, Im3Probe};
use fdsic_core::exec::Execution;
use fdsic_core::waveform::OfdmConfig;

const POLICIES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn bench_link(c: &mut Criterion) {
    let mut group = c.benchmark_group("full_link");
    group.sample_size(10);
    for frames in [4usize, 8] {
        let mut cfg = ChainConfig::link_figure();
        cfg.ofdm.n_symbols = 2;
        cfg.monte_carlo.n_frames = frames;
        for (name, exec) in POLICIES {
            group.bench_with_input(BenchmarkId::new(name, frames), &cfg, |b, cfg| {
                b.iter(|| run_full_link_with(black_box(cfg), exec).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_im3_sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("im3_sweep");
    group.sample_size(10);
    let cfg = OfdmConfig {
        n_symbols: 2,
        ..Default::default()
    };
    let amp = AmpSpec::polynomial(20.0, -7.0);
    let sweep: Vec<f64> = (0..16).map(|i| -60.0 + 2.0 * i as f64).collect();
    for (name, exec) in POLICIES {
        group.bench_function(name, |b| {
            b.iter(|| {
                run_im3_correction_experiment(
                    &cfg,
                    &amp,
                    black_box(&sweep),
                    1,
                    Im3Probe::Ofdm,
                    exec,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_link, bench_im3_sweep);
criterion_main!(benches);
