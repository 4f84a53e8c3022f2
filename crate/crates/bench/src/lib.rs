//! Shared fixtures for the benchmarks.

use kd_core::corpus::{generate_synthetic, prepare, PrepareOptions, PreparedData, SynthConfig};

/// The noisy five-class synthetic benchmark, prepared with default options.
pub fn benchmark_data(seed: u64) -> PreparedData {
    let corpus = generate_synthetic(&SynthConfig {
        classes: 5,
        n_per_class: 200,
        noise_rate: 0.2,
        seed,
        ..SynthConfig::default()
    })
    .expect("synthetic corpus");
    prepare(corpus.examples, &corpus.labels, &PrepareOptions { seed, ..Default::default() }).expect("prepare")
}
