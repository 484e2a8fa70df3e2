//! Shared fixtures for the benchmarks in `benches/`.

use eprb_core::{EventLog, SimConfig, Simulation};

/// A Case I run with `pairs` pairs, τ = W = 0.01 and a 30-unit emission
/// spacing, so every pairing procedure applies.
pub fn config(pairs: u64) -> SimConfig {
    SimConfig {
        num_pairs: pairs,
        tag_resolution: 0.01,
        window: 0.01,
        emission_spacing: 30.0,
        ..SimConfig::default()
    }
}

pub fn logs(pairs: u64) -> (EventLog, EventLog) {
    Simulation::new(config(pairs))
        .expect("fixture config is valid")
        .generate_logs()
}
