//! Shared fixtures for the benchmarks.

use mcdecomp_core::{generate_replication, standard_design, GroupedDesign, MultichannelData, ScenarioConfig};

/// The standard n = 256, K = 3 design and one Scenario 1 replication at SNR 1.5.
pub fn scenario_one() -> (GroupedDesign, MultichannelData) {
    let design = standard_design(256, 3).expect("standard design");
    let config = ScenarioConfig { scenario: 1, snr: 1.5, ..Default::default() };
    let ds = generate_replication(&config, &design, 0).expect("replication");
    (design, ds.data)
}
