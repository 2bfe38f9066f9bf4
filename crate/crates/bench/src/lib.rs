//! Shared fixtures for the benchmarks.

use lesionloc::synthgen::{gen_case, SynthParams, SyntheticCase};

/// A synthetic case at the default research geometry (96 x 96 x 24).
pub fn small_case(seed: u64) -> SyntheticCase {
    gen_case(&SynthParams { seed, ..SynthParams::default() }, 0).expect("default parameters are feasible")
}

/// A synthetic case at full in-plane resolution (256 x 256 x 30).
pub fn large_case(seed: u64) -> SyntheticCase {
    let params = SynthParams {
        dims: [256, 256, 30],
        spacing: [0.25, 0.25, 3.0],
        seed,
        ..SynthParams::default()
    };
    gen_case(&params, 0).expect("large parameters are feasible")
}
