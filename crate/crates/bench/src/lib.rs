//! Shared fixtures for the reduction benchmarks.

use sobt_core::{make_offset_pair, sample_model, synth_msd_chain, FrequencySampleSet};

/// Frequency samples of the stiff 50-node chain used across the benchmarks.
/// The stiffness puts the pole curve ends inside the band so both the dense
/// and the Krylov pipeline operate in their intended regime.
pub fn chain_samples(nu: usize) -> FrequencySampleSet {
    let n = 50;
    let sys = synth_msd_chain(n, &vec![1.0; n], &vec![2.5e4; n], 0.05, 0.05, 0, 0)
        .expect("valid chain");
    let (p_rule, q_rule) = make_offset_pair(1e-2, 1e4, nu).expect("valid band");
    sample_model(&sys, &p_rule, &q_rule).expect("sampling succeeds")
}
