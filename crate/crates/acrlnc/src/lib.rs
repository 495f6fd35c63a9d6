//! Adaptive causal random linear network coding (RLNC) for multipath and
//! multi-hop erasure networks with delayed feedback.
//!
//! The crate bundles four things:
//!
//! - the joint multipath sender/receiver state machines (a-priori FEC,
//!   feedback-triggered FEC, window size limit, degrees-of-freedom tracking,
//!   bit-filling path allocation) in [`protocol`] and [`allocation`],
//! - multi-hop machinery (natural path matching, intermediate-node recoding
//!   with selective mixing, forwarding) in [`multihop`],
//! - baselines (selective-repeat ARQ end-to-end and hop-by-hop, the
//!   single-path coded protocol run independently per path) in [`baselines`],
//! - closed-form throughput/delay bounds in [`analysis`], and a slotted
//!   discrete-event simulator in [`sim`] with measurement in [`metrics`].
//!
//! The `examples/` directory holds one runnable program per capability; the
//! thin `acrlnc` binary drives config-file experiments (see the README).

pub mod allocation;
pub mod analysis;
pub mod baselines;
pub mod coding;
pub mod config;
pub mod gf256;
pub mod metrics;
pub mod multihop;
pub mod network;
pub mod protocol;
pub mod report;
pub mod sim;

pub use config::ExperimentConfig;
pub use gf256::Gf256;

/// Stable 64-bit seed derivation so every run, sweep cell and iteration gets
/// an independent, reproducible stream.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    // splitmix64 over the chained inputs
    let mut z = base.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mix = |mut v: u64| {
        v = (v ^ (v >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        v = (v ^ (v >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        v ^ (v >> 31)
    };
    z = mix(z);
    for &p in parts {
        z = mix(z ^ p.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1));
    }
    z
}
