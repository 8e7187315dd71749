//! Toolkit for grant-free uplink access over a shared adder channel.
//!
//! Users signal their identity by transmitting a short binary signature;
//! concurrent transmissions superpose on the channel and a single-pass
//! receiver recovers the set of active messages without any scheduling
//! handshake. The crate covers the whole chain:
//!
//! * [`galois`]: finite-field arithmetic backing the signature
//!   construction.
//! * [`signatures`]: parity-check signature codes whose subset sums are
//!   unique up to a design capability, plus constant-amplitude
//!   zero-autocorrelation preamble sequences.
//! * [`phy`]: BPSK superposition, AWGN, Eb/N0 calibration and per-chip
//!   multiplicity estimation, with an optional convolutional outer code.
//! * [`detectors`]: syndrome-domain set decoding, joint activity
//!   detection and exact maximum-likelihood search.
//! * [`neural`]: an autoencoder alternative that learns signatures and
//!   the detector jointly.
//! * [`multilayer`]: power-domain layering with successive interference
//!   cancellation on top of the signature layer.
//! * [`sysim`]: cell-level simulation of contention on shared resource
//!   pools.
//! * [`sweep`]: reproducible Monte Carlo curves with confidence
//!   intervals, and [`cli`] exposing the whole toolkit as subcommands.

pub mod cli;
pub mod config;
pub mod detectors;
pub mod galois;
pub mod multilayer;
pub mod neural;
pub mod phy;
pub mod plot;
pub mod rng;
pub mod signatures;
pub mod sweep;
pub mod sysim;

#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }

    chapter!(introduction, "../../../book/src/introduction.md");
    chapter!(fields, "../../../book/src/fields.md");
    chapter!(signatures, "../../../book/src/signatures.md");
    chapter!(channel, "../../../book/src/channel.md");
    chapter!(detectors, "../../../book/src/detectors.md");
    chapter!(autoencoder, "../../../book/src/autoencoder.md");
    chapter!(multilayer, "../../../book/src/multilayer.md");
    chapter!(system, "../../../book/src/system.md");
    chapter!(cli, "../../../book/src/cli.md");
}
