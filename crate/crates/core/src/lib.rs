//! Simulation and post-processing for a short free-space BB84 link.
//!
//! [`pipeline::run_once`] drives one run end to end: photon simulation,
//! clock recovery, sifting, LDPC reconciliation, privacy amplification and
//! one-time-pad bookkeeping. [`sweep`] runs many of them and writes CSV.

pub mod params;
pub mod photonics;
pub mod seed;
pub mod sync;
pub mod bits;
pub mod channel;
pub mod sifting;
pub mod reconcile;
pub mod privacy;
pub mod rate_model;
pub mod otp;
pub mod pipeline;
pub mod sweep;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/photonics.md")]
    mod photonics {}
    #[doc = include_str!("../../../book/src/sync.md")]
    mod sync {}
    #[doc = include_str!("../../../book/src/sifting.md")]
    mod sifting {}
    #[doc = include_str!("../../../book/src/reconciliation.md")]
    mod reconciliation {}
    #[doc = include_str!("../../../book/src/privacy.md")]
    mod privacy {}
    #[doc = include_str!("../../../book/src/rate-model.md")]
    mod rate_model {}
    #[doc = include_str!("../../../book/src/otp.md")]
    mod otp {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
