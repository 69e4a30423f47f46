//! Secrecy-rate beamforming for RIS-aided multi-antenna links whose
//! transceivers add signal-dependent distortion.
//!
//! The optimizer alternates a conic beamformer step ([`active`]) with a
//! semidefinite-relaxation step for the RIS phases ([`passive`]), driven by
//! [`ao`]. [`bench`] runs sweeps and writes CSV, [`validate`] holds the
//! oracle suites. The guide in `book/` walks through each piece.

pub mod active;
pub mod ao;
pub mod bench;
pub mod channel;
pub mod config;
pub mod conic;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod passive;
pub mod rng;
pub mod validate;

pub use error::{Error, Result};

#[cfg(test)]
mod testutil;

// The guide's code blocks run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/scenario.md")]
    mod scenario {}
    #[doc = include_str!("../../../book/src/rates.md")]
    mod rates {}
    #[doc = include_str!("../../../book/src/conic.md")]
    mod conic {}
    #[doc = include_str!("../../../book/src/beamformer.md")]
    mod beamformer {}
    #[doc = include_str!("../../../book/src/reflection.md")]
    mod reflection {}
    #[doc = include_str!("../../../book/src/alternating.md")]
    mod alternating {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
