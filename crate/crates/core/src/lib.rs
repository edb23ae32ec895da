//! Robust multi-user direction-of-arrival estimation for Rydberg atomic
//! receiver arrays.
//!
//! The receiver observes only field magnitudes. Channels are recovered per
//! sensor by alternating phase retrieval, with either a quadratic (ℓ₂)
//! amplitude step or an ℓ₁ step solved by iteratively reweighted least
//! squares, and DoAs are read off a MUSIC pseudo-spectrum of the recovered
//! channel matrix. [`experiments`] runs the Monte-Carlo comparisons and
//! [`cli`] is the `rydoa` front end.
//!
//! All numerical code is generic over [`Real`]; the `*64` aliases below fix
//! the scalar to `f64`.

// negated comparisons below are deliberate: they reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod doa;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod model;
pub mod ops;
pub mod retrieval;
pub mod rng;
pub mod scalar;
pub mod selftest;

pub use error::{Error, Result};
pub use scalar::{Complex, Real};

pub use doa::{AngularGrid, MusicResult};
pub use experiments::{Algorithm, SweepResult, TrialOutcome};
pub use model::{
    MeasurementSet, OutlierSpec, PhysicalConstants, Polarization, Scene, SnrConvention,
};
pub use ops::OpCounts;
pub use retrieval::{ChannelEstimate, Penalty, RetrievalConfig};

pub type Scene64 = Scene<f64>;
pub type Scene32 = Scene<f32>;
pub type MeasurementSet64 = MeasurementSet<f64>;
pub type OutlierSpec64 = OutlierSpec<f64>;
pub type PhysicalConstants64 = PhysicalConstants<f64>;
pub type RetrievalConfig64 = RetrievalConfig<f64>;
pub type RetrievalConfig32 = RetrievalConfig<f32>;
pub type ChannelEstimate64 = ChannelEstimate<f64>;
pub type AngularGrid64 = AngularGrid<f64>;
pub type MusicResult64 = MusicResult<f64>;
pub type SweepResult64 = SweepResult<f64>;
